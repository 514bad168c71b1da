// SPDX-License-Identifier: Apache-2.0
//
// Policy-gradient fine-tuning of the rewrite policy against the scorer
// suite: clipped-surrogate PPO with a learned value baseline, a frozen copy
// of the warm-start policy as the log-ratio reference, and per-token shaping
//   r_t = -eta * (log pi(y_t) - log pi_ref(y_t)),   r_last += f_aes + f_rel.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptrl/corpus.hpp"
#include "promptrl/decode.hpp"
#include "promptrl/model.hpp"
#include "promptrl/optim.hpp"
#include "promptrl/reward.hpp"

namespace promptrl {

struct PPOConfig {
  int episodes_total = 12000;
  int batch_size = 512;           // episodes per PPO batch
  int ppo_epochs = 4;             // optimization passes over each batch
  int minibatches_per_batch = 1;  // splits of the batch within one pass
  double learning_rate = 5e-5;
  double clip_epsilon = 0.2;
  double value_loss_coefficient = 2.3;
  double kl_coefficient = 0.2;
  double discount = 1.0;
  double gae_lambda = 0.95;
  bool normalize_advantages = true;
  double grad_clip = 1.0;
  uint64_t seed = 0;
  void validate() const;

  friend bool operator==(const PPOConfig&, const PPOConfig&) = default;
};

// One sampled rewrite with everything the update step needs.
struct Episode {
  std::string user_prompt;
  std::string response_text;
  std::vector<int> query;             // <bos> prompt rephrase :
  std::vector<int> response;          // generated tokens, <eos> included
  std::vector<double> behavior_logp;  // per response token, at collection time
  std::vector<double> values;         // baseline V(s_t) per response position
  std::vector<double> rewards;        // per-token shaped reward
  RewardBreakdown breakdown;
};

// GAE(discount, lambda) with V(terminal) = 0.
struct AdvantageResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantage + value, the regression target
};
AdvantageResult compute_advantages(std::span<const double> rewards,
                                   std::span<const double> values, double discount,
                                   double lambda);

struct CollectStats {
  int collected = 0;
  int dropped = 0;  // scorer unavailable; episode resampled
};

// Samples prompts from the pool, decodes candidate rewrites with diverse
// beam search (randomized target length), picks one candidate uniformly, and
// scores it. Episodes whose scorer call fails are dropped and resampled, up
// to a bounded number of attempts.
std::vector<Episode> collect_episodes(PolicyModel& policy, const PolicyModel& reference,
                                      const ValueModel& value, const PromptPool& pool,
                                      const ScorerSuite& suite, const PPOConfig& cfg,
                                      const DecodeConfig& decode_cfg, int count, Rng& rng,
                                      CollectStats* stats = nullptr);

struct PPOUpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_kl = 0.0;        // mean(behavior_logp - current logp)
  double clip_fraction = 0.0;  // tokens whose ratio left the clip box
};

// ppo_epochs passes of clipped-surrogate policy updates and value regression
// over the batch. The two models use separate optimizers; the value loss is
// scaled by value_loss_coefficient.
PPOUpdateStats ppo_update(PolicyModel& policy, ValueModel& value,
                          AdamOptimizer& policy_opt, AdamOptimizer& value_opt,
                          const std::vector<Episode>& batch, const PPOConfig& cfg);

struct RLResult {
  std::string policy_checkpoint;  // final policy, full path
  std::string value_checkpoint;
  int episodes_run = 0;
  int episodes_dropped = 0;
  double final_mean_reward = 0.0;
};

// Full RL loop: loads the warm-start policy, freezes a reference copy,
// builds the value model from the policy, then alternates collection and
// update until episodes_total. Writes per-batch metrics to rl_log.jsonl and
// checkpoints into run_dir. A run directory holding rl_state.json resumes
// after its last completed batch (optimizer moments restart; the per-batch
// episode streams are unchanged). episodes_total = 0 saves the warm-start
// weights untouched.
RLResult train_rl(const std::string& sft_checkpoint, const PromptPool& pool,
                  const ScorerSuite& suite, const PPOConfig& cfg,
                  const DecodeConfig& decode_cfg, const std::string& run_dir);

}  // namespace promptrl
