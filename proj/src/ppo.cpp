// SPDX-License-Identifier: Apache-2.0
#include "promptrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "promptrl/checkpoint.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/io.hpp"
#include "promptrl/sft.hpp"

namespace promptrl {

void PPOConfig::validate() const {
  if (episodes_total < 0) throw ConfigError("ppo: episodes_total must be non-negative");
  if (batch_size < 1) throw ConfigError("ppo: batch_size must be positive");
  if (ppo_epochs < 1) throw ConfigError("ppo: ppo_epochs must be positive");
  if (minibatches_per_batch < 1)
    throw ConfigError("ppo: minibatches_per_batch must be positive");
  if (learning_rate <= 0) throw ConfigError("ppo: learning_rate must be positive");
  if (clip_epsilon <= 0 || clip_epsilon >= 1)
    throw ConfigError("ppo: clip_epsilon must lie in (0, 1)");
  if (value_loss_coefficient < 0)
    throw ConfigError("ppo: value_loss_coefficient must be non-negative");
  if (kl_coefficient < 0) throw ConfigError("ppo: kl_coefficient must be non-negative");
  if (discount < 0 || discount > 1) throw ConfigError("ppo: discount must lie in [0, 1]");
  if (gae_lambda < 0 || gae_lambda > 1)
    throw ConfigError("ppo: gae_lambda must lie in [0, 1]");
}

AdvantageResult compute_advantages(std::span<const double> rewards,
                                   std::span<const double> values, double discount,
                                   double lambda) {
  if (rewards.empty()) throw InvalidInputError("gae: empty reward sequence");
  if (rewards.size() != values.size())
    throw InvalidInputError("gae: rewards and values disagree on length");
  const int T = static_cast<int>(rewards.size());
  AdvantageResult out;
  out.advantages.assign(T, 0.0);
  out.returns.assign(T, 0.0);
  double running = 0.0;
  for (int t = T - 1; t >= 0; --t) {
    const double next_value = t + 1 < T ? values[t + 1] : 0.0;
    const double delta = rewards[t] + discount * next_value - values[t];
    running = delta + discount * lambda * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
  }
  return out;
}

std::vector<Episode> collect_episodes(PolicyModel& policy, const PolicyModel& reference,
                                      const ValueModel& value, const PromptPool& pool,
                                      const ScorerSuite& suite, const PPOConfig& cfg,
                                      const DecodeConfig& decode_cfg, int count, Rng& rng,
                                      CollectStats* stats) {
  if (pool.entries.empty()) throw ConfigError("ppo: prompt pool is empty");
  decode_cfg.validate();
  CollectStats local;
  std::vector<Episode> episodes;
  episodes.reserve(count);
  const int max_attempts = count * 20 + 100;
  int attempts = 0;
  while (static_cast<int>(episodes.size()) < count) {
    if (++attempts > max_attempts)
      throw TrainingError("ppo: episode collection starved by scorer failures");
    const PoolEntry& entry = pool.entries[rng.uniform_int(
        0, static_cast<int64_t>(pool.entries.size()) - 1)];

    DecodeConfig dc = decode_cfg;
    if (dc.randomize_length) {
      dc.max_length = draw_max_length(rng, dc.random_min, dc.random_max);
      dc.randomize_length = false;
    }
    Episode ep;
    ep.user_prompt = entry.prompt;
    ep.query = rewrite_query(entry.prompt, policy.vocab());

    const std::vector<Hypothesis> hyps = diverse_beam_search(policy, ep.query, dc);
    const Hypothesis& pick =
        hyps[rng.uniform_int(0, static_cast<int64_t>(hyps.size()) - 1)];
    ep.response = pick.tokens;
    ep.behavior_logp = pick.token_logp;
    ep.response_text = policy.vocab().decode(ep.response);

    const uint64_t image_seed = rng.next_u64();
    try {
      ep.breakdown =
          total_reward(ep.user_prompt, ep.response_text, ep.query, ep.response, policy,
                       reference, suite, cfg.kl_coefficient, image_seed);
    } catch (const RewardUnavailableError&) {
      ++local.dropped;
      continue;
    }
    ep.values = value.value_estimates(ep.query, ep.response);

    ep.rewards.assign(ep.response.size(), 0.0);
    for (size_t t = 0; t < ep.response.size(); ++t)
      ep.rewards[t] = -cfg.kl_coefficient * ep.breakdown.kl_per_token[t];
    ep.rewards.back() += ep.breakdown.f_aes + ep.breakdown.f_rel;

    episodes.push_back(std::move(ep));
    ++local.collected;
  }
  if (stats) *stats = local;
  return episodes;
}

namespace {

struct FlatAdvantages {
  // Per-episode advantage/return vectors, normalized jointly when asked.
  std::vector<std::vector<double>> advantages;
  std::vector<std::vector<double>> returns;
};

FlatAdvantages prepare_advantages(const std::vector<Episode>& batch, const PPOConfig& cfg) {
  FlatAdvantages flat;
  flat.advantages.reserve(batch.size());
  flat.returns.reserve(batch.size());
  double sum = 0.0;
  size_t n = 0;
  for (const Episode& ep : batch) {
    AdvantageResult r =
        compute_advantages(ep.rewards, ep.values, cfg.discount, cfg.gae_lambda);
    for (double a : r.advantages) sum += a;
    n += r.advantages.size();
    flat.advantages.push_back(std::move(r.advantages));
    flat.returns.push_back(std::move(r.returns));
  }
  if (!cfg.normalize_advantages || n == 0) return flat;
  const double mean = sum / static_cast<double>(n);
  double var = 0.0;
  for (const auto& seq : flat.advantages)
    for (double a : seq) var += (a - mean) * (a - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n)) + 1e-8;
  for (auto& seq : flat.advantages)
    for (double& a : seq) a = (a - mean) / stddev;
  return flat;
}

}  // namespace

PPOUpdateStats ppo_update(PolicyModel& policy, ValueModel& value,
                          AdamOptimizer& policy_opt, AdamOptimizer& value_opt,
                          const std::vector<Episode>& batch, const PPOConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw InvalidInputError("ppo: empty batch");
  const FlatAdvantages flat = prepare_advantages(batch, cfg);

  PPOUpdateStats stats;
  size_t stat_tokens = 0;
  std::vector<size_t> order(batch.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng mb_rng(derive_seed(cfg.seed, "ppo-minibatch"));

  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    if (cfg.minibatches_per_batch > 1) mb_rng.shuffle(order);
    const size_t per_chunk =
        (order.size() + cfg.minibatches_per_batch - 1) / cfg.minibatches_per_batch;
    for (size_t begin = 0; begin < order.size(); begin += per_chunk) {
      const size_t end = std::min(begin + per_chunk, order.size());
      size_t chunk_tokens = 0;
      for (size_t k = begin; k < end; ++k) chunk_tokens += batch[order[k]].response.size();
      if (chunk_tokens == 0) continue;

      // Policy pass.
      policy_opt.zero_grad();
      double policy_loss = 0.0;
      for (size_t k = begin; k < end; ++k) {
        const Episode& ep = batch[order[k]];
        const auto& adv = flat.advantages[order[k]];
        std::vector<int> ids = ep.query;
        ids.insert(ids.end(), ep.response.begin(), ep.response.end() - 1);
        Tape tape;
        Var logits = policy.logits_graph(tape, ids);
        Var sliced = tape.rows(logits, static_cast<int>(ep.query.size()) - 1,
                               static_cast<int>(ep.response.size()));
        Var loss = tape.ppo_surrogate(sliced, ep.response, ep.behavior_logp, adv,
                                      cfg.clip_epsilon);
        const double share =
            static_cast<double>(ep.response.size()) / static_cast<double>(chunk_tokens);
        policy_loss += loss->val(0, 0) * share;
        tape.backward(tape.scale(loss, share));

        // Ratio statistics from the same forward pass.
        for (size_t t = 0; t < ep.response.size(); ++t) {
          const double new_logp = log_softmax_at(
              sliced->val.row(static_cast<int>(t)), sliced->val.cols, ep.response[t]);
          const double ratio = std::exp(new_logp - ep.behavior_logp[t]);
          stats.mean_kl += ep.behavior_logp[t] - new_logp;
          if (ratio < 1.0 - cfg.clip_epsilon || ratio > 1.0 + cfg.clip_epsilon)
            stats.clip_fraction += 1.0;
          ++stat_tokens;
        }
      }
      if (!std::isfinite(policy_loss))
        throw TrainingError("ppo: non-finite policy loss; aborting the run");
      stats.policy_loss += policy_loss / cfg.ppo_epochs;
      policy_opt.step();

      // Value pass.
      value_opt.zero_grad();
      double value_loss = 0.0;
      for (size_t k = begin; k < end; ++k) {
        const Episode& ep = batch[order[k]];
        const auto& ret = flat.returns[order[k]];
        std::vector<int> ids = ep.query;
        ids.insert(ids.end(), ep.response.begin(), ep.response.end() - 1);
        Tape tape;
        Var values = value.values_graph(tape, ids);
        Var loss = tape.mse_from(values, ret, static_cast<int>(ep.query.size()) - 1);
        const double share =
            static_cast<double>(ep.response.size()) / static_cast<double>(chunk_tokens);
        value_loss += loss->val(0, 0) * share;
        tape.backward(tape.scale(loss, cfg.value_loss_coefficient * share));
      }
      if (!std::isfinite(value_loss))
        throw TrainingError("ppo: non-finite value loss; aborting the run");
      stats.value_loss += value_loss / cfg.ppo_epochs;
      value_opt.step();
    }
  }
  if (stat_tokens > 0) {
    stats.mean_kl /= static_cast<double>(stat_tokens);
    stats.clip_fraction /= static_cast<double>(stat_tokens);
  }
  return stats;
}

namespace {

std::string batch_checkpoint(const char* prefix, int batch) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_batch_%04d.ckpt", prefix, batch);
  return buf;
}

}  // namespace

RLResult train_rl(const std::string& sft_checkpoint, const PromptPool& pool,
                  const ScorerSuite& suite, const PPOConfig& cfg,
                  const DecodeConfig& decode_cfg, const std::string& run_dir) {
  cfg.validate();
  decode_cfg.validate();
  const std::filesystem::path dir(run_dir);
  std::filesystem::create_directories(dir);

  PolicyModel policy = load_policy(sft_checkpoint);
  const PolicyModel reference = policy.clone_frozen();
  ValueModel value = ValueModel::from_policy(policy);

  RLResult result;
  const int batches = (cfg.episodes_total + cfg.batch_size - 1) / cfg.batch_size;
  int start_batch = 0;
  // Resume from the last completed batch if this run directory has one.
  // Optimizer moments restart; the per-batch episode streams do not change.
  const std::filesystem::path state_path = dir / "rl_state.json";
  if (std::filesystem::exists(state_path)) {
    const nlohmann::json st = nlohmann::json::parse(read_text_file(state_path));
    start_batch = st.at("next_batch").get<int>();
    result.episodes_run = st.at("episodes_run").get<int>();
    result.episodes_dropped = st.at("episodes_dropped").get<int>();
    result.final_mean_reward = st.at("mean_reward").get<double>();
    if (start_batch > 0) {
      policy = load_policy(dir / st.at("policy_checkpoint").get<std::string>());
      value = load_value(dir / st.at("value_checkpoint").get<std::string>());
    }
  }

  AdamOptimizer policy_opt(policy.weights().all(),
                           AdamConfig{.lr = cfg.learning_rate, .grad_clip = cfg.grad_clip});
  AdamOptimizer value_opt(value.weights().all(),
                          AdamConfig{.lr = cfg.learning_rate, .grad_clip = cfg.grad_clip});

  JsonlWriter log(dir / "rl_log.jsonl");
  const uint64_t collect_stream = derive_seed(cfg.seed, "rl-collect");
  for (int batch_idx = start_batch; batch_idx < batches; ++batch_idx) {
    const int want = std::min(cfg.batch_size, cfg.episodes_total - result.episodes_run);
    Rng rng(derive_seed(collect_stream, static_cast<uint64_t>(batch_idx)));
    CollectStats cstats;
    std::vector<Episode> batch = collect_episodes(policy, reference, value, pool, suite,
                                                  cfg, decode_cfg, want, rng, &cstats);
    double mean_reward = 0.0, mean_rel = 0.0, mean_aes = 0.0;
    for (const Episode& ep : batch) {
      mean_reward += ep.breakdown.total;
      mean_rel += ep.breakdown.f_rel;
      mean_aes += ep.breakdown.f_aes;
    }
    mean_reward /= batch.size();
    mean_rel /= batch.size();
    mean_aes /= batch.size();

    const PPOUpdateStats ustats = ppo_update(policy, value, policy_opt, value_opt, batch, cfg);
    result.episodes_run += want;
    result.episodes_dropped += cstats.dropped;
    result.final_mean_reward = mean_reward;

    const std::string pname = batch_checkpoint("policy", batch_idx);
    const std::string vname = batch_checkpoint("value", batch_idx);
    save_policy(dir / pname, policy);
    save_value(dir / vname, value);
    log.write({{"batch", batch_idx},
               {"episodes", want},
               {"dropped", cstats.dropped},
               {"mean_reward", mean_reward},
               {"mean_f_rel", mean_rel},
               {"mean_f_aes", mean_aes},
               {"mean_kl", ustats.mean_kl},
               {"clip_fraction", ustats.clip_fraction},
               {"policy_loss", ustats.policy_loss},
               {"value_loss", ustats.value_loss},
               {"policy_checkpoint", pname},
               {"value_checkpoint", vname}});
    write_text_file(state_path, nlohmann::json({{"next_batch", batch_idx + 1},
                                                {"episodes_run", result.episodes_run},
                                                {"episodes_dropped", result.episodes_dropped},
                                                {"mean_reward", mean_reward},
                                                {"policy_checkpoint", pname},
                                                {"value_checkpoint", vname}})
                                    .dump(2));
  }
  save_policy(dir / "policy_final.ckpt", policy);
  save_value(dir / "value_final.ckpt", value);
  result.policy_checkpoint = (dir / "policy_final.ckpt").string();
  result.value_checkpoint = (dir / "value_final.ckpt").string();
  return result;
}

}  // namespace promptrl
