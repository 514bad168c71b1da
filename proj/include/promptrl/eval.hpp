// SPDX-License-Identifier: Apache-2.0
//
// Evaluation harness: reward comparison of prompt variants over tagged
// prompt pools, and export of blind-labeled image bundles for external
// human rating. The evaluation reward is relevance + aesthetic only; the
// policy KL term is excluded so variants without a policy (raw input,
// hand-engineered prompts) stay comparable on the same scale.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptrl/corpus.hpp"
#include "promptrl/decode.hpp"
#include "promptrl/model.hpp"
#include "promptrl/reward.hpp"

namespace promptrl {

// Canonical variant names, in report order.
inline constexpr const char* kVariantUserInput = "user_input";
inline constexpr const char* kVariantEngineered = "engineered";
inline constexpr const char* kVariantSft = "sft_optimized";
inline constexpr const char* kVariantRl = "rl_optimized";

std::string_view pool_domain_name(PoolDomain domain);

struct EvalCheckpoints {
  std::string sft;  // supervised checkpoint path
  std::string rl;   // RL checkpoint path
};

// One variant of one input, with its image-quality reward.
struct PromptScore {
  std::string variant;
  std::string prompt;  // the text actually imaged (y)
  double relevance = 0.0;
  double aesthetic = 0.0;
  double reward = 0.0;  // relevance + aesthetic
};

struct PromptEvaluation {
  std::string input;  // original user prompt (x)
  std::vector<PromptScore> scores;
};

struct VariantAggregate {
  int prompts = 0;
  double mean_relevance = 0.0;
  double mean_aesthetic = 0.0;
  double mean_reward = 0.0;
};

struct SplitReport {
  PoolDomain domain = PoolDomain::kInDomain;
  std::string name;
  std::vector<PromptEvaluation> prompts;
  std::map<std::string, VariantAggregate> variants;
  double sft_mean_reward = 0.0;
  double rl_mean_reward = 0.0;
  // (rl - sft) / |sft|; absent when the SFT mean is exactly zero.
  std::optional<double> relative_gain;
};

struct EvalReport {
  uint64_t seed = 0;
  int images_per_prompt = 0;
  std::vector<SplitReport> splits;
};

// One optimized prompt for a raw input: rewrite query -> beam search -> text.
std::string optimize_prompt(const PolicyModel& model, const std::string& input,
                            const DecodeConfig& cfg);

// Scores every pool under four variants (user input, engineered where the
// pool carries one, and the two checkpoints' beam-search outputs). Image
// seeds derive from the prompt text, so pool order cannot change any
// per-prompt number.
EvalReport evaluate(const PolicyModel& sft_model, const PolicyModel& rl_model,
                    const std::vector<PromptPool>& pools, const ScorerSuite& suite,
                    const DecodeConfig& decode_cfg, uint64_t seed = 0);
EvalReport evaluate(const EvalCheckpoints& checkpoints,
                    const std::vector<PromptPool>& pools, const ScorerSuite& suite,
                    const DecodeConfig& decode_cfg, uint64_t seed = 0);

// Human-readable table with the KL-exclusion note in the header.
std::string render_text_report(const EvalReport& report);
// Machine-readable form: splits -> variants -> aggregates plus per-prompt rows.
nlohmann::json report_to_json(const EvalReport& report);
// Writes eval_report.txt and eval_report.json into `dir`.
void write_report(const EvalReport& report, const std::string& dir);

// One side-by-side comparison for blind rating: two prompt texts whose
// rendered images are shown to raters under anonymous group labels.
struct BundleRequest {
  std::string input;  // original user prompt, shown to raters for context
  std::string left_variant;
  std::string left_prompt;
  std::string right_variant;
  std::string right_prompt;
};

struct HumanEvalBundle {
  std::string manifest_path;  // blind: group labels only, no variant names
  std::string escrow_path;    // key file decoding group label -> variant
  int images_written = 0;
};

// Renders images_per_prompt images per side per request and writes them under
// out_dir/images, with the left/right-to-A/B assignment shuffled per item by
// `seed`. Requires a pixel-producing generator; the embedding-only synthetic
// backend raises UnsupportedOperationError.
HumanEvalBundle export_human_eval_bundle(const std::vector<BundleRequest>& requests,
                                         const ScorerSuite& suite,
                                         const std::string& out_dir, uint64_t seed);

}  // namespace promptrl
