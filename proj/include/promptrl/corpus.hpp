// SPDX-License-Identifier: Apache-2.0
//
// Builds (source, target) rewrite pairs from a list of engineered prompts.
// Every target is a human-engineered prompt; sources are degraded or
// paraphrased variants so a model trained on the pairs learns to restore the
// engineered form.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "promptrl/lexicon.hpp"
#include "promptrl/rng.hpp"

namespace promptrl {

// An engineered prompt split into its content and its trailing modifier run.
// Only the maximal trailing run of whitelisted segments counts as modifiers;
// a whitelisted phrase in the middle of the prompt stays in the content.
struct EngineeredPrompt {
  std::string raw_text;      // normalized full prompt
  std::string main_content;  // may be empty when every segment is a modifier
  std::vector<std::string> modifiers;  // original order
};

// InvalidInputError when the prompt is empty after normalization.
EngineeredPrompt split_prompt(const std::string& raw, const ModifierLexicon& lexicon);

enum class PairMethod : int {
  kTrim = 0,             // source = content only
  kDrop = 1,             // source = content + random modifier subset
  kShuffle = 2,          // source = content + permuted modifiers
  kRephraseContent = 3,  // source = paraphrased content, target = raw
  kRephraseTarget = 4,   // source = paraphrased content, target = paraphrase + modifiers
};
constexpr int kPairMethodCount = 5;

std::string method_to_string(PairMethod m);
PairMethod method_from_string(const std::string& s);  // ConfigError on unknown

struct PromptPair {
  std::string source;
  std::string target;
  PairMethod method = PairMethod::kTrim;
};

// External paraphrase backend. Receives the full templated payload and
// returns free text. Implementations may throw RewardUnavailableError; the
// corpus builder logs the failure and continues without the pair.
class Rephraser {
 public:
  virtual ~Rephraser() = default;
  virtual std::string complete(const std::string& payload) const = 0;
};

// The exact payload sent to a rephrase backend for the given input text.
std::string rephrase_payload(const std::string& input);

// Pair builders. Each returns no pair when the construction would produce an
// empty or self-identical example.
std::optional<PromptPair> make_trim_source(const EngineeredPrompt& prompt);
std::optional<PromptPair> make_perturbed_source(const EngineeredPrompt& prompt, Rng& rng);
std::vector<PromptPair> make_rephrased_pairs(const EngineeredPrompt& prompt,
                                             const Rephraser& rephraser,
                                             int* failures = nullptr);

struct CorpusStats {
  int prompts_seen = 0;
  int prompts_skipped = 0;  // empty or content-free inputs
  int rephrase_failures = 0;
  std::array<int, kPairMethodCount> per_method{};
  int pairs_total() const;
};

// All pairs for one prompt list. Perturbation draws come from a per-prompt
// stream derived from (seed, prompt index), so output is byte-deterministic.
std::vector<PromptPair> make_pairs(const std::vector<std::string>& raw_prompts,
                                   const ModifierLexicon& lexicon,
                                   const Rephraser* rephraser, uint64_t seed,
                                   CorpusStats* stats = nullptr);

// Writes pairs as JSONL rows {"method","source","target"} and returns stats.
CorpusStats build_corpus(const std::vector<std::string>& raw_prompts,
                         const ModifierLexicon& lexicon, const Rephraser* rephraser,
                         uint64_t seed, const std::string& output_path);

// Reads a pair corpus back; malformed rows are skipped and counted.
std::vector<PromptPair> load_corpus(const std::string& path, int* malformed = nullptr);

// Prompt pools used for rollouts and evaluation.
enum class PoolDomain { kInDomain, kOutOfDomain, kLabels };

struct PoolEntry {
  std::string prompt;
  std::optional<std::string> engineered;  // paired engineered form, if known
};

struct PromptPool {
  PoolDomain domain = PoolDomain::kInDomain;
  std::vector<PoolEntry> entries;

  // TSV rows: prompt [<tab> engineered]. Blank lines and '#' comments are
  // skipped; duplicate prompts (after normalization) keep the first entry.
  static PromptPool load(const std::string& path, PoolDomain domain);
};

}  // namespace promptrl
