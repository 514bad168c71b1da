// SPDX-License-Identifier: Apache-2.0
#include "promptrl/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "promptrl/errors.hpp"
#include "promptrl/io.hpp"
#include "promptrl/text.hpp"

namespace promptrl {

namespace {

std::string join_with_content(const std::string& content,
                              const std::vector<std::string>& modifiers) {
  if (modifiers.empty()) return content;
  if (content.empty()) return join_segments(modifiers);
  return content + ", " + join_segments(modifiers);
}

}  // namespace

EngineeredPrompt split_prompt(const std::string& raw, const ModifierLexicon& lexicon) {
  const std::string text = normalize_prompt(raw);
  if (text.empty()) throw InvalidInputError("empty prompt");
  const std::vector<std::string> segments = split_segments(text);
  // Maximal trailing run of whitelisted segments.
  size_t split = segments.size();
  while (split > 0 && lexicon.matches(segments[split - 1])) --split;
  EngineeredPrompt out;
  out.raw_text = text;
  out.main_content = join_segments(
      std::vector<std::string>(segments.begin(), segments.begin() + split));
  out.modifiers.assign(segments.begin() + split, segments.end());
  return out;
}

std::string method_to_string(PairMethod m) {
  switch (m) {
    case PairMethod::kTrim: return "trim";
    case PairMethod::kDrop: return "drop";
    case PairMethod::kShuffle: return "shuffle";
    case PairMethod::kRephraseContent: return "rephrase_content";
    case PairMethod::kRephraseTarget: return "rephrase_target";
  }
  throw ConfigError("unknown pair method");
}

PairMethod method_from_string(const std::string& s) {
  if (s == "trim") return PairMethod::kTrim;
  if (s == "drop") return PairMethod::kDrop;
  if (s == "shuffle") return PairMethod::kShuffle;
  if (s == "rephrase_content") return PairMethod::kRephraseContent;
  if (s == "rephrase_target") return PairMethod::kRephraseTarget;
  throw ConfigError("unknown pair method: " + s);
}

std::string rephrase_payload(const std::string& input) { return input + " Rephrase:"; }

std::optional<PromptPair> make_trim_source(const EngineeredPrompt& prompt) {
  if (prompt.modifiers.empty() || prompt.main_content.empty()) return std::nullopt;
  return PromptPair{prompt.main_content, prompt.raw_text, PairMethod::kTrim};
}

std::optional<PromptPair> make_perturbed_source(const EngineeredPrompt& prompt, Rng& rng) {
  if (prompt.modifiers.empty() || prompt.main_content.empty()) return std::nullopt;
  const bool drop = rng.bernoulli(0.5);
  if (drop) {
    std::vector<std::string> kept;
    for (int attempt = 0; attempt < 64; ++attempt) {
      kept.clear();
      for (const std::string& m : prompt.modifiers) {
        if (!rng.bernoulli(0.5)) kept.push_back(m);
      }
      if (kept.size() < prompt.modifiers.size()) break;
    }
    if (kept.size() == prompt.modifiers.size()) kept.erase(kept.begin());
    return PromptPair{join_with_content(prompt.main_content, kept), prompt.raw_text,
                      PairMethod::kDrop};
  }
  std::vector<std::string> shuffled = prompt.modifiers;
  for (int attempt = 0; attempt < 64 && shuffled == prompt.modifiers; ++attempt) {
    rng.shuffle(shuffled);
  }
  if (shuffled == prompt.modifiers) return std::nullopt;  // no distinct order exists
  return PromptPair{join_with_content(prompt.main_content, shuffled), prompt.raw_text,
                    PairMethod::kShuffle};
}

std::vector<PromptPair> make_rephrased_pairs(const EngineeredPrompt& prompt,
                                             const Rephraser& rephraser, int* failures) {
  if (prompt.main_content.empty()) return {};
  std::string paraphrase;
  try {
    paraphrase = normalize_prompt(rephraser.complete(rephrase_payload(prompt.main_content)));
  } catch (const std::exception&) {
    if (failures) ++*failures;
    return {};
  }
  if (paraphrase.empty()) {
    if (failures) ++*failures;
    return {};
  }
  std::vector<PromptPair> out;
  if (paraphrase != prompt.raw_text) {
    out.push_back({paraphrase, prompt.raw_text, PairMethod::kRephraseContent});
  }
  const std::string rebuilt = join_with_content(paraphrase, prompt.modifiers);
  if (paraphrase != rebuilt) {
    out.push_back({paraphrase, rebuilt, PairMethod::kRephraseTarget});
  }
  return out;
}

int CorpusStats::pairs_total() const {
  int total = 0;
  for (int c : per_method) total += c;
  return total;
}

std::vector<PromptPair> make_pairs(const std::vector<std::string>& raw_prompts,
                                   const ModifierLexicon& lexicon,
                                   const Rephraser* rephraser, uint64_t seed,
                                   CorpusStats* stats) {
  CorpusStats local;
  std::vector<PromptPair> pairs;
  const uint64_t stream = derive_seed(seed, "corpus-perturb");
  for (size_t i = 0; i < raw_prompts.size(); ++i) {
    EngineeredPrompt prompt;
    try {
      prompt = split_prompt(raw_prompts[i], lexicon);
    } catch (const InvalidInputError&) {
      ++local.prompts_skipped;
      continue;
    }
    if (prompt.main_content.empty()) {
      ++local.prompts_skipped;
      continue;
    }
    ++local.prompts_seen;
    auto push = [&](const PromptPair& p) {
      ++local.per_method[static_cast<int>(p.method)];
      pairs.push_back(p);
    };
    if (auto p = make_trim_source(prompt)) push(*p);
    Rng rng(derive_seed(stream, static_cast<uint64_t>(i)));
    if (auto p = make_perturbed_source(prompt, rng)) push(*p);
    if (rephraser) {
      for (const PromptPair& p :
           make_rephrased_pairs(prompt, *rephraser, &local.rephrase_failures)) {
        push(p);
      }
    }
  }
  if (stats) *stats = local;
  return pairs;
}

CorpusStats build_corpus(const std::vector<std::string>& raw_prompts,
                         const ModifierLexicon& lexicon, const Rephraser* rephraser,
                         uint64_t seed, const std::string& output_path) {
  CorpusStats stats;
  const std::vector<PromptPair> pairs =
      make_pairs(raw_prompts, lexicon, rephraser, seed, &stats);
  std::vector<nlohmann::json> rows;
  rows.reserve(pairs.size());
  for (const PromptPair& p : pairs) {
    rows.push_back({{"method", method_to_string(p.method)},
                    {"source", p.source},
                    {"target", p.target}});
  }
  write_jsonl(output_path, rows);
  return stats;
}

std::vector<PromptPair> load_corpus(const std::string& path, int* malformed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open corpus: " + path);
  std::vector<PromptPair> pairs;
  int bad = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const nlohmann::json row = nlohmann::json::parse(line, nullptr, false);
    if (row.is_discarded() || !row.is_object() || !row.contains("source") ||
        !row.contains("target") || !row.contains("method") ||
        !row["source"].is_string() || !row["target"].is_string() ||
        !row["method"].is_string()) {
      ++bad;
      continue;
    }
    PromptPair p;
    p.source = row["source"].get<std::string>();
    p.target = row["target"].get<std::string>();
    try {
      p.method = method_from_string(row["method"].get<std::string>());
    } catch (const ConfigError&) {
      ++bad;
      continue;
    }
    pairs.push_back(std::move(p));
  }
  if (malformed) *malformed = bad;
  return pairs;
}

PromptPool PromptPool::load(const std::string& path, PoolDomain domain) {
  PromptPool pool;
  pool.domain = domain;
  std::set<std::string> seen;
  for (const std::string& line : read_lines(path)) {
    const size_t tab = line.find('\t');
    PoolEntry entry;
    entry.prompt = normalize_prompt(tab == std::string::npos ? line : line.substr(0, tab));
    if (entry.prompt.empty()) continue;
    if (tab != std::string::npos) {
      const std::string engineered = normalize_prompt(line.substr(tab + 1));
      if (!engineered.empty()) entry.engineered = engineered;
    }
    if (!seen.insert(entry.prompt).second) continue;
    pool.entries.push_back(std::move(entry));
  }
  return pool;
}

}  // namespace promptrl
