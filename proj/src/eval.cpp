// SPDX-License-Identifier: Apache-2.0
#include "promptrl/eval.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "promptrl/checkpoint.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/io.hpp"
#include "promptrl/rng.hpp"
#include "promptrl/sft.hpp"

namespace promptrl {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view pool_domain_name(PoolDomain domain) {
  switch (domain) {
    case PoolDomain::kInDomain:
      return "in_domain";
    case PoolDomain::kOutOfDomain:
      return "out_of_domain";
    case PoolDomain::kLabels:
      return "labels";
  }
  throw ConfigError("eval: unknown pool domain");
}

std::string optimize_prompt(const PolicyModel& model, const std::string& input,
                            const DecodeConfig& cfg) {
  const std::vector<int> query = rewrite_query(input, model.vocab());
  const Hypothesis best = beam_search(model, query, cfg);
  return model.vocab().decode(best.tokens);
}

namespace {

PromptScore score_variant(const std::string& variant, const std::string& x,
                          const std::string& y, const ScorerSuite& suite,
                          uint64_t image_seed) {
  PromptScore s;
  s.variant = variant;
  s.prompt = y;
  s.relevance = relevance_score(x, y, suite, image_seed);
  s.aesthetic = aesthetic_score(x, y, suite, image_seed);
  s.reward = s.relevance + s.aesthetic;
  return s;
}

}  // namespace

EvalReport evaluate(const PolicyModel& sft_model, const PolicyModel& rl_model,
                    const std::vector<PromptPool>& pools, const ScorerSuite& suite,
                    const DecodeConfig& decode_cfg, uint64_t seed) {
  suite.validate();
  decode_cfg.validate();

  EvalReport report;
  report.seed = seed;
  report.images_per_prompt = suite.images_per_prompt;
  const uint64_t image_base = derive_seed(seed, "eval-images");

  for (const PromptPool& pool : pools) {
    SplitReport split;
    split.domain = pool.domain;
    split.name = std::string(pool_domain_name(pool.domain));

    struct Sum {
      int n = 0;
      double rel = 0.0, aes = 0.0, reward = 0.0;
    };
    std::map<std::string, Sum> sums;

    for (const PoolEntry& entry : pool.entries) {
      PromptEvaluation pe;
      pe.input = entry.prompt;
      // Seeded by the prompt text, not its index: reordering a pool must not
      // change any per-prompt number.
      const uint64_t image_seed = derive_seed(image_base, entry.prompt);

      pe.scores.push_back(
          score_variant(kVariantUserInput, entry.prompt, entry.prompt, suite, image_seed));
      if (entry.engineered) {
        pe.scores.push_back(
            score_variant(kVariantEngineered, entry.prompt, *entry.engineered, suite,
                          image_seed));
      }
      pe.scores.push_back(score_variant(
          kVariantSft, entry.prompt, optimize_prompt(sft_model, entry.prompt, decode_cfg),
          suite, image_seed));
      pe.scores.push_back(score_variant(
          kVariantRl, entry.prompt, optimize_prompt(rl_model, entry.prompt, decode_cfg),
          suite, image_seed));

      for (const PromptScore& s : pe.scores) {
        Sum& acc = sums[s.variant];
        ++acc.n;
        acc.rel += s.relevance;
        acc.aes += s.aesthetic;
        acc.reward += s.reward;
      }
      split.prompts.push_back(std::move(pe));
    }

    for (const auto& [variant, acc] : sums) {
      VariantAggregate agg;
      agg.prompts = acc.n;
      if (acc.n > 0) {
        agg.mean_relevance = acc.rel / acc.n;
        agg.mean_aesthetic = acc.aes / acc.n;
        agg.mean_reward = acc.reward / acc.n;
      }
      split.variants[variant] = agg;
    }

    split.sft_mean_reward = split.variants.count(kVariantSft)
                                ? split.variants[kVariantSft].mean_reward
                                : 0.0;
    split.rl_mean_reward =
        split.variants.count(kVariantRl) ? split.variants[kVariantRl].mean_reward : 0.0;
    if (split.sft_mean_reward != 0.0) {
      split.relative_gain = (split.rl_mean_reward - split.sft_mean_reward) /
                            std::abs(split.sft_mean_reward);
    }
    report.splits.push_back(std::move(split));
  }
  return report;
}

EvalReport evaluate(const EvalCheckpoints& checkpoints,
                    const std::vector<PromptPool>& pools, const ScorerSuite& suite,
                    const DecodeConfig& decode_cfg, uint64_t seed) {
  if (!fs::exists(checkpoints.sft)) {
    throw DependencyError("eval: missing SFT checkpoint " + checkpoints.sft);
  }
  if (!fs::exists(checkpoints.rl)) {
    throw DependencyError("eval: missing RL checkpoint " + checkpoints.rl);
  }
  const PolicyModel sft_model = load_policy(checkpoints.sft);
  const PolicyModel rl_model = load_policy(checkpoints.rl);
  return evaluate(sft_model, rl_model, pools, suite, decode_cfg, seed);
}

namespace {

// Stable display order; map iteration is alphabetical, which interleaves the
// baselines and the checkpoints.
const char* const kVariantOrder[] = {kVariantUserInput, kVariantEngineered, kVariantSft,
                                     kVariantRl};

void append_row(std::string& out, const char* name, const VariantAggregate& agg) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "  %-14s %10.4f %10.4f %10.4f   (%d prompts)\n", name,
                agg.mean_reward, agg.mean_aesthetic, agg.mean_relevance, agg.prompts);
  out += buf;
}

}  // namespace

std::string render_text_report(const EvalReport& report) {
  std::string out;
  out += "prompt variant reward comparison\n";
  out +=
      "reward = aesthetic + relevance, averaged over " +
      std::to_string(report.images_per_prompt) +
      " images per prompt.\n"
      "note: the policy KL term is excluded here so prompt sources without a\n"
      "policy (raw input, hand-engineered) are scored on the same scale.\n";
  char seed_line[64];
  std::snprintf(seed_line, sizeof(seed_line), "seed %" PRIu64 "\n", report.seed);
  out += seed_line;

  for (const SplitReport& split : report.splits) {
    out += "\nsplit: " + split.name + " (" + std::to_string(split.prompts.size()) +
           " prompts)\n";
    out += "  variant        mean_reward  mean_aes   mean_rel\n";
    for (const char* name : kVariantOrder) {
      auto it = split.variants.find(name);
      if (it == split.variants.end()) continue;
      append_row(out, name, it->second);
    }
    char gain[160];
    if (split.relative_gain) {
      std::snprintf(gain, sizeof(gain), "  gain: %.4f -> %.4f (%+.0f%%)\n",
                    split.sft_mean_reward, split.rl_mean_reward,
                    *split.relative_gain * 100.0);
    } else {
      std::snprintf(gain, sizeof(gain), "  gain: %.4f -> %.4f (undefined: zero base)\n",
                    split.sft_mean_reward, split.rl_mean_reward);
    }
    out += gain;
  }
  return out;
}

json report_to_json(const EvalReport& report) {
  json j;
  j["seed"] = report.seed;
  j["images_per_prompt"] = report.images_per_prompt;
  j["reward_definition"] = "aesthetic + relevance; policy KL term excluded";
  j["splits"] = json::array();
  for (const SplitReport& split : report.splits) {
    json js;
    js["name"] = split.name;
    js["prompt_count"] = split.prompts.size();
    js["variants"] = json::object();
    for (const auto& [variant, agg] : split.variants) {
      js["variants"][variant] = {{"prompts", agg.prompts},
                                 {"mean_reward", agg.mean_reward},
                                 {"mean_aesthetic", agg.mean_aesthetic},
                                 {"mean_relevance", agg.mean_relevance}};
    }
    js["gain"] = {{"sft_mean_reward", split.sft_mean_reward},
                  {"rl_mean_reward", split.rl_mean_reward}};
    if (split.relative_gain) js["gain"]["relative_gain"] = *split.relative_gain;
    js["prompts"] = json::array();
    for (const PromptEvaluation& pe : split.prompts) {
      json jp;
      jp["input"] = pe.input;
      jp["scores"] = json::array();
      for (const PromptScore& s : pe.scores) {
        jp["scores"].push_back({{"variant", s.variant},
                                {"prompt", s.prompt},
                                {"reward", s.reward},
                                {"aesthetic", s.aesthetic},
                                {"relevance", s.relevance}});
      }
      js["prompts"].push_back(std::move(jp));
    }
    j["splits"].push_back(std::move(js));
  }
  return j;
}

void write_report(const EvalReport& report, const std::string& dir) {
  fs::create_directories(dir);
  write_text_file(fs::path(dir) / "eval_report.txt", render_text_report(report));
  write_text_file(fs::path(dir) / "eval_report.json", report_to_json(report).dump(2) + "\n");
}

HumanEvalBundle export_human_eval_bundle(const std::vector<BundleRequest>& requests,
                                         const ScorerSuite& suite,
                                         const std::string& out_dir, uint64_t seed) {
  suite.validate();
  if (!suite.generator->produces_pixels()) {
    throw UnsupportedOperationError(
        "human-eval bundle export needs a generator that renders image bytes; "
        "the configured backend is embedding-only");
  }
  if (requests.empty()) throw InvalidInputError("eval: empty bundle request list");

  const fs::path root(out_dir);
  const fs::path image_dir = root / "images";
  fs::create_directories(image_dir);

  Rng shuffle_rng(derive_seed(seed, "bundle-shuffle"));
  json manifest;
  manifest["images_per_group"] = suite.images_per_prompt;
  manifest["items"] = json::array();
  json escrow;
  escrow["items"] = json::array();
  int written = 0;

  for (size_t i = 0; i < requests.size(); ++i) {
    const BundleRequest& req = requests[i];
    // Images for both sides share one seed so the comparison is paired.
    const uint64_t image_seed = derive_seed(derive_seed(seed, "bundle-images"), req.input);
    const bool left_is_a = shuffle_rng.bernoulli(0.5);

    json groups = json::object();
    json key = json::object();
    const struct {
      const char* group;
      const std::string* variant;
      const std::string* prompt;
    } sides[2] = {{left_is_a ? "A" : "B", &req.left_variant, &req.left_prompt},
                  {left_is_a ? "B" : "A", &req.right_variant, &req.right_prompt}};

    for (const auto& side : sides) {
      const std::vector<ImageSample> images = images_for(suite, *side.prompt, image_seed);
      json files = json::array();
      for (size_t k = 0; k < images.size(); ++k) {
        if (images[k].pixels.empty()) {
          throw UnsupportedOperationError(
              "human-eval bundle export: generator returned an image without bytes");
        }
        char name[64];
        std::snprintf(name, sizeof(name), "item_%03zu_%s_%zu.png", i, side.group, k);
        std::ofstream out(image_dir / name, std::ios::binary);
        if (!out) throw IoError("eval: cannot write " + (image_dir / name).string());
        out.write(reinterpret_cast<const char*>(images[k].pixels.data()),
                  static_cast<std::streamsize>(images[k].pixels.size()));
        files.push_back(std::string("images/") + name);
        ++written;
      }
      groups[side.group] = std::move(files);
      key[side.group] = {{"variant", *side.variant}, {"prompt", *side.prompt}};
    }

    manifest["items"].push_back(
        {{"index", i}, {"input", req.input}, {"groups", std::move(groups)}});
    escrow["items"].push_back({{"index", i}, {"key", std::move(key)}});
  }

  HumanEvalBundle bundle;
  bundle.manifest_path = (root / "manifest.json").string();
  bundle.escrow_path = (root / "escrow_key.json").string();
  bundle.images_written = written;
  write_text_file(bundle.manifest_path, manifest.dump(2) + "\n");
  write_text_file(bundle.escrow_path, escrow.dump(2) + "\n");
  return bundle;
}

}  // namespace promptrl
