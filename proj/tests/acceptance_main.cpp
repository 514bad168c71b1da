// SPDX-License-Identifier: Apache-2.0
//
// Release gate: one self-contained check per acceptance criterion, printed
// as a single pass/fail line each. Criterion 8 is observational and never
// gates the exit code. Scratch output goes under ./acceptance_tmp; fixtures
// resolve against the source tree.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "promptrl/checkpoint.hpp"
#include "promptrl/corpus.hpp"
#include "promptrl/decode.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/eval.hpp"
#include "promptrl/io.hpp"
#include "promptrl/ppo.hpp"
#include "promptrl/reward.hpp"
#include "promptrl/rng.hpp"
#include "promptrl/sft.hpp"
#include "promptrl/text.hpp"

using namespace promptrl;
namespace fs = std::filesystem;

#ifndef PROMPTRL_SOURCE_DIR
#define PROMPTRL_SOURCE_DIR "."
#endif

namespace {

std::string fixture(const std::string& name) {
  return std::string(PROMPTRL_SOURCE_DIR) + "/data/fixtures/" + name;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::runtime_error(message);
}

std::string file_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read " + path.string());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

// Scorer stubs with a controllable similarity, used to probe the relevance
// transform at exact points.
class FixedSimilarity final : public SimilarityScorer {
 public:
  double value = 0.0;
  double score(const std::string&, const ImageSample&) const override { return value; }
};

class FlatGenerator final : public ImageGenerator {
 public:
  std::vector<ImageSample> generate(const std::string&, uint64_t, int count) const override {
    ImageSample s;
    s.embedding = {1.0};
    s.aesthetic = 5.0;
    return std::vector<ImageSample>(static_cast<size_t>(count), s);
  }
};

class SampleAesthetic final : public AestheticScorer {
 public:
  double score(const ImageSample& img) const override { return img.aesthetic; }
};

// Next-token tables derived from a hash of the generated prefix: a family of
// deterministic toy sequence models the exhaustive oracle can walk.
class HashedToyScorer final : public SequenceScorer {
 public:
  HashedToyScorer(int vocab, uint64_t seed) : vocab_(vocab), seed_(seed) {}

  int vocab_size() const override { return vocab_; }
  int eos_id() const override { return vocab_ - 1; }
  int capacity() const override { return 64; }

  struct State final : ScoringState {
    std::vector<int> generated;
    std::unique_ptr<ScoringState> clone() const override {
      return std::make_unique<State>(*this);
    }
  };

  std::unique_ptr<ScoringState> start(std::span<const int>) const override {
    return std::make_unique<State>();
  }

  std::vector<double> next_log_probs(const ScoringState& s) const override {
    const auto& st = static_cast<const State&>(s);
    uint64_t h = seed_;
    for (int t : st.generated) h = derive_seed(h, static_cast<uint64_t>(t) + 1);
    Rng rng(h);
    std::vector<double> logps(static_cast<size_t>(vocab_));
    for (double& v : logps) v = rng.normal(0.0, 2.0);
    const double mx = *std::max_element(logps.begin(), logps.end());
    double z = 0.0;
    for (double v : logps) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    for (double& v : logps) v -= log_z;
    return logps;
  }

  void advance(ScoringState& s, int token) const override {
    static_cast<State&>(s).generated.push_back(token);
  }

 private:
  int vocab_;
  uint64_t seed_;
};

ModelConfig tiny_model_config() {
  return ModelConfig{.vocab_size = 0,
                     .context_length = 64,
                     .layer_count = 1,
                     .hidden_width = 32,
                     .head_count = 2};
}

// Artifacts shared between criteria: 7 hands its checkpoints and pools to 8,
// and 9 reruns the training of 6 and 7 against the recorded first-run logs.
struct GateContext {
  fs::path tmp;

  std::vector<PromptPair> convergence_corpus;
  SFTConfig decrease_cfg, memorize_cfg;
  std::string decrease_log, memorize_log;

  std::string pipeline_corpus_path;
  SFTConfig pipeline_sft_cfg;
  PPOConfig pipeline_ppo_cfg;
  DecodeConfig pipeline_explore_cfg;
  std::vector<std::string> pipeline_pool_sources, pipeline_heldout_sources;
  std::string pipeline_sft_checkpoint, pipeline_rl_checkpoint;
  std::string pipeline_sft_log, pipeline_rl_log;
};

PromptPool pool_from(const std::vector<std::string>& sources, PoolDomain domain) {
  PromptPool pool;
  pool.domain = domain;
  for (const std::string& s : sources) pool.entries.push_back({s, std::nullopt});
  return pool;
}

// --- criterion 1: relevance clipping and reward composition ---------------

std::string criterion_reward_arithmetic() {
  auto sim = std::make_shared<FixedSimilarity>();
  ScorerSuite probe;
  probe.generator = std::make_shared<FlatGenerator>();
  probe.similarity = sim;
  probe.aesthetic = std::make_shared<SampleAesthetic>();
  probe.images_per_prompt = 1;  // single image: the mean is the raw transform

  // At the threshold and above it the transform clips to exactly zero;
  // below it the raw affine value comes through.
  sim->value = 0.28;
  require(relevance_score("a cat", "a cat", probe, 1) == 0.0, "relevance at 0.28 not 0");
  sim->value = 0.35;
  require(relevance_score("a cat", "a cat", probe, 1) == 0.0, "relevance at 0.35 not 0");
  sim->value = 0.20;
  const double at_020 = relevance_score("a cat", "a cat", probe, 1);
  const double affine = std::min(probe.relevance_scale * 0.20 - probe.relevance_offset, 0.0);
  require(at_020 == affine, "relevance at 0.20 differs from the affine transform");
  require(std::abs(at_020 - (-1.6)) < 1e-12, "relevance at 0.20 not -1.6");

  // Non-positivity holds across the similarity range, not just at the
  // probed points.
  Rng fuzz(4242);
  const int fuzz_count = 10000;
  for (int i = 0; i < fuzz_count; ++i) {
    sim->value = -1.25 + 2.5 * fuzz.uniform();
    require(relevance_score("a cat", "a cat", probe, 1) <= 0.0, "positive relevance under fuzz");
  }

  // Composition: the reported total is the three terms combined, with a
  // genuinely nonzero penalty from two differently initialized models.
  std::vector<PromptPair> mini = {
      {"a cat sitting on a wall", "a cat sitting on a wall, artstation, 8k", PairMethod::kDrop},
      {"an old barn in snow", "an old barn in snow, oil painting", PairMethod::kDrop},
  };
  const Vocabulary vocab = build_vocabulary(mini);
  PolicyModel policy(tiny_model_config(), vocab, 21);
  PolicyModel other(tiny_model_config(), vocab, 22);
  const ScorerSuite world = synthetic_world();
  const std::string x = "a cat sitting on a wall";
  const std::string y = "a cat sitting on a wall, artstation, 8k";
  const std::vector<int> query = rewrite_query(x, vocab);
  std::vector<int> response = vocab.encode(y);
  response.push_back(vocab.eos_id());
  const RewardBreakdown rb =
      total_reward(x, y, query, response, policy, other, world, 0.2, 11);
  double kl_sum = 0.0;
  for (double k : rb.kl_per_token) kl_sum += k;
  require(kl_sum != 0.0, "distinct models produced a zero kl sum");
  require(std::abs(rb.total - (rb.f_aes + rb.f_rel - rb.kl_coefficient * kl_sum)) <= 1e-9,
          "total reward drifts from its parts");
  return fmt("clip points exact; %d fuzzed relevances <= 0; composition within 1e-9",
             fuzz_count);
}

// --- criterion 2: zero kl against a cloned reference -----------------------

std::string criterion_kl_identity() {
  std::vector<std::string> bank = {"a",    "cat",  "dog", "old",    "barn", "castle",
                                   "wall", "snow", "on",  "forest", "in",   "the"};
  std::vector<std::string> tokens = bank;
  tokens.insert(tokens.end(), {"rephrase", ":", ","});
  const Vocabulary vocab = Vocabulary::from_tokens(tokens);
  PolicyModel policy(tiny_model_config(), vocab, 77);
  const PolicyModel reference = policy.clone_frozen();
  const ScorerSuite world = synthetic_world();

  Rng rng(2026);
  const int prompt_count = 100;
  for (int i = 0; i < prompt_count; ++i) {
    std::string x;
    const int words = rng.uniform_int(2, 6);
    for (int w = 0; w < words; ++w) {
      if (w) x += ' ';
      x += bank[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(bank.size()) - 1))];
    }
    const std::vector<int> query = rewrite_query(x, vocab);
    std::vector<int> response;
    const int length = rng.uniform_int(1, 8);
    for (int t = 0; t < length; ++t) {
      const auto& word =
          bank[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(bank.size()) - 1))];
      response.push_back(vocab.id_of(word).value());
    }
    response.push_back(vocab.eos_id());

    // A clone shares every parameter bit, so the per-token log-ratios are
    // exactly zero, not merely small.
    const std::vector<double> kl = kl_penalty(query, response, policy, reference);
    for (double k : kl) require(k == 0.0, fmt("nonzero kl on prompt %d", i));

    const std::string y = vocab.decode(response);
    const RewardBreakdown rb = total_reward(x, y, query, response, policy, reference, world,
                                            0.2, derive_seed(500, static_cast<uint64_t>(i)));
    for (double k : rb.kl_per_token) require(k == 0.0, fmt("nonzero kl in breakdown %d", i));
    require(rb.total == rb.f_aes + rb.f_rel,
            fmt("total != f_aes + f_rel with a cloned reference on prompt %d", i));
  }
  return fmt("%d prompts: every per-token kl exactly 0, total equals f_aes + f_rel",
             prompt_count);
}

// --- criterion 3: decoding against an exhaustive oracle --------------------

std::string criterion_decoding_oracle() {
  // (a) Small enough models that every generation can be enumerated: the
  // beam must return the global argmax of the length-penalized score.
  const int parameterizations = 25;
  for (int p = 0; p < parameterizations; ++p) {
    Rng meta(9000 + static_cast<uint64_t>(p));
    const int vocab = meta.uniform_int(2, 5);
    const int depth = meta.uniform_int(1, 3);
    const double penalties[] = {0.0, 0.5, 1.0};
    const double length_penalty = penalties[meta.uniform_int(0, 2)];
    const HashedToyScorer scorer(vocab, derive_seed(31337, static_cast<uint64_t>(p)));
    const std::vector<int> query = {0};

    struct Best {
      double score = -1e300;
      std::vector<int> tokens;
    } best;
    // Walks every sequence, scoring with the engine's rule: summed log-probs
    // over length^penalty, ties to the lexicographically smaller tokens.
    std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& gen,
                                                              double logp) {
      const bool ended = !gen.empty() && gen.back() == scorer.eos_id();
      if (ended || static_cast<int>(gen.size()) == depth) {
        const double score =
            logp / std::pow(static_cast<double>(gen.size()), length_penalty);
        if (score > best.score || (score == best.score && gen < best.tokens)) {
          best.score = score;
          best.tokens = gen;
        }
        return;
      }
      auto state = scorer.start(query);
      for (int t : gen) scorer.advance(*state, t);
      const std::vector<double> logps = scorer.next_log_probs(*state);
      for (int v = 0; v < vocab; ++v) {
        gen.push_back(v);
        walk(gen, logp + logps[static_cast<size_t>(v)]);
        gen.pop_back();
      }
    };
    std::vector<int> scratch;
    walk(scratch, 0.0);

    DecodeConfig cfg;
    cfg.beam_size = 1;
    for (int d = 0; d < depth; ++d) cfg.beam_size *= vocab;  // wide enough to be exact
    cfg.group_count = 1;
    cfg.diversity_penalty = 0.0;
    cfg.length_penalty = length_penalty;
    cfg.max_length = depth;
    const Hypothesis h = beam_search(scorer, query, cfg);
    require(h.tokens == best.tokens, fmt("argmax mismatch at parameterization %d", p));
    require(std::abs(h.score - best.score) <= 1e-9 * std::max(1.0, std::abs(best.score)),
            fmt("argmax score mismatch at parameterization %d", p));
  }

  // (b) Penalty zero makes the group structure inert: any grouping returns
  // the plain beam pool in the same order.
  std::vector<PromptPair> mini = {
      {"a cat sitting on a wall", "a cat sitting on a wall, artstation, 8k", PairMethod::kDrop},
      {"a dog running on the beach", "a dog running on the beach, sharp focus", PairMethod::kDrop},
  };
  const Vocabulary vocab = build_vocabulary(mini);
  PolicyModel policy(tiny_model_config(), vocab, 5);
  for (uint64_t qseed = 0; qseed < 5; ++qseed) {
    Rng qrng(300 + qseed);
    std::vector<int> query;
    const int qlen = qrng.uniform_int(1, 4);
    for (int i = 0; i < qlen; ++i) query.push_back(qrng.uniform_int(4, vocab.size() - 1));
    DecodeConfig cfg;
    cfg.beam_size = 8;
    cfg.diversity_penalty = 0.0;
    cfg.max_length = 8;
    cfg.group_count = 1;
    const auto plain = diverse_beam_search(policy, query, cfg);
    cfg.group_count = 4;
    const auto grouped = diverse_beam_search(policy, query, cfg);
    require(plain.size() == grouped.size(), "pool size changed under grouping");
    for (size_t i = 0; i < plain.size(); ++i) {
      require(plain[i].tokens == grouped[i].tokens, "grouping reordered the zero-penalty pool");
      require(std::abs(plain[i].log_prob - grouped[i].log_prob) <= 1e-12,
              "grouping changed a zero-penalty log-prob");
    }
  }

  // (c) With the penalty on, the eight returned hypotheses are pairwise
  // distinct on nearly every query.
  int all_distinct = 0;
  const int query_count = 50;
  for (uint64_t qseed = 0; qseed < query_count; ++qseed) {
    Rng qrng(1000 + qseed);
    std::vector<int> query;
    const int qlen = qrng.uniform_int(1, 4);
    for (int i = 0; i < qlen; ++i) query.push_back(qrng.uniform_int(4, vocab.size() - 1));
    DecodeConfig cfg;
    cfg.beam_size = 8;
    cfg.group_count = 4;
    cfg.diversity_penalty = 1.0;
    cfg.max_length = 8;
    const auto hyps = diverse_beam_search(policy, query, cfg);
    require(hyps.size() == 8, "beam did not return eight hypotheses");
    std::set<std::vector<int>> uniq;
    for (const auto& h : hyps) uniq.insert(h.tokens);
    if (uniq.size() == hyps.size()) ++all_distinct;
  }
  require(all_distinct * 100 >= query_count * 95,
          fmt("only %d/%d queries fully distinct", all_distinct, query_count));
  return fmt("%d toy argmaxes exact; zero-penalty grouping inert; %d/%d queries pairwise distinct",
             parameterizations, all_distinct, query_count);
}

// --- criterion 4: analytic gradients vs central differences ----------------

std::string criterion_gradient_check() {
  const Vocabulary vocab = Vocabulary::from_tokens({"a", "b", "c", "d", "e", ","});
  ModelConfig cfg{.vocab_size = 0,
                  .context_length = 16,
                  .layer_count = 2,
                  .hidden_width = 8,
                  .head_count = 2};
  PolicyModel policy(cfg, vocab, 99);

  Rng rng(5);
  std::vector<int> ids;
  for (int i = 0; i < 9; ++i) ids.push_back(rng.uniform_int(0, vocab.size() - 1));
  std::vector<int> targets(ids.begin() + 1, ids.end());
  targets.push_back(vocab.eos_id());
  std::vector<uint8_t> mask(ids.size(), 0);
  for (size_t i = 3; i < mask.size(); ++i) mask[i] = 1;

  auto loss_fn = [&](bool do_backward) {
    Tape tape;
    Var logits = policy.logits_graph(tape, ids);
    Var loss = tape.masked_nll(logits, targets, mask);
    if (do_backward) tape.backward(loss);
    return loss->val(0, 0);
  };

  TransformerWeights& w = policy.weights();
  for (Parameter* p : w.all()) p->zero_grad();
  const double base = loss_fn(true);
  require(std::isfinite(base), "non-finite loss");

  const double h = 1e-5;
  Rng pick(7);
  int checked = 0;
  double worst = 0.0;
  for (Parameter* p : w.all()) {
    const int n = static_cast<int>(p->value.size());
    const int samples = n <= 8 ? n : 8;
    for (int s = 0; s < samples; ++s) {
      const int j = n <= 8 ? s : pick.uniform_int(0, n - 1);
      const double orig = p->value.data[j];
      p->value.data[j] = orig + h;
      const double up = loss_fn(false);
      p->value.data[j] = orig - h;
      const double down = loss_fn(false);
      p->value.data[j] = orig;
      const double fd = (up - down) / (2.0 * h);
      const double an = p->grad.data[j];
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-6});
      worst = std::max(worst, rel);
      require(rel <= 1e-3, fmt("gradient mismatch at %s[%d]: fd %.3e vs analytic %.3e",
                               p->name.c_str(), j, fd, an));
      ++checked;
    }
  }
  require(checked >= 100, fmt("only %d coordinates checked", checked));
  return fmt("%d coordinates within rel 1e-3 (worst %.2e)", checked, worst);
}

// --- criterion 5: ppo ratio, clipping, and model separation ----------------

std::string criterion_ppo_mechanics() {
  const PromptPool pool = PromptPool::load(fixture("pool_in_domain.tsv"), PoolDomain::kInDomain);
  std::vector<PromptPair> pairs;
  for (const PoolEntry& e : pool.entries)
    pairs.push_back({e.prompt, e.engineered.value_or(e.prompt), PairMethod::kTrim});
  const Vocabulary vocab = build_vocabulary(pairs);
  PolicyModel policy(tiny_model_config(), vocab, 314);
  const PolicyModel reference = policy.clone_frozen();
  const ValueModel value = ValueModel::from_policy(policy);
  const ScorerSuite world = synthetic_world();

  PPOConfig pc;
  pc.batch_size = 8;
  pc.episodes_total = 8;
  pc.seed = 99;
  DecodeConfig dc;
  dc.beam_size = 8;
  dc.group_count = 4;
  dc.diversity_penalty = 1.0;
  dc.max_length = 12;

  // (a) Straight after collection the policy has not moved, so recomputed
  // log-probs reproduce the behavior log-probs: every ratio is 1.
  Rng rng(1234);
  const auto episodes =
      collect_episodes(policy, reference, value, pool, world, pc, dc, 6, rng);
  require(episodes.size() == 6, "collection returned the wrong episode count");
  for (const Episode& ep : episodes) {
    const std::vector<double> now = policy.sequence_log_prob(ep.query, ep.response);
    require(now.size() == ep.behavior_logp.size(), "log-prob length mismatch");
    for (size_t t = 0; t < now.size(); ++t) {
      require(std::abs(std::exp(now[t] - ep.behavior_logp[t]) - 1.0) <= 1e-6,
              "post-collection ratio differs from 1");
    }
  }

  // (b) Worked clipping points, exact: the pessimistic min caps the gain of
  // a too-large ratio and keeps the loss of a too-small one.
  const double eps = 0.2;
  const double high = std::min(1.5 * 1.0, std::clamp(1.5, 1.0 - eps, 1.0 + eps) * 1.0);
  require(high == 1.2, "clip case (ratio 1.5, advantage +1) != 1.2");
  const double low = std::min(0.5 * -1.0, std::clamp(0.5, 1.0 - eps, 1.0 + eps) * -1.0);
  require(low == -0.8, "clip case (ratio 0.5, advantage -1) != -0.8");

  // The tape's surrogate agrees with that formula computed independently.
  const Episode& ep = episodes.front();
  std::vector<int> ids = ep.query;
  ids.insert(ids.end(), ep.response.begin(), ep.response.end() - 1);
  const AdvantageResult adv = compute_advantages(ep.rewards, ep.values, 1.0, 0.95);
  Tape tape;
  Var logits = policy.logits_graph(tape, ids);
  Var sliced = tape.rows(logits, static_cast<int>(ep.query.size()) - 1,
                         static_cast<int>(ep.response.size()));
  Var loss = tape.ppo_surrogate(sliced, ep.response, ep.behavior_logp, adv.advantages, eps);
  const std::vector<double> now = policy.sequence_log_prob(ep.query, ep.response);
  double oracle = 0.0;
  for (size_t t = 0; t < now.size(); ++t) {
    const double ratio = std::exp(now[t] - ep.behavior_logp[t]);
    const double a = adv.advantages[t];
    oracle -= std::min(ratio * a, std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a);
  }
  oracle /= static_cast<double>(now.size());
  require(std::abs(loss->val(0, 0) - oracle) <= 1e-9, "surrogate drifts from its formula");

  // (c) The two networks share nothing: each loss leaves the other model's
  // gradient buffer identically zero.
  PolicyModel live_policy(tiny_model_config(), vocab, 314);
  ValueModel live_value = ValueModel::from_policy(live_policy);
  for (Parameter* p : live_policy.weights().all()) p->zero_grad();
  for (Parameter* p : live_value.weights().all()) p->zero_grad();
  {
    Tape t2;
    Var l2 = live_policy.logits_graph(t2, ids);
    Var s2 = t2.rows(l2, static_cast<int>(ep.query.size()) - 1,
                     static_cast<int>(ep.response.size()));
    t2.backward(t2.ppo_surrogate(s2, ep.response, ep.behavior_logp, adv.advantages, eps));
  }
  bool policy_moved = false;
  for (Parameter* p : live_policy.weights().all())
    for (double g : p->grad.data)
      if (g != 0.0) policy_moved = true;
  require(policy_moved, "policy loss produced no policy gradient");
  for (Parameter* p : live_value.weights().all())
    for (double g : p->grad.data)
      require(g == 0.0, "policy loss leaked into the value model");

  for (Parameter* p : live_policy.weights().all()) p->zero_grad();
  {
    Tape t3;
    Var values = live_value.values_graph(t3, ids);
    t3.backward(t3.mse_from(values, adv.returns, static_cast<int>(ep.query.size()) - 1));
  }
  bool value_moved = false;
  for (Parameter* p : live_value.weights().all())
    for (double g : p->grad.data)
      if (g != 0.0) value_moved = true;
  require(value_moved, "value loss produced no value gradient");
  for (Parameter* p : live_policy.weights().all())
    for (double g : p->grad.data)
      require(g == 0.0, "value loss leaked into the policy");

  return "ratios 1 within 1e-6 post-collection; clip points exact; gradients never cross models";
}

// --- shared template grammar ------------------------------------------------

// A closed grammar of 50 prompts: every word appears in any 40-prompt
// subset, so a model trained on one split can echo the remaining prompts
// while never having seen them whole. Five whitelisted modifiers keep the
// aesthetic cap (four distinct) reachable from the trained vocabulary, and
// the modifier count cycles one to four so the supervised stopping point
// stays stochastic; with a fixed count the warm start would put near-zero
// probability on extending, and every added modifier would cost a policy
// trained against it a prohibitive log-ratio.
struct GrammarPrompt {
  std::string source;      // plain user prompt
  std::string engineered;  // source plus one to four modifiers
};

std::vector<GrammarPrompt> grammar_prompts() {
  const std::vector<std::string> nouns = {"cat", "dog", "fox", "owl", "bear"};
  const std::vector<std::string> verbs = {"sitting", "running"};
  const std::vector<std::string> places = {"wall", "beach", "hill", "field", "roof"};
  const std::vector<std::string> mods = {"artstation", "8k", "masterpiece", "sharp focus",
                                         "oil painting"};
  std::vector<GrammarPrompt> out;
  size_t i = 0;
  for (const auto& n : nouns)
    for (const auto& v : verbs)
      for (const auto& p : places) {
        const std::string source = "a " + n + " " + v + " on the " + p;
        std::string engineered = source;
        const size_t count = 1 + i % 4;
        for (size_t m = 0; m < count; ++m) engineered += ", " + mods[(i + m) % mods.size()];
        out.push_back({source, engineered});
        ++i;
      }
  return out;
}

// --- criterion 6: supervised convergence on a synthetic corpus -------------

std::vector<PromptPair> convergence_corpus() {
  std::vector<PromptPair> pairs;
  for (const GrammarPrompt& g : grammar_prompts())
    pairs.push_back({g.source, g.engineered, PairMethod::kDrop});
  return pairs;
}

std::string criterion_sft_convergence(GateContext& ctx) {
  ctx.convergence_corpus = convergence_corpus();
  require(ctx.convergence_corpus.size() == 50, "expected a 50-pair corpus");
  const Vocabulary vocab = build_vocabulary(ctx.convergence_corpus);

  // Batches sample with replacement, so a batch larger than the 45-example
  // training split approximates the full gradient and keeps the validation
  // curve smooth enough to demand strict decrease.
  ctx.decrease_cfg = SFTConfig{};
  ctx.decrease_cfg.batch_size = 48;
  ctx.decrease_cfg.learning_rate = 3e-3;
  ctx.decrease_cfg.max_sequence_length = 64;
  ctx.decrease_cfg.total_steps = 100;
  ctx.decrease_cfg.validation_fraction = 0.1;
  ctx.decrease_cfg.eval_interval = 10;
  ctx.decrease_cfg.seed = 505;
  const fs::path dir_a = ctx.tmp / "sft_decrease";
  fs::create_directories(dir_a);
  train_sft(ctx.convergence_corpus, vocab, tiny_model_config(), ctx.decrease_cfg,
            dir_a.string());
  ctx.decrease_log = file_bytes(dir_a / "sft_log.jsonl");

  std::vector<double> val_losses;
  for (const auto& row : read_jsonl(dir_a / "sft_log.jsonl")) {
    if (row["step"].get<int>() <= 100) val_losses.push_back(row["validation_loss"].get<double>());
  }
  require(val_losses.size() >= 5, "too few validation points in the first 100 steps");
  for (size_t i = 1; i < val_losses.size(); ++i)
    require(val_losses[i] < val_losses[i - 1],
            fmt("validation loss rose between snapshots %zu and %zu (%.4f -> %.4f)", i - 1, i,
                val_losses[i - 1], val_losses[i]));

  ctx.memorize_cfg = ctx.decrease_cfg;
  ctx.memorize_cfg.total_steps = 500;
  ctx.memorize_cfg.eval_interval = 25;
  ctx.memorize_cfg.seed = 606;
  const fs::path dir_b = ctx.tmp / "sft_memorize";
  fs::create_directories(dir_b);
  train_sft(ctx.convergence_corpus, vocab, tiny_model_config(), ctx.memorize_cfg,
            dir_b.string());
  ctx.memorize_log = file_bytes(dir_b / "sft_log.jsonl");

  int reached_step = -1;
  double best_loss = 1e300;
  for (const auto& row : read_jsonl(dir_b / "sft_log.jsonl")) {
    const double loss = row["train_loss"].get<double>();
    best_loss = std::min(best_loss, loss);
    if (loss < 0.1 && reached_step < 0) reached_step = row["step"].get<int>();
  }
  require(reached_step >= 0 && reached_step <= 500,
          fmt("memorization never reached loss < 0.1 (best %.4f)", best_loss));
  return fmt("%zu validation points strictly decreasing; memorization under 0.1 by step %d",
             val_losses.size(), reached_step);
}

// --- criterion 7: rl lift over the supervised baseline ---------------------

std::string criterion_rl_gain(GateContext& ctx) {
  const ModifierLexicon lexicon = ModifierLexicon::builtin();

  // 40 grammar prompts feed the corpus and the rollout pool; the other 10
  // stay unseen as whole prompts. The split is seeded, not positional, so
  // the held-out set mixes nouns, verbs, and places.
  const std::vector<GrammarPrompt> grammar = grammar_prompts();
  std::vector<size_t> order(grammar.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(7, "split"));
  split_rng.shuffle(order);
  std::vector<std::string> corpus_prompts;
  ctx.pipeline_pool_sources.clear();
  ctx.pipeline_heldout_sources.clear();
  for (size_t i = 0; i < order.size(); ++i) {
    const GrammarPrompt& g = grammar[order[i]];
    if (i < 40) {
      corpus_prompts.push_back(g.engineered);
      ctx.pipeline_pool_sources.push_back(g.source);
    } else {
      ctx.pipeline_heldout_sources.push_back(g.source);
    }
  }
  const std::vector<std::string>& heldout = ctx.pipeline_heldout_sources;
  require(heldout.size() == 10, "expected ten held-out prompts");

  // The margin is fixed before training from the scoring rule itself. For
  // each held-out prompt the best reachable aesthetic delta is found by
  // enumerating modifier-set sizes (every distinct whitelisted modifier adds
  // the same increment up to the cap, so size determines the value); the
  // relevance term tops out at zero. The lift demanded from RL is 5% of the
  // mean ceiling.
  double ceiling_sum = 0.0;
  for (const std::string& x : heldout) {
    const EngineeredPrompt split = split_prompt(x, lexicon);
    const std::set<std::string> have(split.modifiers.begin(), split.modifiers.end());
    const double have_term =
        std::min(kSyntheticAestheticPerModifier * static_cast<double>(have.size()),
                 kSyntheticAestheticCap);
    double best = 0.0;
    for (size_t k = 0; k <= lexicon.size(); ++k) {
      best = std::max(best, std::min(kSyntheticAestheticPerModifier * static_cast<double>(k),
                                     kSyntheticAestheticCap) -
                                have_term);
    }
    require(best == synthetic_aesthetic_ceiling(x, lexicon),
            "enumerated ceiling disagrees with the closed form");
    ceiling_sum += best;
  }
  const double mean_ceiling = ceiling_sum / static_cast<double>(heldout.size());
  const double margin = 0.05 * mean_ceiling;

  // Pipeline: corpus built by the real builder from the 40 engineered
  // prompts, supervised warm start, then policy-gradient fine-tuning on the
  // matching plain sources. The kl coefficient is scaled down for this
  // model size: a near-deterministic tiny policy pays far more kl per
  // changed token than a large one, and the paper-scale coefficient would
  // pin the policy to its reference.
  const ScorerSuite world = synthetic_world();
  const fs::path corpus_path = ctx.tmp / "pipeline_corpus.jsonl";
  build_corpus(corpus_prompts, lexicon, nullptr, derive_seed(7, "corpus"),
               corpus_path.string());
  ctx.pipeline_corpus_path = corpus_path.string();
  const std::vector<PromptPair> corpus = load_corpus(corpus_path.string());
  const Vocabulary vocab = build_vocabulary(corpus);

  ctx.pipeline_sft_cfg = SFTConfig{};
  ctx.pipeline_sft_cfg.batch_size = 16;
  ctx.pipeline_sft_cfg.learning_rate = 3e-3;
  ctx.pipeline_sft_cfg.max_sequence_length = 64;
  ctx.pipeline_sft_cfg.total_steps = 500;
  ctx.pipeline_sft_cfg.validation_fraction = 0.1;
  ctx.pipeline_sft_cfg.eval_interval = 50;
  ctx.pipeline_sft_cfg.seed = derive_seed(7, "sft");
  const fs::path sft_dir = ctx.tmp / "pipeline_sft";
  fs::create_directories(sft_dir);
  const SFTResult sft = train_sft(corpus, vocab, tiny_model_config(), ctx.pipeline_sft_cfg,
                                  sft_dir.string());
  ctx.pipeline_sft_checkpoint = sft.best_checkpoint;
  ctx.pipeline_sft_log = file_bytes(sft_dir / "sft_log.jsonl");

  const double kl_coefficient = 0.05;
  ctx.pipeline_ppo_cfg = PPOConfig{};
  ctx.pipeline_ppo_cfg.episodes_total = 2000;
  ctx.pipeline_ppo_cfg.batch_size = 64;
  ctx.pipeline_ppo_cfg.learning_rate = 1e-3;
  ctx.pipeline_ppo_cfg.kl_coefficient = kl_coefficient;
  ctx.pipeline_ppo_cfg.seed = derive_seed(7, "ppo");
  ctx.pipeline_explore_cfg = DecodeConfig{};
  ctx.pipeline_explore_cfg.beam_size = 8;
  ctx.pipeline_explore_cfg.group_count = 4;
  ctx.pipeline_explore_cfg.diversity_penalty = 1.0;
  ctx.pipeline_explore_cfg.max_length = 24;
  ctx.pipeline_explore_cfg.randomize_length = true;
  ctx.pipeline_explore_cfg.random_min = 8;
  ctx.pipeline_explore_cfg.random_max = 24;
  const PromptPool pool = pool_from(ctx.pipeline_pool_sources, PoolDomain::kInDomain);
  const fs::path rl_dir = ctx.tmp / "pipeline_rl";
  fs::create_directories(rl_dir);
  const RLResult rl = train_rl(sft.best_checkpoint, pool, world, ctx.pipeline_ppo_cfg,
                               ctx.pipeline_explore_cfg, rl_dir.string());
  ctx.pipeline_rl_checkpoint = rl.policy_checkpoint;
  ctx.pipeline_rl_log = file_bytes(rl_dir / "rl_log.jsonl");

  // Held-out comparison under the full training reward, with the supervised
  // model as the reference for both checkpoints. Image seeds hang off the
  // prompt text so both sides score against identical images.
  const PolicyModel sft_model = load_policy(sft.best_checkpoint);
  const PolicyModel rl_model = load_policy(rl.policy_checkpoint);
  const PolicyModel reference = sft_model.clone_frozen();
  DecodeConfig eval_cfg;
  eval_cfg.beam_size = 8;
  eval_cfg.group_count = 1;
  eval_cfg.diversity_penalty = 0.0;
  eval_cfg.length_penalty = 1.0;
  eval_cfg.max_length = 24;

  double sft_sum = 0.0, rl_sum = 0.0;
  for (const std::string& x : heldout) {
    const std::vector<int> query = rewrite_query(x, vocab);
    const uint64_t image_seed = derive_seed(derive_seed(7, "eval-images"), x);
    const Hypothesis hs = beam_search(sft_model, query, eval_cfg);
    const Hypothesis hr = beam_search(rl_model, query, eval_cfg);
    sft_sum += total_reward(x, vocab.decode(hs.tokens), query, hs.tokens, sft_model,
                            reference, world, kl_coefficient, image_seed)
                   .total;
    rl_sum += total_reward(x, vocab.decode(hr.tokens), query, hr.tokens, rl_model, reference,
                           world, kl_coefficient, image_seed)
                  .total;
  }
  const double sft_mean = sft_sum / static_cast<double>(heldout.size());
  const double rl_mean = rl_sum / static_cast<double>(heldout.size());
  require(rl_mean > sft_mean, fmt("rl mean %.4f does not exceed sft mean %.4f", rl_mean,
                                  sft_mean));
  require(rl_mean - sft_mean >= margin,
          fmt("lift %.4f under the pre-set margin %.4f (sft %.4f, rl %.4f)",
              rl_mean - sft_mean, margin, sft_mean, rl_mean));
  return fmt("held-out mean reward %.4f -> %.4f, lift %.4f >= margin %.4f (ceiling %.2f)",
             sft_mean, rl_mean, rl_mean - sft_mean, margin, mean_ceiling);
}

// --- criterion 8: out-of-domain lift ordering (observational) --------------

std::string criterion_domain_ordering(GateContext& ctx) {
  require(!ctx.pipeline_sft_checkpoint.empty(), "pipeline checkpoints unavailable");
  const PolicyModel sft_model = load_policy(ctx.pipeline_sft_checkpoint);
  const PolicyModel rl_model = load_policy(ctx.pipeline_rl_checkpoint);
  // In-domain: the prompts RL collected rollouts on. Out-of-domain: the
  // held-out recombinations neither stage saw whole.
  std::vector<PromptPool> pools = {
      pool_from(ctx.pipeline_pool_sources, PoolDomain::kInDomain),
      pool_from(ctx.pipeline_heldout_sources, PoolDomain::kOutOfDomain),
  };
  DecodeConfig eval_cfg;
  eval_cfg.beam_size = 8;
  eval_cfg.group_count = 1;
  eval_cfg.diversity_penalty = 0.0;
  eval_cfg.max_length = 24;
  const EvalReport report =
      evaluate(sft_model, rl_model, pools, synthetic_world(), eval_cfg, 7);

  std::optional<double> gain_in, gain_out;
  for (const SplitReport& split : report.splits) {
    if (split.domain == PoolDomain::kInDomain) gain_in = split.relative_gain;
    if (split.domain == PoolDomain::kOutOfDomain) gain_out = split.relative_gain;
  }
  require(gain_in.has_value() && gain_out.has_value(), "a split gain was undefined");
  require(*gain_out >= *gain_in,
          fmt("out-of-domain gain %+.1f%% below in-domain %+.1f%%", *gain_out * 100.0,
              *gain_in * 100.0));
  return fmt("relative gain out-of-domain %+.1f%% >= in-domain %+.1f%%", *gain_out * 100.0,
             *gain_in * 100.0);
}

// --- criterion 9: byte-identical training reruns ----------------------------

std::string criterion_determinism(GateContext& ctx) {
  require(!ctx.convergence_corpus.empty() && !ctx.pipeline_sft_checkpoint.empty(),
          "training artifacts unavailable");
  const Vocabulary conv_vocab = build_vocabulary(ctx.convergence_corpus);

  const fs::path dir_a = ctx.tmp / "sft_decrease_rerun";
  fs::create_directories(dir_a);
  train_sft(ctx.convergence_corpus, conv_vocab, tiny_model_config(), ctx.decrease_cfg,
            dir_a.string());
  require(file_bytes(dir_a / "sft_log.jsonl") == ctx.decrease_log,
          "validation-run log differs between reruns");

  const fs::path dir_b = ctx.tmp / "sft_memorize_rerun";
  fs::create_directories(dir_b);
  train_sft(ctx.convergence_corpus, conv_vocab, tiny_model_config(), ctx.memorize_cfg,
            dir_b.string());
  require(file_bytes(dir_b / "sft_log.jsonl") == ctx.memorize_log,
          "memorization-run log differs between reruns");

  const std::vector<PromptPair> corpus = load_corpus(ctx.pipeline_corpus_path);
  const Vocabulary vocab = build_vocabulary(corpus);
  const fs::path sft_dir = ctx.tmp / "pipeline_sft_rerun";
  fs::create_directories(sft_dir);
  train_sft(corpus, vocab, tiny_model_config(), ctx.pipeline_sft_cfg, sft_dir.string());
  require(file_bytes(sft_dir / "sft_log.jsonl") == ctx.pipeline_sft_log,
          "pipeline sft log differs between reruns");

  const PromptPool pool = pool_from(ctx.pipeline_pool_sources, PoolDomain::kInDomain);
  const fs::path rl_dir = ctx.tmp / "pipeline_rl_rerun";
  fs::create_directories(rl_dir);
  train_rl(ctx.pipeline_sft_checkpoint, pool, synthetic_world(), ctx.pipeline_ppo_cfg,
           ctx.pipeline_explore_cfg, rl_dir.string());
  require(file_bytes(rl_dir / "rl_log.jsonl") == ctx.pipeline_rl_log,
          "pipeline rl log differs between reruns");

  return "four rerun training logs byte-identical to the first runs";
}

}  // namespace

int main() {
  fs::remove_all("acceptance_tmp");
  fs::create_directories("acceptance_tmp");
  GateContext ctx;
  ctx.tmp = "acceptance_tmp";

  int gating_total = 0;
  int gating_passed = 0;

  // budget <= 0 means the criterion carries no runtime bound.
  const auto run = [&](int id, const char* name, double budget_s, bool gating,
                       const std::function<std::string()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    bool ok = false;
    std::string detail;
    try {
      detail = fn();
      ok = true;
    } catch (const std::exception& e) {
      detail = e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && budget_s > 0.0 && secs > budget_s) {
      ok = false;
      detail = fmt("runtime %.1fs exceeds the %.0fs budget", secs, budget_s);
    }
    if (gating) {
      ++gating_total;
      if (ok) ++gating_passed;
    }
    std::printf("[%s] %d. %s%s: %s (%.1fs%s)\n", ok ? "PASS" : "FAIL", id, name,
                gating ? "" : " [non-gating]", detail.c_str(), secs,
                budget_s > 0.0 ? fmt(" of %.0fs budget", budget_s).c_str() : "");
    std::fflush(stdout);
  };

  run(1, "reward clipping and composition", 1.0, true, criterion_reward_arithmetic);
  run(2, "zero kl against a cloned reference", 10.0, true, criterion_kl_identity);
  run(3, "decoding matches the exhaustive oracle", 60.0, true, criterion_decoding_oracle);
  run(4, "analytic gradients match finite differences", 60.0, true, criterion_gradient_check);
  run(5, "ppo ratio, clipping, and model separation", 0.0, true, criterion_ppo_mechanics);
  run(6, "supervised convergence on a synthetic corpus", 300.0, true,
      [&] { return criterion_sft_convergence(ctx); });
  run(7, "rl lift over the supervised baseline", 1800.0, true,
      [&] { return criterion_rl_gain(ctx); });
  run(8, "out-of-domain lift ordering", 0.0, false,
      [&] { return criterion_domain_ordering(ctx); });
  run(9, "byte-identical training reruns", 0.0, true,
      [&] { return criterion_determinism(ctx); });

  std::printf("acceptance: %d/%d gating criteria passed\n", gating_passed, gating_total);
  return gating_passed == gating_total ? 0 : 1;
}
