// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "promptrl/decode.hpp"
#include "promptrl/errors.hpp"

using namespace promptrl;

namespace {

// Scorer with hand-set log-prob tables keyed by the generated suffix.
// Sequences without an entry fall back to uniform scores.
class TableScorer final : public SequenceScorer {
 public:
  TableScorer(int vocab, int eos, int cap) : vocab_(vocab), eos_(eos), cap_(cap) {}

  void set(std::vector<int> generated, std::vector<double> logps) {
    REQUIRE(static_cast<int>(logps.size()) == vocab_);
    table_[std::move(generated)] = std::move(logps);
  }

  int vocab_size() const override { return vocab_; }
  int eos_id() const override { return eos_; }
  int capacity() const override { return cap_; }

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
    auto it = table_.find(st.generated);
    if (it != table_.end()) return it->second;
    return std::vector<double>(vocab_, -std::log(static_cast<double>(vocab_)));
  }

  void advance(ScoringState& s, int token) const override {
    static_cast<State&>(s).generated.push_back(token);
  }

 private:
  int vocab_, eos_, cap_;
  std::map<std::vector<int>, std::vector<double>> table_;
};

PolicyModel tiny_policy(uint64_t seed = 7) {
  ModelConfig cfg{.vocab_size = 0, .context_length = 32, .layer_count = 2,
                  .hidden_width = 8, .head_count = 2};
  Vocabulary vocab = Vocabulary::from_tokens({"a", "b", "c", "d", "e", "f"});
  return PolicyModel(cfg, vocab, seed);
}

std::vector<std::vector<int>> token_lists(const std::vector<Hypothesis>& hs) {
  std::vector<std::vector<int>> out;
  for (const auto& h : hs) out.push_back(h.tokens);
  return out;
}

}  // namespace

TEST_CASE("grouped selection with hand-set tables follows the penalty bookkeeping") {
  // V=4, no reachable eos, 2 steps, 2 groups of 2. All 16 length-2 sequences
  // were enumerated by hand; with penalty 1.0 the second group at step 2 must
  // avoid token 0 (picked twice by group one) and select [0,1] and [0,2],
  // displacing [2,0] which wins under no penalty.
  TableScorer scorer(4, 3 /*eos never probable*/, 16);
  scorer.set({}, {-0.1, -0.2, -0.7, -3.0});
  scorer.set({0}, {-0.1, -0.5, -1.0, -4.0});
  scorer.set({1}, {-0.15, -0.9, -1.2, -4.0});
  scorer.set({2}, {-0.25, -0.5, -2.5, -4.0});
  scorer.set({3}, {-5.0, -5.0, -5.0, -5.0});
  std::vector<int> query = {0};

  DecodeConfig cfg;
  cfg.beam_size = 4;
  cfg.group_count = 2;
  cfg.diversity_penalty = 1.0;
  cfg.max_length = 2;

  auto hyps = diverse_beam_search(scorer, query, cfg);
  REQUIRE(hyps.size() == 4);
  CHECK(token_lists(hyps) == std::vector<std::vector<int>>{
                                 {0, 0}, {1, 0}, {0, 1}, {0, 2}});
  CHECK(hyps[0].log_prob == doctest::Approx(-0.2));
  CHECK(hyps[1].log_prob == doctest::Approx(-0.35));
  CHECK(hyps[2].log_prob == doctest::Approx(-0.6));
  CHECK(hyps[3].log_prob == doctest::Approx(-1.1));
  for (const auto& h : hyps) CHECK(h.finished);

  // Same table with penalty 0: plain top-4, [2,0] replaces [0,2].
  cfg.diversity_penalty = 0.0;
  auto plain = diverse_beam_search(scorer, query, cfg);
  CHECK(token_lists(plain) == std::vector<std::vector<int>>{
                                  {0, 0}, {1, 0}, {0, 1}, {2, 0}});
  CHECK(plain[3].log_prob == doctest::Approx(-0.95));
}

TEST_CASE("zero penalty makes the group structure inert") {
  PolicyModel p = tiny_policy();
  std::vector<int> query = {1, 5, 4};
  DecodeConfig cfg;
  cfg.beam_size = 8;
  cfg.diversity_penalty = 0.0;
  cfg.max_length = 6;

  cfg.group_count = 1;
  auto g1 = diverse_beam_search(p, query, cfg);
  cfg.group_count = 4;
  auto g4 = diverse_beam_search(p, query, cfg);
  cfg.group_count = 8;  // one beam per group
  auto g8 = diverse_beam_search(p, query, cfg);

  CHECK(token_lists(g1) == token_lists(g4));
  CHECK(token_lists(g1) == token_lists(g8));
  for (size_t i = 0; i < g1.size(); ++i)
    CHECK(g1[i].log_prob == doctest::Approx(g8[i].log_prob).epsilon(1e-12));
}

TEST_CASE("positive penalty yields pairwise distinct hypotheses") {
  PolicyModel p = tiny_policy();
  DecodeConfig cfg;
  cfg.beam_size = 8;
  cfg.group_count = 4;
  cfg.diversity_penalty = 1.0;
  cfg.max_length = 8;

  for (uint64_t qseed = 0; qseed < 50; ++qseed) {
    Rng rng(1000 + qseed);
    std::vector<int> query;
    const int qlen = rng.uniform_int(1, 4);
    for (int i = 0; i < qlen; ++i) query.push_back(rng.uniform_int(4, p.vocab().size() - 1));
    auto hyps = diverse_beam_search(p, query, cfg);
    REQUIRE(hyps.size() == 8);
    std::set<std::vector<int>> uniq;
    for (const auto& h : hyps) {
      CHECK(h.finished);
      uniq.insert(h.tokens);
    }
    CHECK(uniq.size() == 8);
  }
}

TEST_CASE("decode log-probs match the policy's own sequence scoring") {
  PolicyModel p = tiny_policy();
  std::vector<int> query = {1, 4, 6};
  DecodeConfig cfg;
  cfg.beam_size = 4;
  cfg.group_count = 2;
  cfg.max_length = 6;
  auto hyps = diverse_beam_search(p, query, cfg);
  for (const auto& h : hyps) {
    auto want = p.sequence_log_prob(query, h.tokens);
    REQUIRE(want.size() == h.token_logp.size());
    double total = 0.0;
    for (size_t t = 0; t < want.size(); ++t) {
      CHECK(h.token_logp[t] == doctest::Approx(want[t]).epsilon(1e-12));
      total += want[t];
    }
    CHECK(h.log_prob == doctest::Approx(total).epsilon(1e-12));
  }
}

TEST_CASE("beam search with beam at least |V|^depth equals exhaustive argmax") {
  PolicyModel p = tiny_policy(21);
  const int V = p.vocab().size();  // 10
  const int depth = 2;
  std::vector<int> query = {1, 5};

  // Oracle: enumerate every generated sequence (stopping at eos or depth),
  // score by chained next-token distributions, length-penalize, take the max
  // with the engine's tie-break (lexicographically smallest tokens).
  struct Best {
    double score = -1e300;
    std::vector<int> tokens;
  } best;
  const double length_penalty = 1.0;
  std::function<void(std::vector<int>&, double)> walk = [&](std::vector<int>& gen,
                                                            double logp) {
    const bool ended = !gen.empty() && gen.back() == p.vocab().eos_id();
    if (ended || static_cast<int>(gen.size()) == depth) {
      const double score = logp / std::pow(static_cast<double>(gen.size()), length_penalty);
      if (score > best.score || (score == best.score && gen < best.tokens)) {
        best.score = score;
        best.tokens = gen;
      }
      return;
    }
    std::vector<int> prefix = query;
    prefix.insert(prefix.end(), gen.begin(), gen.end());
    auto dist = p.next_token_distribution(prefix);
    for (int v = 0; v < V; ++v) {
      gen.push_back(v);
      walk(gen, logp + std::log(dist[v]));
      gen.pop_back();
    }
  };
  std::vector<int> scratch;
  walk(scratch, 0.0);

  DecodeConfig cfg;
  cfg.beam_size = V * V;  // >= |V|^depth
  cfg.group_count = 1;
  cfg.length_penalty = length_penalty;
  cfg.max_length = depth;
  Hypothesis h = beam_search(p, query, cfg);
  CHECK(h.tokens == best.tokens);
  CHECK(h.score == doctest::Approx(best.score).epsilon(1e-9));
}

TEST_CASE("beam one equals greedy decoding") {
  PolicyModel p = tiny_policy(33);
  std::vector<int> query = {2, 7};
  DecodeConfig cfg;
  cfg.beam_size = 1;
  cfg.group_count = 1;
  cfg.max_length = 10;
  Hypothesis h = beam_search(p, query, cfg);

  std::vector<int> greedy;
  std::vector<int> prefix = query;
  for (int step = 0; step < 10; ++step) {
    auto dist = p.next_token_distribution(prefix);
    int arg = 0;
    for (int v = 1; v < static_cast<int>(dist.size()); ++v)
      if (dist[v] > dist[arg]) arg = v;
    greedy.push_back(arg);
    prefix.push_back(arg);
    if (arg == p.vocab().eos_id()) break;
  }
  CHECK(h.tokens == greedy);
}

TEST_CASE("length penalty arbitrates between short and long hypotheses") {
  // Two clean finished paths: [1, eos] with log-prob -1.0 and [0,0,0, eos]
  // with -1.6. Penalty 1.0 prefers the long one (-0.4 vs -0.5); penalty 0
  // prefers the short one.
  TableScorer scorer(3, 2, 16);
  const double kLow = -9.0;
  scorer.set({}, {-0.4, -0.5, kLow});
  scorer.set({1}, {kLow, kLow, -0.5});
  scorer.set({0}, {-0.4, kLow, kLow});
  scorer.set({0, 0}, {-0.4, kLow, kLow});
  scorer.set({0, 0, 0}, {kLow, kLow, -0.4});
  std::vector<int> query = {0};

  DecodeConfig cfg;
  cfg.beam_size = 3;
  cfg.group_count = 1;
  cfg.max_length = 4;

  cfg.length_penalty = 1.0;
  Hypothesis slow = beam_search(scorer, query, cfg);
  CHECK(slow.tokens == std::vector<int>{0, 0, 0, 2});
  CHECK(slow.score == doctest::Approx(-1.6 / 4.0));

  cfg.length_penalty = 0.0;
  Hypothesis fast = beam_search(scorer, query, cfg);
  CHECK(fast.tokens == std::vector<int>{1, 2});
  CHECK(fast.score == doctest::Approx(-1.0));
}

TEST_CASE("generation is truncated to the remaining context") {
  PolicyModel p = tiny_policy();  // context 32
  std::vector<int> query(30, 4);
  DecodeConfig cfg;
  cfg.beam_size = 2;
  cfg.group_count = 1;
  cfg.max_length = 50;
  auto hyps = diverse_beam_search(p, query, cfg);
  for (const auto& h : hyps) {
    CHECK(h.tokens.size() <= 2);  // only 2 slots left
    CHECK(h.finished);
  }
}

TEST_CASE("max length draw is bounded, inclusive, and seed-stable") {
  Rng a(5), b(5);
  std::set<int> seen;
  for (int i = 0; i < 10000; ++i) {
    const int v = draw_max_length(a);
    CHECK(v == draw_max_length(b));
    CHECK(v >= 15);
    CHECK(v <= 75);
    seen.insert(v);
  }
  CHECK(seen.count(15) == 1);
  CHECK(seen.count(75) == 1);
  CHECK(seen.size() == 61);
  CHECK_THROWS_AS(draw_max_length(a, 10, 5), InvalidInputError);
}

TEST_CASE("decode config validation") {
  DecodeConfig cfg;
  cfg.beam_size = 8;
  cfg.group_count = 3;  // does not divide 8
  std::vector<int> q = {1};
  PolicyModel p = tiny_policy();
  CHECK_THROWS_AS(diverse_beam_search(p, q, cfg), ConfigError);
  cfg.group_count = 4;
  cfg.diversity_penalty = -0.5;
  CHECK_THROWS_AS(diverse_beam_search(p, q, cfg), ConfigError);
  cfg.diversity_penalty = 1.0;
  cfg.max_length = 0;
  CHECK_THROWS_AS(beam_search(p, q, cfg), ConfigError);
}
