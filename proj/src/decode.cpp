// SPDX-License-Identifier: Apache-2.0
#include "promptrl/decode.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "promptrl/errors.hpp"

namespace promptrl {

void DecodeConfig::validate() const {
  if (beam_size <= 0) throw ConfigError("decode: beam_size must be positive");
  if (group_count <= 0) throw ConfigError("decode: group_count must be positive");
  if (beam_size % group_count != 0)
    throw ConfigError("decode: beam_size must be divisible by group_count");
  if (diversity_penalty < 0.0)
    throw ConfigError("decode: diversity_penalty must be non-negative");
  if (max_length <= 0) throw ConfigError("decode: max_length must be positive");
  if (randomize_length && (random_min < 1 || random_min > random_max))
    throw ConfigError("decode: random length range must satisfy 1 <= min <= max");
}

namespace {

struct PolicyState final : ScoringState {
  InferenceSession session;
  std::vector<double> hidden;

  PolicyState(const ModelConfig& cfg, const TransformerWeights& w) : session(cfg, w) {}
  std::unique_ptr<ScoringState> clone() const override {
    return std::make_unique<PolicyState>(*this);
  }
};

struct Beam {
  std::vector<int> tokens;
  std::vector<double> token_logp;
  double logp = 0.0;
  bool finished = false;
  std::unique_ptr<ScoringState> state;  // dropped once finished
};

struct Candidate {
  int beam = -1;
  int token = -1;  // -1: pass-through of an already finished beam
  double token_logp = 0.0;
  double base_score = 0.0;  // cumulative raw log-prob after the extension
};

// Shared-pool grouped selection. Returns all beams, every one finished.
std::vector<Beam> run_engine(const SequenceScorer& scorer, std::span<const int> query,
                             int beam_size, int group_count, double diversity_penalty,
                             int max_new_tokens) {
  if (query.empty()) throw InvalidInputError("decode: empty query");
  const int cap = std::min<int>(max_new_tokens,
                                scorer.capacity() - static_cast<int>(query.size()));
  std::vector<Beam> beams;
  {
    Beam root;
    root.state = scorer.start(query);
    if (cap <= 0) {
      // Query fills the context; nothing can be generated, only truncated
      // hypotheses remain.
      root.finished = true;
      root.state.reset();
    }
    beams.push_back(std::move(root));
  }
  const int eos = scorer.eos_id();
  const int group_width = beam_size / group_count;

  for (int step = 0; step < cap; ++step) {
    bool any_active = false;
    for (const Beam& b : beams) any_active |= !b.finished;
    if (!any_active) break;

    // Expand every beam into the shared pool.
    std::vector<Candidate> pool;
    std::vector<std::vector<double>> logps(beams.size());
    for (size_t i = 0; i < beams.size(); ++i) {
      if (beams[i].finished) {
        pool.push_back({static_cast<int>(i), -1, 0.0, beams[i].logp});
        continue;
      }
      logps[i] = scorer.next_log_probs(*beams[i].state);
      for (int v = 0; v < static_cast<int>(logps[i].size()); ++v)
        pool.push_back({static_cast<int>(i), v, logps[i][v], beams[i].logp + logps[i][v]});
    }

    // Deterministic base order: adjusted score is recomputed per group, ties
    // broken by (beam, token).
    std::vector<char> taken(pool.size(), 0);
    std::unordered_map<int, int> picked_counts;  // token -> earlier-group picks
    std::vector<int> selection;
    selection.reserve(beam_size);

    for (int g = 0; g < group_count && static_cast<int>(selection.size()) < beam_size; ++g) {
      std::vector<int> group_picks;
      for (int slot = 0; slot < group_width; ++slot) {
        int best = -1;
        double best_score = 0.0;
        for (size_t c = 0; c < pool.size(); ++c) {
          if (taken[c]) continue;
          double s = pool[c].base_score;
          if (pool[c].token >= 0 && diversity_penalty > 0.0) {
            auto it = picked_counts.find(pool[c].token);
            if (it != picked_counts.end()) s -= diversity_penalty * it->second;
          }
          bool wins;
          if (best < 0)
            wins = true;
          else if (s != best_score)
            wins = s > best_score;
          else  // tie: lowest beam index, then lowest token id
            wins = pool[c].beam < pool[best].beam ||
                   (pool[c].beam == pool[best].beam && pool[c].token < pool[best].token);
          if (wins) {
            best = static_cast<int>(c);
            best_score = s;
          }
        }
        if (best < 0) break;  // pool exhausted (tiny vocab)
        taken[best] = 1;
        selection.push_back(best);
        if (pool[best].token >= 0) group_picks.push_back(pool[best].token);
      }
      for (int t : group_picks) ++picked_counts[t];
    }

    // Materialize the next beam set. Clone states except for the last use of
    // each source beam, which is moved.
    std::vector<int> uses(beams.size(), 0);
    for (int c : selection)
      if (pool[c].token >= 0) ++uses[pool[c].beam];

    std::vector<Beam> next;
    next.reserve(selection.size());
    for (int c : selection) {
      const Candidate& cand = pool[c];
      Beam& src = beams[cand.beam];
      if (cand.token < 0) {
        next.push_back(std::move(src));
        continue;
      }
      Beam b;
      b.tokens = src.tokens;
      b.token_logp = src.token_logp;
      if (--uses[cand.beam] == 0)
        b.state = std::move(src.state);
      else
        b.state = src.state->clone();
      scorer.advance(*b.state, cand.token);
      b.tokens.push_back(cand.token);
      b.token_logp.push_back(cand.token_logp);
      b.logp = cand.base_score;
      b.finished = (cand.token == eos);
      if (b.finished) b.state.reset();
      next.push_back(std::move(b));
    }
    beams = std::move(next);
  }

  for (Beam& b : beams) {
    b.finished = true;  // cap reached counts as finished
    b.state.reset();
  }
  return beams;
}

Hypothesis to_hypothesis(Beam&& b) {
  Hypothesis h;
  h.tokens = std::move(b.tokens);
  h.token_logp = std::move(b.token_logp);
  h.log_prob = b.logp;
  h.finished = b.finished;
  return h;
}

bool better(const Hypothesis& a, const Hypothesis& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

}  // namespace

std::unique_ptr<ScoringState> PolicyScorer::start(std::span<const int> query) const {
  model_->check_context(query.size() + 1);
  auto state = std::make_unique<PolicyState>(model_->config(), model_->weights());
  for (int id : query) state->hidden = state->session.step(id);
  return state;
}

std::vector<double> PolicyScorer::next_log_probs(const ScoringState& state) const {
  const auto& s = static_cast<const PolicyState&>(state);
  std::vector<double> logits = model_->logits_from_hidden(s.hidden);
  std::vector<double> out(logits.size());
  log_softmax_row(logits.data(), static_cast<int>(logits.size()), out.data());
  return out;
}

void PolicyScorer::advance(ScoringState& state, int token) const {
  auto& s = static_cast<PolicyState&>(state);
  s.hidden = s.session.step(token);
}

std::vector<Hypothesis> diverse_beam_search(const SequenceScorer& scorer,
                                            std::span<const int> query,
                                            const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<Beam> beams = run_engine(scorer, query, cfg.beam_size, cfg.group_count,
                                       cfg.diversity_penalty, cfg.max_length);
  std::vector<Hypothesis> out;
  out.reserve(beams.size());
  for (Beam& b : beams) {
    Hypothesis h = to_hypothesis(std::move(b));
    h.score = h.log_prob;
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), better);
  return out;
}

std::vector<Hypothesis> diverse_beam_search(const PolicyModel& model,
                                            std::span<const int> query,
                                            const DecodeConfig& cfg) {
  PolicyScorer scorer(model);
  return diverse_beam_search(scorer, query, cfg);
}

Hypothesis beam_search(const SequenceScorer& scorer, std::span<const int> query,
                       const DecodeConfig& cfg) {
  cfg.validate();
  std::vector<Beam> beams =
      run_engine(scorer, query, cfg.beam_size, 1, 0.0, cfg.max_length);
  std::vector<Hypothesis> out;
  out.reserve(beams.size());
  for (Beam& b : beams) {
    Hypothesis h = to_hypothesis(std::move(b));
    const double len = std::max<size_t>(h.tokens.size(), 1);
    h.score = h.log_prob / std::pow(len, cfg.length_penalty);
    out.push_back(std::move(h));
  }
  std::sort(out.begin(), out.end(), better);
  return out.front();
}

Hypothesis beam_search(const PolicyModel& model, std::span<const int> query,
                       const DecodeConfig& cfg) {
  PolicyScorer scorer(model);
  return beam_search(scorer, query, cfg);
}

int draw_max_length(Rng& rng, int lo, int hi) {
  if (lo < 1 || lo > hi) throw InvalidInputError("draw_max_length: bad range");
  return rng.uniform_int(lo, hi);
}

}  // namespace promptrl
