// SPDX-License-Identifier: Apache-2.0
//
// Beam decoding over an abstract next-token scorer. Both ops share one
// engine: diverse beam search is a shared candidate pool drained group by
// group per step, where each group after the first sees the log-prob of a
// token lowered by diversity_penalty times the number of earlier-group
// selections of that token at the same step. With penalty 0 the group
// structure is inert and the engine reduces to standard beam search.
#pragma once

#include <memory>
#include <span>
#include <vector>

#include "promptrl/model.hpp"
#include "promptrl/rng.hpp"

namespace promptrl {

struct DecodeConfig {
  int beam_size = 8;
  int group_count = 4;  // must divide beam_size
  double diversity_penalty = 1.0;
  double length_penalty = 1.0;
  // Cap on generated tokens. Exploration re-draws it per query from
  // [random_min, random_max] when randomize_length is set; the caller
  // resolves the draw (draw_max_length) and passes a concrete max_length.
  int max_length = 30;
  bool randomize_length = false;
  int random_min = 15;
  int random_max = 75;

  void validate() const;

  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

struct Hypothesis {
  std::vector<int> tokens;         // generated tokens; includes eos when produced
  std::vector<double> token_logp;  // model log-prob of each generated token
  double log_prob = 0.0;           // sum of token_logp
  double score = 0.0;              // ranking score; length-penalized in eval mode
  bool finished = false;           // eos reached or max_length hit
};

class ScoringState {
 public:
  virtual ~ScoringState() = default;
  virtual std::unique_ptr<ScoringState> clone() const = 0;
};

// Incremental next-token scorer. Separate from PolicyModel so tests can
// drive the engine with hand-set tables.
class SequenceScorer {
 public:
  virtual ~SequenceScorer() = default;
  virtual int vocab_size() const = 0;
  virtual int eos_id() const = 0;
  // Total tokens (query plus generated) a state can hold.
  virtual int capacity() const = 0;
  // State positioned after a non-empty query.
  virtual std::unique_ptr<ScoringState> start(std::span<const int> query) const = 0;
  // Log-probabilities for the next token.
  virtual std::vector<double> next_log_probs(const ScoringState& state) const = 0;
  virtual void advance(ScoringState& state, int token) const = 0;
};

class PolicyScorer final : public SequenceScorer {
 public:
  explicit PolicyScorer(const PolicyModel& model) : model_(&model) {}

  int vocab_size() const override { return model_->config().vocab_size; }
  int eos_id() const override { return model_->vocab().eos_id(); }
  int capacity() const override { return model_->config().context_length; }
  std::unique_ptr<ScoringState> start(std::span<const int> query) const override;
  std::vector<double> next_log_probs(const ScoringState& state) const override;
  void advance(ScoringState& state, int token) const override;

 private:
  const PolicyModel* model_;
};

// All beam_size hypotheses, best raw log-prob first. Exploration mode.
std::vector<Hypothesis> diverse_beam_search(const SequenceScorer& scorer,
                                            std::span<const int> query,
                                            const DecodeConfig& cfg);
std::vector<Hypothesis> diverse_beam_search(const PolicyModel& model,
                                            std::span<const int> query,
                                            const DecodeConfig& cfg);

// Best hypothesis by log_prob / length^length_penalty. Evaluation mode;
// group_count and diversity_penalty are ignored.
Hypothesis beam_search(const SequenceScorer& scorer, std::span<const int> query,
                       const DecodeConfig& cfg);
Hypothesis beam_search(const PolicyModel& model, std::span<const int> query,
                       const DecodeConfig& cfg);

// Uniform inclusive draw for the per-query generation cap.
int draw_max_length(Rng& rng, int lo = 15, int hi = 75);

}  // namespace promptrl
