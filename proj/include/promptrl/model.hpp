// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only transformer with two interchangeable heads: a language-model
// head (policy) and a scalar regression head (value). The policy and value
// models are separate objects with fully disjoint parameters.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "promptrl/autograd.hpp"
#include "promptrl/matrix.hpp"
#include "promptrl/vocab.hpp"

namespace promptrl {

struct ModelConfig {
  int vocab_size = 0;  // 0: derived from the vocabulary at construction
  int context_length = 128;
  int layer_count = 2;
  int hidden_width = 64;
  int head_count = 2;
  // The value model is a full deep copy of the policy backbone rather than
  // sharing the embedding. Only the full-copy layout is implemented.
  bool value_model_full_copy = true;

  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TransformerWeights {
  struct Layer {
    Parameter attn_gain, wq, wk, wv, wo;
    Parameter mlp_gain, w1, b1, w2, b2;
  };

  Parameter wte;  // vocab × d
  Parameter wpe;  // context × d
  std::vector<Layer> layers;
  Parameter final_gain;
  Parameter lm_head;             // vocab × d
  Parameter value_w, value_b;    // 1 × d, 1 × 1

  void init(const ModelConfig& cfg, uint64_t seed);
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  void set_trainable(bool trainable);
  uint64_t checksum() const;
};

// Builds the tape graph up to the final-norm hidden states (T × d).
Var hidden_graph(Tape& tape, TransformerWeights& w, const ModelConfig& cfg,
                 std::span<const int> ids);

// Incremental no-grad forward with a per-layer KV cache. Copyable so beam
// search can branch decoding states cheaply.
class InferenceSession {
 public:
  InferenceSession(const ModelConfig& cfg, const TransformerWeights& w);

  // Consumes one token and returns the final-norm hidden row for its position.
  const std::vector<double>& step(int token);

  int position() const { return pos_; }

 private:
  const ModelConfig* cfg_;
  const TransformerWeights* w_;
  std::vector<std::vector<std::vector<double>>> kcache_, vcache_;  // [layer][pos][d]
  std::vector<double> hidden_;
  int pos_ = 0;
};

class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(ModelConfig cfg, Vocabulary vocab, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }
  bool frozen() const { return frozen_; }

  // Next-token probability vector after `prefix` (non-empty, shorter than
  // the context). Deterministic given parameters and prefix.
  std::vector<double> next_token_distribution(std::span<const int> prefix) const;

  // Per-token log-probabilities of `response` given `query`.
  std::vector<double> sequence_log_prob(std::span<const int> query,
                                        std::span<const int> response) const;

  // Deep copy whose parameters never receive gradient updates.
  PolicyModel clone_frozen() const;

  // Training-path logits (T × V) on the tape.
  Var logits_graph(Tape& tape, std::span<const int> ids);

  // Full-sequence logits without a tape (row t scores the token at t+1).
  Matrix forward_logits(std::span<const int> ids) const;

  InferenceSession session() const { return InferenceSession(cfg_, weights_); }
  std::vector<double> logits_from_hidden(const std::vector<double>& hidden) const;

  TransformerWeights& weights() { return weights_; }
  const TransformerWeights& weights() const { return weights_; }
  uint64_t parameter_checksum() const { return weights_.checksum(); }

  void check_context(size_t total_len) const;

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  TransformerWeights weights_;
  bool frozen_ = false;
};

class ValueModel {
 public:
  ValueModel() = default;
  ValueModel(ModelConfig cfg, Vocabulary vocab, uint64_t init_seed);

  // Deep-copies the policy backbone and zeroes the regression head.
  static ValueModel from_policy(const PolicyModel& policy);

  const ModelConfig& config() const { return cfg_; }
  const Vocabulary& vocab() const { return vocab_; }

  // One scalar per response position.
  std::vector<double> value_estimates(std::span<const int> query,
                                      std::span<const int> response) const;

  // Training-path per-position values (T × 1) on the tape.
  Var values_graph(Tape& tape, std::span<const int> ids);

  TransformerWeights& weights() { return weights_; }
  const TransformerWeights& weights() const { return weights_; }

 private:
  ModelConfig cfg_;
  Vocabulary vocab_;
  TransformerWeights weights_;
};

}  // namespace promptrl
