// SPDX-License-Identifier: Apache-2.0
//
// Matrix-level reverse-mode autodiff on a per-forward tape. The op set is
// exactly what the decoder-only model needs: linears, rmsnorm, relu, fused
// causal attention, embedding gather, and the three loss heads (masked NLL,
// clipped-ratio surrogate, masked MSE).
#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "promptrl/matrix.hpp"

namespace promptrl {

// A named trainable tensor. Gradients accumulate across backward passes
// until zero_grad().
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  Parameter() = default;
  Parameter(std::string n, int rows, int cols)
      : name(std::move(n)), value(rows, cols), grad(rows, cols) {}

  void zero_grad() { grad.fill(0.0); }
};

struct Node {
  Matrix val;
  Matrix grad;  // same shape as val, zero until backward reaches it
  std::function<void(Node&)> backprop;
};

using Var = Node*;

class Tape {
 public:
  // Leaf bound to a parameter; backward accumulates into p.grad when trainable.
  Var param(Parameter& p);

  // Gathers wte[ids[t]] + wpe[t] per row.
  Var embedding(Parameter& wte, Parameter& wpe, std::span<const int> ids);

  // a(m×k) * b(n×k)^T -> m×n. Weight matrices are stored out×in.
  Var matmul_nt(Var a, Var b);

  Var add(Var a, Var b);
  // bias is 1×n, broadcast over rows of a.
  Var add_row(Var a, Var bias);
  Var relu(Var a);
  // Row-wise x / rms(x) ⊙ gain, gain 1×d.
  Var rmsnorm(Var x, Var gain);
  // Multi-head causal self-attention over q,k,v (all T×d).
  Var causal_attention(Var q, Var k, Var v, int head_count);

  // Mean negative log-likelihood over rows with mask!=0. logits is T×V;
  // row t scores targets[t].
  Var masked_nll(Var logits, std::span<const int> targets, std::span<const uint8_t> mask);

  // PPO clipped-surrogate policy loss (to minimize): -mean_t min(r·A, clip(r)·A)
  // where r_t = exp(logp_new - behavior_logp). Row t of logits scores tokens[t].
  Var ppo_surrogate(Var logits, std::span<const int> tokens,
                    std::span<const double> behavior_logp, std::span<const double> advantages,
                    double clip_epsilon);

  // Mean squared error between values (T×1) rows [row_begin, ...) and targets.
  Var mse_from(Var values, std::span<const double> targets, int row_begin);

  // Row slice [begin, begin + count); gradients route back to those rows.
  Var rows(Var a, int begin, int count);

  Var scale(Var a, double s);

  // Seeds d(loss)=1 and runs the tape in reverse creation order.
  void backward(Var loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  Var make(Matrix val);
  std::deque<Node> nodes_;
};

// Row-wise log-softmax of a single row of logits evaluated at index `pick`.
// Shared by the inference path and the loss ops so both compute identical
// numbers.
double log_softmax_at(const double* logits, int n, int pick);

// Full log-softmax row; out[j] equals log_softmax_at(logits, n, j) exactly.
void log_softmax_row(const double* logits, int n, double* out);

// In-place softmax of one row, numerically stabilized.
void softmax_row(const double* logits, int n, double* out);

}  // namespace promptrl
