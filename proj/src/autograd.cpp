// SPDX-License-Identifier: Apache-2.0
#include "promptrl/autograd.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <memory>

namespace promptrl {

void softmax_row(const double* logits, int n, double* out) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  const double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

double log_softmax_at(const double* logits, int n, int pick) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
  return logits[pick] - mx - std::log(sum);
}

void log_softmax_row(const double* logits, int n, double* out) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += std::exp(logits[i] - mx);
  const double lsum = std::log(sum);
  // Same expression order as log_softmax_at so values match bit for bit.
  for (int i = 0; i < n; ++i) out[i] = logits[i] - mx - lsum;
}

Var Tape::make(Matrix val) {
  nodes_.emplace_back();
  Node& n = nodes_.back();
  n.val = std::move(val);
  n.grad = Matrix(n.val.rows, n.val.cols);
  return &n;
}

Var Tape::param(Parameter& p) {
  Var out = make(p.value);
  Parameter* pp = &p;
  out->backprop = [pp](Node& self) {
    if (pp->trainable) add_inplace(pp->grad, self.grad);
  };
  return out;
}

Var Tape::embedding(Parameter& wte, Parameter& wpe, std::span<const int> ids) {
  const int d = wte.value.cols;
  Matrix out(static_cast<int>(ids.size()), d);
  for (size_t t = 0; t < ids.size(); ++t) {
    const double* tok = wte.value.row(ids[t]);
    const double* pos = wpe.value.row(static_cast<int>(t));
    double* o = out.row(static_cast<int>(t));
    for (int j = 0; j < d; ++j) o[j] = tok[j] + pos[j];
  }
  Var node = make(std::move(out));
  Parameter* tp = &wte;
  Parameter* pp = &wpe;
  std::vector<int> idv(ids.begin(), ids.end());
  node->backprop = [tp, pp, idv](Node& self) {
    const int d = self.val.cols;
    for (size_t t = 0; t < idv.size(); ++t) {
      const double* g = self.grad.row(static_cast<int>(t));
      if (tp->trainable) {
        double* gt = tp->grad.row(idv[t]);
        for (int j = 0; j < d; ++j) gt[j] += g[j];
      }
      if (pp->trainable) {
        double* gp = pp->grad.row(static_cast<int>(t));
        for (int j = 0; j < d; ++j) gp[j] += g[j];
      }
    }
  };
  return node;
}

Var Tape::matmul_nt(Var a, Var b) {
  Matrix out;
  promptrl::matmul_nt(a->val, b->val, out);
  Var node = make(std::move(out));
  node->backprop = [a, b](Node& self) {
    // out = A B^T : dA += dOut B ; dB += dOut^T A
    matmul_acc(self.grad, b->val, a->grad);
    matmul_tn_acc(self.grad, a->val, b->grad);
  };
  return node;
}

Var Tape::add(Var a, Var b) {
  assert(a->val.same_shape(b->val));
  Matrix out = a->val;
  add_inplace(out, b->val);
  Var node = make(std::move(out));
  node->backprop = [a, b](Node& self) {
    add_inplace(a->grad, self.grad);
    add_inplace(b->grad, self.grad);
  };
  return node;
}

Var Tape::add_row(Var a, Var bias) {
  assert(bias->val.rows == 1 && bias->val.cols == a->val.cols);
  Matrix out = a->val;
  for (int r = 0; r < out.rows; ++r) {
    double* o = out.row(r);
    const double* bv = bias->val.row(0);
    for (int j = 0; j < out.cols; ++j) o[j] += bv[j];
  }
  Var node = make(std::move(out));
  node->backprop = [a, bias](Node& self) {
    add_inplace(a->grad, self.grad);
    double* bg = bias->grad.row(0);
    for (int r = 0; r < self.grad.rows; ++r) {
      const double* g = self.grad.row(r);
      for (int j = 0; j < self.grad.cols; ++j) bg[j] += g[j];
    }
  };
  return node;
}

Var Tape::relu(Var a) {
  Matrix out = a->val;
  for (double& v : out.data) v = std::max(v, 0.0);
  Var node = make(std::move(out));
  node->backprop = [a](Node& self) {
    for (size_t i = 0; i < self.grad.data.size(); ++i)
      if (a->val.data[i] > 0.0) a->grad.data[i] += self.grad.data[i];
  };
  return node;
}

Var Tape::rmsnorm(Var x, Var gain) {
  constexpr double kEps = 1e-8;
  const int rows = x->val.rows, d = x->val.cols;
  assert(gain->val.rows == 1 && gain->val.cols == d);
  Matrix out(rows, d);
  std::vector<double> inv_rms(rows);
  for (int r = 0; r < rows; ++r) {
    const double* xr = x->val.row(r);
    double ms = 0.0;
    for (int j = 0; j < d; ++j) ms += xr[j] * xr[j];
    ms = ms / d + kEps;
    inv_rms[r] = 1.0 / std::sqrt(ms);
    double* o = out.row(r);
    const double* g = gain->val.row(0);
    for (int j = 0; j < d; ++j) o[j] = xr[j] * inv_rms[r] * g[j];
  }
  Var node = make(std::move(out));
  node->backprop = [x, gain, inv_rms](Node& self) {
    const int rows = self.val.rows, d = self.val.cols;
    const double* gv = gain->val.row(0);
    double* gg = gain->grad.row(0);
    for (int r = 0; r < rows; ++r) {
      const double* xr = x->val.row(r);
      const double* dy = self.grad.row(r);
      double* dx = x->grad.row(r);
      const double ir = inv_rms[r];
      // d(gain): dy ⊙ x/rms ; d(x): g⊙dy/rms − x · Σ(dy⊙g⊙x) / (d·rms³)
      double inner = 0.0;
      for (int j = 0; j < d; ++j) {
        gg[j] += dy[j] * xr[j] * ir;
        inner += dy[j] * gv[j] * xr[j];
      }
      const double c = inner * ir * ir * ir / d;
      for (int j = 0; j < d; ++j) dx[j] += dy[j] * gv[j] * ir - xr[j] * c;
    }
  };
  return node;
}

Var Tape::causal_attention(Var q, Var k, Var v, int head_count) {
  const int T = q->val.rows, d = q->val.cols;
  assert(d % head_count == 0);
  const int hd = d / head_count;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // One lower-triangular probability matrix per head, kept for backward.
  auto probs = std::make_shared<std::vector<Matrix>>();
  probs->reserve(head_count);
  Matrix out(T, d);
  std::vector<double> srow;
  for (int h = 0; h < head_count; ++h) {
    const int c0 = h * hd;
    Matrix P(T, T);
    for (int t = 0; t < T; ++t) {
      srow.assign(t + 1, 0.0);
      const double* qr = q->val.row(t) + c0;
      for (int j = 0; j <= t; ++j) srow[j] = dot(qr, k->val.row(j) + c0, hd) * scale;
      softmax_row(srow.data(), t + 1, P.row(t));
      double* o = out.row(t) + c0;
      for (int j = 0; j <= t; ++j) {
        const double p = P(t, j);
        const double* vr = v->val.row(j) + c0;
        for (int c = 0; c < hd; ++c) o[c] += p * vr[c];
      }
    }
    probs->push_back(std::move(P));
  }

  Var node = make(std::move(out));
  node->backprop = [q, k, v, head_count, hd, scale, probs](Node& self) {
    const int T = self.val.rows;
    std::vector<double> dp(T), ds(T);
    for (int h = 0; h < head_count; ++h) {
      const int c0 = h * hd;
      const Matrix& P = (*probs)[h];
      for (int t = 0; t < T; ++t) {
        const double* dout = self.grad.row(t) + c0;
        // dV_j += P_tj * dOut_t ; dp_j = dOut_t · V_j
        for (int j = 0; j <= t; ++j) {
          const double p = P(t, j);
          double* dv = v->grad.row(j) + c0;
          const double* vr = v->val.row(j) + c0;
          double acc = 0.0;
          for (int c = 0; c < hd; ++c) {
            dv[c] += p * dout[c];
            acc += dout[c] * vr[c];
          }
          dp[j] = acc;
        }
        // softmax backward: ds = P ⊙ (dp − Σ dp⊙P)
        double inner = 0.0;
        for (int j = 0; j <= t; ++j) inner += dp[j] * P(t, j);
        for (int j = 0; j <= t; ++j) ds[j] = P(t, j) * (dp[j] - inner);
        // dQ_t += Σ ds_j K_j · scale ; dK_j += ds_j Q_t · scale
        double* dq = q->grad.row(t) + c0;
        const double* qr = q->val.row(t) + c0;
        for (int j = 0; j <= t; ++j) {
          const double s = ds[j] * scale;
          const double* kr = k->val.row(j) + c0;
          double* dk = k->grad.row(j) + c0;
          for (int c = 0; c < hd; ++c) {
            dq[c] += s * kr[c];
            dk[c] += s * qr[c];
          }
        }
      }
    }
  };
  return node;
}

Var Tape::masked_nll(Var logits, std::span<const int> targets, std::span<const uint8_t> mask) {
  const int T = logits->val.rows, V = logits->val.cols;
  assert(targets.size() == static_cast<size_t>(T) && mask.size() == static_cast<size_t>(T));
  int masked = 0;
  double total = 0.0;
  auto soft = std::make_shared<Matrix>(T, V);
  for (int t = 0; t < T; ++t) {
    if (!mask[t]) continue;
    softmax_row(logits->val.row(t), V, soft->row(t));
    total -= log_softmax_at(logits->val.row(t), V, targets[t]);
    ++masked;
  }
  assert(masked > 0);
  Matrix out(1, 1);
  out(0, 0) = total / masked;
  Var node = make(std::move(out));
  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<uint8_t> msk(mask.begin(), mask.end());
  node->backprop = [logits, tgt, msk, masked, soft](Node& self) {
    const double g = self.grad(0, 0) / masked;
    const int V = logits->val.cols;
    for (size_t t = 0; t < tgt.size(); ++t) {
      if (!msk[t]) continue;
      double* dl = logits->grad.row(static_cast<int>(t));
      const double* p = soft->row(static_cast<int>(t));
      for (int j = 0; j < V; ++j) dl[j] += g * p[j];
      dl[tgt[t]] -= g;
    }
  };
  return node;
}

Var Tape::ppo_surrogate(Var logits, std::span<const int> tokens,
                        std::span<const double> behavior_logp,
                        std::span<const double> advantages, double clip_epsilon) {
  const int T = logits->val.rows, V = logits->val.cols;
  assert(tokens.size() == static_cast<size_t>(T));
  assert(behavior_logp.size() == tokens.size() && advantages.size() == tokens.size());

  auto soft = std::make_shared<Matrix>(T, V);
  std::vector<double> ratio(T);
  std::vector<uint8_t> unclipped(T);
  double total = 0.0;
  for (int t = 0; t < T; ++t) {
    softmax_row(logits->val.row(t), V, soft->row(t));
    const double new_logp = log_softmax_at(logits->val.row(t), V, tokens[t]);
    ratio[t] = std::exp(new_logp - behavior_logp[t]);
    const double a = advantages[t];
    const double plain = ratio[t] * a;
    const double clipped = std::clamp(ratio[t], 1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
    // min() picks the pessimistic branch; gradient flows only through the
    // plain term when it is the active one.
    unclipped[t] = plain <= clipped ? 1 : 0;
    total += std::min(plain, clipped);
  }
  Matrix out(1, 1);
  out(0, 0) = -total / T;
  Var node = make(std::move(out));
  std::vector<int> tok(tokens.begin(), tokens.end());
  std::vector<double> adv(advantages.begin(), advantages.end());
  node->backprop = [logits, tok, adv, ratio, unclipped, soft](Node& self) {
    const int T = logits->val.rows, V = logits->val.cols;
    const double g = self.grad(0, 0);
    for (int t = 0; t < T; ++t) {
      if (!unclipped[t]) continue;
      // d(-r·A/T)/dlogit = -(A·r/T)(1{y} − p)
      const double c = -g * adv[t] * ratio[t] / T;
      double* dl = logits->grad.row(t);
      const double* p = soft->row(t);
      for (int j = 0; j < V; ++j) dl[j] += -c * p[j];
      dl[tok[t]] += c;
    }
  };
  return node;
}

Var Tape::mse_from(Var values, std::span<const double> targets, int row_begin) {
  assert(values->val.cols == 1);
  const int n = static_cast<int>(targets.size());
  assert(row_begin + n <= values->val.rows);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double diff = values->val(row_begin + i, 0) - targets[i];
    total += diff * diff;
  }
  Matrix out(1, 1);
  out(0, 0) = total / n;
  Var node = make(std::move(out));
  std::vector<double> tgt(targets.begin(), targets.end());
  node->backprop = [values, tgt, row_begin](Node& self) {
    const double g = self.grad(0, 0);
    const int n = static_cast<int>(tgt.size());
    for (int i = 0; i < n; ++i)
      values->grad(row_begin + i, 0) += g * 2.0 * (values->val(row_begin + i, 0) - tgt[i]) / n;
  };
  return node;
}

Var Tape::rows(Var a, int begin, int count) {
  assert(begin >= 0 && count >= 1 && begin + count <= a->val.rows);
  Matrix out(count, a->val.cols);
  for (int i = 0; i < count; ++i) {
    std::copy(a->val.row(begin + i), a->val.row(begin + i) + a->val.cols, out.row(i));
  }
  Var node = make(std::move(out));
  node->backprop = [a, begin, count](Node& self) {
    for (int i = 0; i < count; ++i) {
      const double* g = self.grad.row(i);
      double* dst = a->grad.row(begin + i);
      for (int j = 0; j < a->val.cols; ++j) dst[j] += g[j];
    }
  };
  return node;
}

Var Tape::scale(Var a, double s) {
  Matrix out = a->val;
  scale_inplace(out, s);
  Var node = make(std::move(out));
  node->backprop = [a, s](Node& self) {
    for (size_t i = 0; i < self.grad.data.size(); ++i) a->grad.data[i] += s * self.grad.data[i];
  };
  return node;
}

void Tape::backward(Var loss) {
  assert(loss->val.rows == 1 && loss->val.cols == 1);
  loss->grad(0, 0) = 1.0;
  bool reached = false;  // nodes created after the loss cannot influence it
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (&*it == loss) reached = true;
    if (reached && it->backprop) it->backprop(*it);
  }
}

}  // namespace promptrl
