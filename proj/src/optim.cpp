// SPDX-License-Identifier: Apache-2.0
#include "promptrl/optim.hpp"

#include <cmath>

namespace promptrl {

AdamOptimizer::AdamOptimizer(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.rows, p->value.cols);
    v_.emplace_back(p->value.rows, p->value.cols);
  }
}

void AdamOptimizer::step() {
  double sq = 0.0;
  for (const Parameter* p : params_) {
    if (!p->trainable) continue;
    for (double g : p->grad.data) sq += g * g;
  }
  last_norm_ = std::sqrt(sq);
  double clip_scale = 1.0;
  if (cfg_.grad_clip > 0.0 && last_norm_ > cfg_.grad_clip)
    clip_scale = cfg_.grad_clip / last_norm_;

  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    if (!p->trainable) continue;
    double* w = p->value.data.data();
    double* g = p->grad.data.data();
    double* m = m_[i].data.data();
    double* v = v_[i].data.data();
    const size_t n = p->value.size();
    for (size_t j = 0; j < n; ++j) {
      const double gj = g[j] * clip_scale;
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
  zero_grad();
}

void AdamOptimizer::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace promptrl
