// SPDX-License-Identifier: Apache-2.0
#include "promptrl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "promptrl/errors.hpp"
#include "promptrl/rng.hpp"

namespace promptrl {

namespace {
constexpr double kInitStd = 0.08;
constexpr double kRmsEps = 1e-8;

void fill_gaussian(Matrix& m, Rng& rng, double stddev) {
  for (double& v : m.data) v = rng.normal(0.0, stddev);
}

void rmsnorm_row(const double* x, const double* gain, int d, double* out) {
  double ms = 0.0;
  for (int j = 0; j < d; ++j) ms += x[j] * x[j];
  const double inv = 1.0 / std::sqrt(ms / d + kRmsEps);
  for (int j = 0; j < d; ++j) out[j] = x[j] * inv * gain[j];
}

// out_j = dot(x, w.row(j)) + (bias ? bias_j : 0)
void linear_row(const double* x, const Matrix& w, const double* bias, double* out) {
  for (int j = 0; j < w.rows; ++j) out[j] = dot(x, w.row(j), w.cols) + (bias ? bias[j] : 0.0);
}
}  // namespace

void ModelConfig::validate() const {
  // 0 means "derived from the vocabulary at model construction".
  if (vocab_size < 0) throw ConfigError("model: vocab_size must be non-negative");
  if (context_length <= 0) throw ConfigError("model: context_length must be positive");
  if (layer_count <= 0) throw ConfigError("model: layer_count must be positive");
  if (hidden_width <= 0) throw ConfigError("model: hidden_width must be positive");
  if (head_count <= 0) throw ConfigError("model: head_count must be positive");
  if (hidden_width % head_count != 0)
    throw ConfigError("model: hidden_width must be divisible by head_count");
  if (!value_model_full_copy)
    throw ConfigError("model: only the full-copy value model layout is implemented");
}

void TransformerWeights::init(const ModelConfig& cfg, uint64_t seed) {
  Rng rng(derive_seed(seed, "model-init"));
  const int d = cfg.hidden_width;
  wte = Parameter("wte", cfg.vocab_size, d);
  wpe = Parameter("wpe", cfg.context_length, d);
  fill_gaussian(wte.value, rng, kInitStd);
  fill_gaussian(wpe.value, rng, kInitStd);
  layers.clear();
  for (int l = 0; l < cfg.layer_count; ++l) {
    Layer layer;
    const std::string p = "layers." + std::to_string(l) + ".";
    layer.attn_gain = Parameter(p + "attn_gain", 1, d);
    layer.attn_gain.value.fill(1.0);
    layer.wq = Parameter(p + "wq", d, d);
    layer.wk = Parameter(p + "wk", d, d);
    layer.wv = Parameter(p + "wv", d, d);
    layer.wo = Parameter(p + "wo", d, d);
    fill_gaussian(layer.wq.value, rng, kInitStd);
    fill_gaussian(layer.wk.value, rng, kInitStd);
    fill_gaussian(layer.wv.value, rng, kInitStd);
    fill_gaussian(layer.wo.value, rng, kInitStd);
    layer.mlp_gain = Parameter(p + "mlp_gain", 1, d);
    layer.mlp_gain.value.fill(1.0);
    layer.w1 = Parameter(p + "w1", 4 * d, d);
    layer.b1 = Parameter(p + "b1", 1, 4 * d);
    layer.w2 = Parameter(p + "w2", d, 4 * d);
    layer.b2 = Parameter(p + "b2", 1, d);
    fill_gaussian(layer.w1.value, rng, kInitStd);
    fill_gaussian(layer.w2.value, rng, kInitStd);
    layers.push_back(std::move(layer));
  }
  final_gain = Parameter("final_gain", 1, d);
  final_gain.value.fill(1.0);
  lm_head = Parameter("lm_head", cfg.vocab_size, d);
  fill_gaussian(lm_head.value, rng, kInitStd);
  value_w = Parameter("value_w", 1, d);
  value_b = Parameter("value_b", 1, 1);
}

std::vector<Parameter*> TransformerWeights::all() {
  std::vector<Parameter*> out = {&wte, &wpe};
  for (auto& l : layers) {
    out.push_back(&l.attn_gain);
    out.push_back(&l.wq);
    out.push_back(&l.wk);
    out.push_back(&l.wv);
    out.push_back(&l.wo);
    out.push_back(&l.mlp_gain);
    out.push_back(&l.w1);
    out.push_back(&l.b1);
    out.push_back(&l.w2);
    out.push_back(&l.b2);
  }
  out.push_back(&final_gain);
  out.push_back(&lm_head);
  out.push_back(&value_w);
  out.push_back(&value_b);
  return out;
}

std::vector<const Parameter*> TransformerWeights::all() const {
  auto list = const_cast<TransformerWeights*>(this)->all();
  return std::vector<const Parameter*>(list.begin(), list.end());
}

void TransformerWeights::set_trainable(bool trainable) {
  for (Parameter* p : all()) p->trainable = trainable;
}

uint64_t TransformerWeights::checksum() const {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (const Parameter* p : all()) {
    for (double v : p->value.data) {
      uint64_t bits;
      static_assert(sizeof(bits) == sizeof(v));
      std::memcpy(&bits, &v, sizeof(bits));
      h ^= bits;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

Var hidden_graph(Tape& tape, TransformerWeights& w, const ModelConfig& cfg,
                 std::span<const int> ids) {
  if (ids.empty()) throw InvalidInputError("model: empty token sequence");
  if (ids.size() > static_cast<size_t>(cfg.context_length))
    throw ContextOverflowError("model: sequence length " + std::to_string(ids.size()) +
                               " exceeds context " + std::to_string(cfg.context_length));
  Var x = tape.embedding(w.wte, w.wpe, ids);
  for (auto& layer : w.layers) {
    Var h = tape.rmsnorm(x, tape.param(layer.attn_gain));
    Var q = tape.matmul_nt(h, tape.param(layer.wq));
    Var k = tape.matmul_nt(h, tape.param(layer.wk));
    Var v = tape.matmul_nt(h, tape.param(layer.wv));
    Var attn = tape.causal_attention(q, k, v, cfg.head_count);
    Var proj = tape.matmul_nt(attn, tape.param(layer.wo));
    x = tape.add(x, proj);
    Var m = tape.rmsnorm(x, tape.param(layer.mlp_gain));
    Var h1 = tape.relu(tape.add_row(tape.matmul_nt(m, tape.param(layer.w1)), tape.param(layer.b1)));
    Var h2 = tape.add_row(tape.matmul_nt(h1, tape.param(layer.w2)), tape.param(layer.b2));
    x = tape.add(x, h2);
  }
  return tape.rmsnorm(x, tape.param(w.final_gain));
}

InferenceSession::InferenceSession(const ModelConfig& cfg, const TransformerWeights& w)
    : cfg_(&cfg), w_(&w), kcache_(cfg.layer_count), vcache_(cfg.layer_count) {}

const std::vector<double>& InferenceSession::step(int token) {
  if (pos_ >= cfg_->context_length)
    throw ContextOverflowError("inference: context window exhausted");
  const int d = cfg_->hidden_width;
  const int heads = cfg_->head_count;
  const int hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  std::vector<double> x(d), norm(d), q(d), tmp(4 * d), attn(d);
  const double* tok = w_->wte.value.row(token);
  const double* pos = w_->wpe.value.row(pos_);
  for (int j = 0; j < d; ++j) x[j] = tok[j] + pos[j];

  for (size_t li = 0; li < w_->layers.size(); ++li) {
    const auto& layer = w_->layers[li];
    rmsnorm_row(x.data(), layer.attn_gain.value.row(0), d, norm.data());
    linear_row(norm.data(), layer.wq.value, nullptr, q.data());
    std::vector<double> krow(d), vrow(d);
    linear_row(norm.data(), layer.wk.value, nullptr, krow.data());
    linear_row(norm.data(), layer.wv.value, nullptr, vrow.data());
    kcache_[li].push_back(std::move(krow));
    vcache_[li].push_back(std::move(vrow));

    const auto& ks = kcache_[li];
    const auto& vs = vcache_[li];
    const int n = static_cast<int>(ks.size());
    std::vector<double> scores(n);
    std::vector<double> p(n);
    std::fill(attn.begin(), attn.end(), 0.0);
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * hd;
      for (int j = 0; j < n; ++j) scores[j] = dot(q.data() + c0, ks[j].data() + c0, hd) * scale;
      softmax_row(scores.data(), n, p.data());
      for (int j = 0; j < n; ++j) {
        const double pj = p[j];
        const double* vr = vs[j].data() + c0;
        for (int c = 0; c < hd; ++c) attn[c0 + c] += pj * vr[c];
      }
    }
    linear_row(attn.data(), layer.wo.value, nullptr, norm.data());
    for (int j = 0; j < d; ++j) x[j] += norm[j];

    rmsnorm_row(x.data(), layer.mlp_gain.value.row(0), d, norm.data());
    linear_row(norm.data(), layer.w1.value, layer.b1.value.row(0), tmp.data());
    for (int j = 0; j < 4 * d; ++j) tmp[j] = std::max(tmp[j], 0.0);
    linear_row(tmp.data(), layer.w2.value, layer.b2.value.row(0), norm.data());
    for (int j = 0; j < d; ++j) x[j] += norm[j];
  }

  hidden_.resize(d);
  rmsnorm_row(x.data(), w_->final_gain.value.row(0), d, hidden_.data());
  ++pos_;
  return hidden_;
}

PolicyModel::PolicyModel(ModelConfig cfg, Vocabulary vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.vocab_size = vocab_.size();
  cfg_.validate();
  weights_.init(cfg_, init_seed);
}

void PolicyModel::check_context(size_t total_len) const {
  if (total_len > static_cast<size_t>(cfg_.context_length))
    throw ContextOverflowError("sequence of " + std::to_string(total_len) +
                               " tokens exceeds context " + std::to_string(cfg_.context_length));
}

std::vector<double> PolicyModel::logits_from_hidden(const std::vector<double>& hidden) const {
  std::vector<double> logits(cfg_.vocab_size);
  linear_row(hidden.data(), weights_.lm_head.value, nullptr, logits.data());
  return logits;
}

std::vector<double> PolicyModel::next_token_distribution(std::span<const int> prefix) const {
  if (prefix.empty()) throw InvalidInputError("next_token_distribution: empty prefix");
  check_context(prefix.size() + 1);
  InferenceSession s(cfg_, weights_);
  const std::vector<double>* hidden = nullptr;
  for (int id : prefix) hidden = &s.step(id);
  std::vector<double> logits = logits_from_hidden(*hidden);
  std::vector<double> probs(logits.size());
  softmax_row(logits.data(), static_cast<int>(logits.size()), probs.data());
  return probs;
}

std::vector<double> PolicyModel::sequence_log_prob(std::span<const int> query,
                                                   std::span<const int> response) const {
  if (query.empty()) throw InvalidInputError("sequence_log_prob: empty query");
  check_context(query.size() + response.size());
  InferenceSession s(cfg_, weights_);
  std::vector<double> out;
  out.reserve(response.size());
  const std::vector<double>* hidden = nullptr;
  for (int id : query) hidden = &s.step(id);
  for (size_t t = 0; t < response.size(); ++t) {
    std::vector<double> logits = logits_from_hidden(*hidden);
    out.push_back(log_softmax_at(logits.data(), cfg_.vocab_size, response[t]));
    if (t + 1 < response.size()) hidden = &s.step(response[t]);
  }
  return out;
}

PolicyModel PolicyModel::clone_frozen() const {
  PolicyModel copy = *this;
  copy.frozen_ = true;
  copy.weights_.set_trainable(false);
  return copy;
}

Var PolicyModel::logits_graph(Tape& tape, std::span<const int> ids) {
  Var hidden = hidden_graph(tape, weights_, cfg_, ids);
  return tape.matmul_nt(hidden, tape.param(weights_.lm_head));
}

Matrix PolicyModel::forward_logits(std::span<const int> ids) const {
  Tape tape;
  auto& self = const_cast<PolicyModel&>(*this);  // forward only; no backward is run
  Var logits = self.logits_graph(tape, ids);
  return logits->val;
}

ValueModel::ValueModel(ModelConfig cfg, Vocabulary vocab, uint64_t init_seed)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.vocab_size = vocab_.size();
  cfg_.validate();
  weights_.init(cfg_, init_seed);
}

ValueModel ValueModel::from_policy(const PolicyModel& policy) {
  ValueModel v;
  v.cfg_ = policy.config();
  v.vocab_ = policy.vocab();
  v.weights_ = policy.weights();
  v.weights_.set_trainable(true);
  v.weights_.value_w.value.fill(0.0);
  v.weights_.value_w.grad.fill(0.0);
  v.weights_.value_b.value.fill(0.0);
  v.weights_.value_b.grad.fill(0.0);
  return v;
}

std::vector<double> ValueModel::value_estimates(std::span<const int> query,
                                                std::span<const int> response) const {
  if (query.empty()) throw InvalidInputError("value_estimates: empty query");
  if (query.size() + response.size() > static_cast<size_t>(cfg_.context_length))
    throw ContextOverflowError("value_estimates: sequence exceeds context");
  InferenceSession s(cfg_, weights_);
  std::vector<double> out;
  out.reserve(response.size());
  const std::vector<double>* hidden = nullptr;
  for (int id : query) hidden = &s.step(id);
  for (size_t t = 0; t < response.size(); ++t) {
    out.push_back(dot(hidden->data(), weights_.value_w.value.row(0), cfg_.hidden_width) +
                  weights_.value_b.value(0, 0));
    if (t + 1 < response.size()) hidden = &s.step(response[t]);
  }
  return out;
}

Var ValueModel::values_graph(Tape& tape, std::span<const int> ids) {
  Var hidden = hidden_graph(tape, weights_, cfg_, ids);
  Var v = tape.matmul_nt(hidden, tape.param(weights_.value_w));
  return tape.add_row(v, tape.param(weights_.value_b));
}

}  // namespace promptrl
