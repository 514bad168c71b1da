// SPDX-License-Identifier: Apache-2.0
#include "promptrl/sft.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <nlohmann/json.hpp>

#include "promptrl/checkpoint.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/io.hpp"
#include "promptrl/rng.hpp"

namespace promptrl {

namespace {

constexpr const char* kRephraseWord = "rephrase";
constexpr const char* kColonWord = ":";

int require_token(const Vocabulary& vocab, const char* word) {
  auto id = vocab.id_of(word);
  if (!id) throw ConfigError(std::string("vocabulary lacks template token: ") + word);
  return *id;
}

// Loss for one formatted sequence: next-token NLL over its masked positions.
// Rows are shifted by one against the mask, which is aligned with tokens.
Var sequence_loss(Tape& tape, PolicyModel& model, const FormattedExample& ex,
                  std::vector<int>& targets, std::vector<uint8_t>& mask) {
  const size_t n = ex.tokens.size();
  targets.assign(ex.tokens.begin() + 1, ex.tokens.end());
  mask.assign(ex.mask.begin() + 1, ex.mask.end());
  Var logits = model.logits_graph(
      tape, std::span<const int>(ex.tokens.data(), n - 1));
  return tape.masked_nll(logits, targets, mask);
}

size_t mask_count(const FormattedExample& ex) {
  size_t m = 0;
  for (uint8_t v : ex.mask) m += v != 0;
  return m;
}

std::string checkpoint_name(int step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "sft_step_%06d.ckpt", step);
  return buf;
}

}  // namespace

void SFTConfig::validate() const {
  if (batch_size < 1) throw ConfigError("sft: batch_size must be positive");
  if (learning_rate <= 0) throw ConfigError("sft: learning_rate must be positive");
  if (max_sequence_length < 4) throw ConfigError("sft: max_sequence_length too small");
  if (total_steps < 1) throw ConfigError("sft: total_steps must be positive");
  if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
    throw ConfigError("sft: validation_fraction must lie in (0, 1)");
  if (eval_interval < 1) throw ConfigError("sft: eval_interval must be positive");
}

std::vector<int> rewrite_query(const std::string& source, const Vocabulary& vocab) {
  std::vector<int> prefix;
  prefix.push_back(vocab.bos_id());
  const std::vector<int> ids = vocab.encode(source);
  prefix.insert(prefix.end(), ids.begin(), ids.end());
  prefix.push_back(require_token(vocab, kRephraseWord));
  prefix.push_back(require_token(vocab, kColonWord));
  return prefix;
}

FormattedExample format_example(const PromptPair& pair, const Vocabulary& vocab,
                                int max_sequence_length) {
  const std::vector<int> prefix = rewrite_query(pair.source, vocab);

  std::vector<int> target = vocab.encode(pair.target);
  if (target.empty()) throw InvalidInputError("sft: target encodes to nothing");
  const long budget =
      static_cast<long>(max_sequence_length) - static_cast<long>(prefix.size()) - 1;
  if (budget < 1) throw InvalidInputError("sft: source fills the whole window");
  if (static_cast<long>(target.size()) > budget) target.resize(budget);

  FormattedExample ex;
  ex.tokens = prefix;
  ex.tokens.insert(ex.tokens.end(), target.begin(), target.end());
  ex.tokens.push_back(vocab.eos_id());
  ex.mask.assign(ex.tokens.size(), 0);
  for (size_t i = prefix.size(); i < ex.tokens.size(); ++i) ex.mask[i] = 1;
  return ex;
}

Vocabulary build_vocabulary(const std::vector<PromptPair>& corpus) {
  std::vector<std::string> tokens;
  std::set<std::string> seen;
  auto add_words = [&](const std::string& text) {
    for (std::string& w : Vocabulary::split_words(text)) {
      if (seen.insert(w).second) tokens.push_back(std::move(w));
    }
  };
  for (const PromptPair& p : corpus) {
    add_words(p.source);
    add_words(p.target);
  }
  add_words(kRephraseWord);
  add_words(kColonWord);
  return Vocabulary::from_tokens(std::move(tokens));
}

double masked_nll_of(PolicyModel& model, const std::vector<FormattedExample>& batch) {
  double total = 0.0;
  size_t positions = 0;
  std::vector<int> targets;
  std::vector<uint8_t> mask;
  for (const FormattedExample& ex : batch) {
    const size_t m = mask_count(ex);
    if (m == 0 || ex.tokens.size() < 2) continue;
    Tape tape;
    Var loss = sequence_loss(tape, model, ex, targets, mask);
    total += loss->val(0, 0) * static_cast<double>(m);
    positions += m;
  }
  if (positions == 0) throw InvalidInputError("sft: batch has no masked positions");
  return total / static_cast<double>(positions);
}

double sft_step(PolicyModel& model, AdamOptimizer& optimizer,
                const std::vector<FormattedExample>& batch) {
  size_t total_positions = 0;
  for (const FormattedExample& ex : batch) total_positions += mask_count(ex);
  if (total_positions == 0) throw InvalidInputError("sft: batch has no masked positions");

  optimizer.zero_grad();
  double loss_value = 0.0;
  std::vector<int> targets;
  std::vector<uint8_t> mask;
  for (const FormattedExample& ex : batch) {
    const size_t m = mask_count(ex);
    if (m == 0 || ex.tokens.size() < 2) continue;
    Tape tape;
    Var loss = sequence_loss(tape, model, ex, targets, mask);
    // Rescale the per-sequence mean so the batch loss is a global mean over
    // masked positions.
    const double share = static_cast<double>(m) / static_cast<double>(total_positions);
    loss_value += loss->val(0, 0) * share;
    tape.backward(tape.scale(loss, share));
  }
  if (!std::isfinite(loss_value))
    throw TrainingError("sft: non-finite loss; aborting the run");
  optimizer.step();
  return loss_value;
}

SFTResult train_sft(const std::vector<PromptPair>& corpus, const Vocabulary& vocab,
                    const ModelConfig& model_cfg, const SFTConfig& cfg,
                    const std::string& run_dir) {
  cfg.validate();
  if (corpus.size() < 2) throw ConfigError("sft: corpus needs at least two pairs");

  ModelConfig mc = model_cfg;
  mc.vocab_size = vocab.size();
  mc.validate();
  if (cfg.max_sequence_length > mc.context_length)
    throw ConfigError("sft: max_sequence_length exceeds the model context window");

  SFTResult result;
  std::vector<FormattedExample> examples;
  examples.reserve(corpus.size());
  for (const PromptPair& p : corpus) {
    try {
      examples.push_back(format_example(p, vocab, cfg.max_sequence_length));
    } catch (const InvalidInputError&) {
      ++result.examples_rejected;
    }
  }
  if (examples.size() < 2) throw ConfigError("sft: too few usable examples");

  // Deterministic validation split.
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg.seed, "sft-split"));
  split_rng.shuffle(order);
  size_t val_count = static_cast<size_t>(
      std::llround(cfg.validation_fraction * static_cast<double>(examples.size())));
  val_count = std::clamp<size_t>(val_count, 1, examples.size() - 1);
  std::vector<FormattedExample> validation, training;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < val_count ? validation : training).push_back(examples[order[i]]);
  }

  PolicyModel model(mc, vocab, derive_seed(cfg.seed, "sft-init"));
  AdamOptimizer optimizer(model.weights().all(),
                          AdamConfig{.lr = cfg.learning_rate, .grad_clip = cfg.grad_clip});

  std::filesystem::create_directories(run_dir);
  JsonlWriter log(std::filesystem::path(run_dir) / "sft_log.jsonl");
  Rng batch_rng(derive_seed(cfg.seed, "sft-batches"));

  struct EvalPoint {
    int step;
    double val_loss;
    std::string name;
  };
  std::vector<EvalPoint> evals;

  for (int step = 1; step <= cfg.total_steps; ++step) {
    std::vector<FormattedExample> batch;
    batch.reserve(cfg.batch_size);
    for (int b = 0; b < cfg.batch_size; ++b) {
      batch.push_back(
          training[batch_rng.uniform_int(0, static_cast<int64_t>(training.size()) - 1)]);
    }
    double train_loss = 0.0;
    try {
      train_loss = sft_step(model, optimizer, batch);
    } catch (const TrainingError& e) {
      throw TrainingError(std::string(e.what()) + " (step " + std::to_string(step) + ")");
    }

    if (step % cfg.eval_interval == 0 || step == cfg.total_steps) {
      const double val_loss = masked_nll_of(model, validation);
      const std::string name = checkpoint_name(step);
      save_policy(std::filesystem::path(run_dir) / name, model);
      log.write({{"step", step},
                 {"train_loss", train_loss},
                 {"validation_loss", val_loss},
                 {"checkpoint", name}});
      evals.push_back({step, val_loss, name});
    }
  }

  double min_val = evals.front().val_loss;
  for (const EvalPoint& e : evals) min_val = std::min(min_val, e.val_loss);
  for (const EvalPoint& e : evals) {
    if (e.val_loss <= min_val * 1.02) {
      result.best_checkpoint = (std::filesystem::path(run_dir) / e.name).string();
      result.best_validation_loss = e.val_loss;
      break;
    }
  }
  result.steps_run = cfg.total_steps;
  return result;
}

}  // namespace promptrl
