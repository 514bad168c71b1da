// SPDX-License-Identifier: Apache-2.0
//
// Supervised warm start: teacher-forced training on (source, target) rewrite
// pairs. Sequences are laid out as
//
//   <bos> source rephrase : target <eos>
//
// and the loss covers only the target tokens and the closing <eos>.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "promptrl/corpus.hpp"
#include "promptrl/model.hpp"
#include "promptrl/optim.hpp"
#include "promptrl/vocab.hpp"

namespace promptrl {

struct SFTConfig {
  int batch_size = 256;
  double learning_rate = 5e-5;
  int max_sequence_length = 512;
  int total_steps = 15000;
  double validation_fraction = 0.1;
  int eval_interval = 250;  // validation + checkpoint cadence, in steps
  double grad_clip = 1.0;
  uint64_t seed = 0;
  void validate() const;  // ConfigError on nonsensical values

  friend bool operator==(const SFTConfig&, const SFTConfig&) = default;
};

struct FormattedExample {
  std::vector<int> tokens;
  std::vector<uint8_t> mask;  // aligned with tokens; 1 on target and <eos>
};

// InvalidInputError when the source (plus template and <eos>) already fills
// the window, or the target encodes to nothing. The target is truncated to
// fit; the source and template never are.
FormattedExample format_example(const PromptPair& pair, const Vocabulary& vocab,
                                int max_sequence_length);

// The generation prefix "<bos> source rephrase :" used at sampling time;
// identical to the unmasked part of format_example's layout.
std::vector<int> rewrite_query(const std::string& source, const Vocabulary& vocab);

// Tokens the corpus needs, plus the rewrite template words. Deterministic
// order: first occurrence across sources then targets.
Vocabulary build_vocabulary(const std::vector<PromptPair>& corpus);

// Mean masked next-token NLL over the batch (every masked position weighs
// the same regardless of which sequence it is in). No gradient.
double masked_nll_of(PolicyModel& model, const std::vector<FormattedExample>& batch);

// One optimizer step on the same objective; returns the pre-step loss.
// TrainingError if the loss is not finite.
double sft_step(PolicyModel& model, AdamOptimizer& optimizer,
                const std::vector<FormattedExample>& batch);

struct SFTLogRow {
  int step = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
  std::string checkpoint;  // basename within the run directory
};

struct SFTResult {
  std::string best_checkpoint;  // full path
  double best_validation_loss = 0.0;
  int steps_run = 0;
  int examples_rejected = 0;  // did not fit the window or had empty targets
};

// Trains from scratch on the corpus, writing checkpoints and a JSONL log
// ("sft_log.jsonl") into run_dir. Returns the earliest checkpoint whose
// validation loss is within 2% of the minimum seen. ConfigError when the
// corpus leaves either split empty.
SFTResult train_sft(const std::vector<PromptPair>& corpus, const Vocabulary& vocab,
                    const ModelConfig& model_cfg, const SFTConfig& cfg,
                    const std::string& run_dir);

}  // namespace promptrl
