// SPDX-License-Identifier: Apache-2.0
//
// Run configuration and stage dispatch: one process runs one pipeline stage
// inside a locked run directory, and every stage freezes its resolved config
// to disk before doing any work. A single global seed fans out to per-stage
// seeds through derive_seed(seed, "<stage>"), so each stage is independently
// reproducible from its frozen config alone.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptrl/decode.hpp"
#include "promptrl/model.hpp"
#include "promptrl/ppo.hpp"
#include "promptrl/reward.hpp"
#include "promptrl/sft.hpp"

namespace promptrl {

enum class Stage {
  kBuildCorpus,
  kSft,
  kPpo,
  kOptimize,
  kEvaluate,
  kExportHumanEval,
};

std::string stage_to_string(Stage stage);
Stage stage_from_string(const std::string& name);  // ConfigError on unknown

enum class Profile { kDesk, kPaper };

std::string profile_to_string(Profile profile);
Profile profile_from_string(const std::string& name);  // ConfigError on unknown

// Scorer backend selection.
struct WorldConfig {
  std::string backend = "synthetic";  // "synthetic" | "remote"
  std::string host = "127.0.0.1";     // remote only
  int port = 0;                       // remote only
  int images_per_prompt = 3;
  bool cache = true;

  void validate() const;

  friend bool operator==(const WorldConfig&, const WorldConfig&) = default;
};

struct RunConfig {
  Stage stage = Stage::kEvaluate;
  Profile profile = Profile::kDesk;
  uint64_t seed = 0;
  std::string run_dir = "runs/dev";

  // Stage inputs. Paths left empty resolve to the conventional artifact of
  // the upstream stage inside run_dir.
  std::string prompts_file;     // build-corpus: one engineered prompt per line
  std::string corpus_file;      // sft; default <run_dir>/corpus.jsonl
  std::string sft_checkpoint;   // ppo/optimize/evaluate; default from sft_result.json
  std::string rl_checkpoint;    // optimize/evaluate; default from rl_result.json
  std::string pool_in;          // ppo rollouts + evaluate in-domain split
  std::string pool_out;         // evaluate out-of-domain split (optional)
  std::string prompt;           // optimize: the raw input to rewrite

  ModelConfig model;
  SFTConfig sft;
  PPOConfig ppo;
  DecodeConfig explore;      // diverse-beam exploration during RL collection
  DecodeConfig eval_decode;  // plain beam search for optimize/evaluate
  WorldConfig world;

  // Every problem found, tagged "section.field: reason"; empty means valid.
  std::vector<std::string> validation_errors() const;
  void validate() const;  // ConfigError joining validation_errors()

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Small-scale defaults that run in seconds on one core. Its JSON dump lists
// every field where it deviates from the reference recipe, side by side.
RunConfig desk_profile();
// The reference training recipe, verbatim.
RunConfig paper_profile();

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);  // ConfigError on bad fields

// Derived fields filled in: per-stage seeds from the global seed, default
// artifact paths inside run_dir, and upstream checkpoint discovery.
RunConfig resolve(RunConfig cfg);

struct StageResult {
  std::vector<std::string> artifacts;  // files written, relative to run_dir
  std::string message;                 // human-readable outcome (printed by the CLI)
};

// Validates, locks run_dir, freezes the resolved config, dispatches. Throws:
// ConfigError (invalid config, locked directory), DependencyError (missing
// upstream artifact), plus whatever the stage itself raises.
StageResult run_stage(const RunConfig& cfg);

// Exclusive .lock file held for the process lifetime of a stage.
class RunLock {
 public:
  explicit RunLock(const std::string& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::string path_;
};

}  // namespace promptrl
