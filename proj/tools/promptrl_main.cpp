// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: one subcommand per pipeline stage. Flags mirror
// RunConfig fields; --config loads a JSON dump first and explicit flags
// override it. Exit codes: 0 success, 1 invalid config, 2 missing upstream
// artifact, 3 runtime failure.
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "promptrl/config.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/io.hpp"

namespace {

using namespace promptrl;

struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> profile;
  std::optional<std::string> run_dir;
  std::optional<uint64_t> seed;

  std::optional<std::string> prompts_file;
  std::optional<std::string> corpus_file;
  std::optional<std::string> sft_checkpoint;
  std::optional<std::string> rl_checkpoint;
  std::optional<std::string> pool_in;
  std::optional<std::string> pool_out;
  std::optional<std::string> prompt;

  std::optional<std::string> world;
  std::optional<std::string> scorer_host;
  std::optional<int> scorer_port;
  std::optional<int> images_per_prompt;
  bool no_cache = false;

  std::optional<int> sft_steps;
  std::optional<int> sft_batch;
  std::optional<double> sft_lr;
  std::optional<int> ppo_episodes;
  std::optional<int> ppo_batch;
  std::optional<double> ppo_lr;
  std::optional<double> kl_coefficient;
  std::optional<int> explore_max_length;
  std::optional<int> eval_max_length;

  bool dump_config = false;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config to start from; flags override it");
  cmd->add_option("--profile", f.profile, "hyperparameter profile")
      ->check(CLI::IsMember({"desk", "paper"}));
  cmd->add_option("--run-dir", f.run_dir, "run directory for artifacts and logs");
  cmd->add_option("--seed", f.seed, "global seed; per-stage seeds derive from it");
  cmd->add_flag("--dump-config", f.dump_config, "print the resolved config and exit");

  cmd->add_option("--world", f.world, "scorer backend")
      ->check(CLI::IsMember({"synthetic", "remote"}));
  cmd->add_option("--scorer-host", f.scorer_host, "remote scorer host")
      ->envname("PROMPTRL_SCORER_HOST");
  cmd->add_option("--scorer-port", f.scorer_port, "remote scorer port")
      ->envname("PROMPTRL_SCORER_PORT");
  cmd->add_option("--images-per-prompt", f.images_per_prompt,
                  "images sampled per prompt when scoring");
  cmd->add_flag("--no-cache", f.no_cache, "disable the embedding cache");

  cmd->add_option("--sft-steps", f.sft_steps, "supervised training steps");
  cmd->add_option("--sft-batch", f.sft_batch, "supervised batch size");
  cmd->add_option("--sft-lr", f.sft_lr, "supervised learning rate");
  cmd->add_option("--ppo-episodes", f.ppo_episodes, "total RL episodes");
  cmd->add_option("--ppo-batch", f.ppo_batch, "episodes per RL batch");
  cmd->add_option("--ppo-lr", f.ppo_lr, "RL learning rate");
  cmd->add_option("--kl-coefficient", f.kl_coefficient, "reward KL penalty weight");
  cmd->add_option("--explore-max-length", f.explore_max_length,
                  "generation cap during RL exploration");
  cmd->add_option("--eval-max-length", f.eval_max_length,
                  "generation cap for optimize/evaluate decoding");
}

RunConfig assemble(const Flags& f, Stage stage) {
  RunConfig cfg =
      (f.profile && *f.profile == "paper") ? paper_profile() : desk_profile();
  if (f.config) {
    cfg = config_from_json(nlohmann::json::parse(read_text_file(*f.config)));
    if (f.profile) cfg.profile = profile_from_string(*f.profile);
  }
  cfg.stage = stage;
  if (f.run_dir) cfg.run_dir = *f.run_dir;
  if (f.seed) cfg.seed = *f.seed;
  if (f.prompts_file) cfg.prompts_file = *f.prompts_file;
  if (f.corpus_file) cfg.corpus_file = *f.corpus_file;
  if (f.sft_checkpoint) cfg.sft_checkpoint = *f.sft_checkpoint;
  if (f.rl_checkpoint) cfg.rl_checkpoint = *f.rl_checkpoint;
  if (f.pool_in) cfg.pool_in = *f.pool_in;
  if (f.pool_out) cfg.pool_out = *f.pool_out;
  if (f.prompt) cfg.prompt = *f.prompt;
  if (f.world) cfg.world.backend = *f.world;
  if (f.scorer_host) cfg.world.host = *f.scorer_host;
  if (f.scorer_port) cfg.world.port = *f.scorer_port;
  if (f.images_per_prompt) cfg.world.images_per_prompt = *f.images_per_prompt;
  if (f.no_cache) cfg.world.cache = false;
  if (f.sft_steps) cfg.sft.total_steps = *f.sft_steps;
  if (f.sft_batch) cfg.sft.batch_size = *f.sft_batch;
  if (f.sft_lr) cfg.sft.learning_rate = *f.sft_lr;
  if (f.ppo_episodes) cfg.ppo.episodes_total = *f.ppo_episodes;
  if (f.ppo_batch) cfg.ppo.batch_size = *f.ppo_batch;
  if (f.ppo_lr) cfg.ppo.learning_rate = *f.ppo_lr;
  if (f.kl_coefficient) cfg.ppo.kl_coefficient = *f.kl_coefficient;
  if (f.explore_max_length) cfg.explore.max_length = *f.explore_max_length;
  if (f.eval_max_length) cfg.eval_decode.max_length = *f.eval_max_length;
  return cfg;
}

int dispatch(const RunConfig& cfg, bool dump_only) {
  if (dump_only) {
    std::cout << config_to_json(resolve(cfg)).dump(2) << "\n";
    return 0;
  }
  try {
    const StageResult result = run_stage(cfg);
    std::cout << result.message << "\n";
    for (const std::string& artifact : result.artifacts) {
      std::cerr << "artifact: " << artifact << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const InvalidInputError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 1;
  } catch (const DependencyError& e) {
    std::cerr << "dependency error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt adaptation pipeline: corpus -> sft -> ppo -> optimize/evaluate"};
  app.require_subcommand(1);

  Flags flags;
  struct Sub {
    CLI::App* cmd;
    Stage stage;
  };
  std::vector<Sub> subs = {
      {app.add_subcommand("build-corpus",
                          "build the source/target pair corpus from engineered prompts"),
       Stage::kBuildCorpus},
      {app.add_subcommand("sft", "supervised fine-tuning on the pair corpus"),
       Stage::kSft},
      {app.add_subcommand("ppo", "RL fine-tuning against the scorer suite"), Stage::kPpo},
      {app.add_subcommand("optimize", "rewrite one prompt with a trained checkpoint"),
       Stage::kOptimize},
      {app.add_subcommand("evaluate", "reward comparison across prompt variants"),
       Stage::kEvaluate},
      {app.add_subcommand("export-human-eval",
                          "export blind-labeled image bundles for human rating"),
       Stage::kExportHumanEval},
  };
  for (Sub& sub : subs) add_flags(sub.cmd, flags);
  subs[0].cmd->add_option("--prompts", flags.prompts_file,
                          "engineered prompts, one per line");
  subs[1].cmd->add_option("--corpus", flags.corpus_file, "pair corpus JSONL");
  for (int i : {2, 3, 4}) {
    subs[i].cmd->add_option("--sft-checkpoint", flags.sft_checkpoint,
                            "warm-start/baseline checkpoint");
  }
  for (int i : {3, 4, 5}) {
    subs[i].cmd->add_option("--rl-checkpoint", flags.rl_checkpoint,
                            "RL-trained checkpoint");
  }
  for (int i : {2, 4, 5}) {
    subs[i].cmd->add_option("--pool-in", flags.pool_in, "in-domain prompt pool (TSV)");
  }
  subs[4].cmd->add_option("--pool-out", flags.pool_out,
                          "out-of-domain prompt pool (optional)");
  subs[3].cmd->add_option("--prompt", flags.prompt, "raw prompt to rewrite");

  CLI11_PARSE(app, argc, argv);

  for (const Sub& sub : subs) {
    if (app.got_subcommand(sub.cmd)) {
      return dispatch(assemble(flags, sub.stage), flags.dump_config);
    }
  }
  std::cerr << "no subcommand selected\n";
  return 1;
}
