// SPDX-License-Identifier: Apache-2.0
//
// Python surface of the pipeline: corpus building, checkpoint loading with
// prompt optimization, synthetic-world scoring, and full stage dispatch via
// config dicts that mirror the CLI's JSON config format.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptrl/checkpoint.hpp"
#include "promptrl/config.hpp"
#include "promptrl/corpus.hpp"
#include "promptrl/errors.hpp"
#include "promptrl/eval.hpp"
#include "promptrl/lexicon.hpp"
#include "promptrl/reward.hpp"

namespace py = pybind11;
using namespace promptrl;
using nlohmann::json;

namespace {

py::object json_to_py(const json& j) {
  switch (j.type()) {
    case json::value_t::null:
      return py::none();
    case json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case json::value_t::number_integer:
      return py::int_(j.get<int64_t>());
    case json::value_t::number_unsigned:
      return py::int_(j.get<uint64_t>());
    case json::value_t::number_float:
      return py::float_(j.get<double>());
    case json::value_t::string:
      return py::str(j.get<std::string>());
    case json::value_t::array: {
      py::list out;
      for (const json& item : j) out.append(json_to_py(item));
      return out;
    }
    case json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
      return out;
    }
    default:
      throw std::invalid_argument("unsupported JSON value type");
  }
}

json py_to_json(const py::handle& obj) {
  if (obj.is_none()) return nullptr;
  if (py::isinstance<py::bool_>(obj)) return obj.cast<bool>();
  if (py::isinstance<py::int_>(obj)) {
    const int64_t v = obj.cast<int64_t>();
    if (v >= 0) return obj.cast<uint64_t>();
    return v;
  }
  if (py::isinstance<py::float_>(obj)) return obj.cast<double>();
  if (py::isinstance<py::str>(obj)) return obj.cast<std::string>();
  if (py::isinstance<py::dict>(obj)) {
    json out = json::object();
    for (const auto& item : obj.cast<py::dict>()) {
      out[item.first.cast<std::string>()] = py_to_json(item.second);
    }
    return out;
  }
  if (py::isinstance<py::list>(obj) || py::isinstance<py::tuple>(obj)) {
    json out = json::array();
    for (const auto& item : obj.cast<py::sequence>()) out.push_back(py_to_json(item));
    return out;
  }
  throw std::invalid_argument("config values must be None, bool, int, float, str, list, or dict");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "prompt adaptation pipeline: C++ core bindings";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<InvalidInputError>(m, "InvalidInputError");
  py::register_exception<DependencyError>(m, "DependencyError");
  py::register_exception<UnsupportedOperationError>(m, "UnsupportedOperationError");
  py::register_exception<RewardUnavailableError>(m, "RewardUnavailableError");
  py::register_exception<TrainingError>(m, "TrainingError");

  m.def(
      "split_prompt",
      [](const std::string& text) {
        const EngineeredPrompt p = split_prompt(text, ModifierLexicon::builtin());
        return py::make_tuple(p.main_content, p.modifiers);
      },
      py::arg("text"),
      "Split an engineered prompt into (main_content, [trailing modifiers]).");

  m.def(
      "build_corpus",
      [](const std::vector<std::string>& prompts, uint64_t seed,
         const std::string& output_path) {
        const CorpusStats stats =
            build_corpus(prompts, ModifierLexicon::builtin(), nullptr, seed, output_path);
        py::dict d;
        d["prompts_seen"] = stats.prompts_seen;
        d["prompts_skipped"] = stats.prompts_skipped;
        d["rephrase_failures"] = stats.rephrase_failures;
        d["pairs_total"] = stats.pairs_total();
        py::dict per_method;
        for (int i = 0; i < kPairMethodCount; ++i) {
          per_method[py::str(method_to_string(static_cast<PairMethod>(i)))] =
              stats.per_method[i];
        }
        d["per_method"] = per_method;
        return d;
      },
      py::arg("prompts"), py::arg("seed"), py::arg("output_path"),
      "Write the source/target pair corpus (JSONL) for a list of engineered prompts.");

  m.def(
      "load_corpus",
      [](const std::string& path) {
        py::list rows;
        for (const PromptPair& pair : load_corpus(path)) {
          py::dict row;
          row["method"] = method_to_string(pair.method);
          row["source"] = pair.source;
          row["target"] = pair.target;
          rows.append(row);
        }
        return rows;
      },
      py::arg("path"), "Read a pair corpus written by build_corpus.");

  py::class_<PolicyModel>(m, "Policy", "A trained prompt-rewriting checkpoint.")
      .def_static(
          "load", [](const std::string& path) { return load_policy(path); },
          py::arg("path"))
      .def(
          "optimize",
          [](const PolicyModel& self, const std::string& prompt, int beam_size,
             int max_length, double length_penalty) {
            DecodeConfig cfg;
            cfg.beam_size = beam_size;
            cfg.group_count = 1;  // inert for plain beam search
            cfg.max_length = max_length;
            cfg.length_penalty = length_penalty;
            return optimize_prompt(self, prompt, cfg);
          },
          py::arg("prompt"), py::arg("beam_size") = 8, py::arg("max_length") = 20,
          py::arg("length_penalty") = 1.0,
          "Rewrite one raw prompt with beam search over this checkpoint.")
      .def_property_readonly(
          "vocab_size", [](const PolicyModel& self) { return self.config().vocab_size; })
      .def("__repr__", [](const PolicyModel& self) {
        return "<promptrl.Policy vocab=" + std::to_string(self.config().vocab_size) +
               " width=" + std::to_string(self.config().hidden_width) + ">";
      });

  m.def(
      "score_prompt",
      [](const std::string& original, const std::string& candidate, uint64_t seed,
         int images_per_prompt) {
        ScorerSuite suite = synthetic_world();
        suite.images_per_prompt = images_per_prompt;
        const double rel = relevance_score(original, candidate, suite, seed);
        const double aes = aesthetic_score(original, candidate, suite, seed);
        py::dict d;
        d["relevance"] = rel;
        d["aesthetic"] = aes;
        d["reward"] = rel + aes;
        return d;
      },
      py::arg("original"), py::arg("candidate"), py::arg("seed") = 0,
      py::arg("images_per_prompt") = 3,
      "Image-quality reward of candidate vs original on the synthetic world "
      "(relevance + aesthetic; no policy KL term).");

  m.def(
      "desk_config", [] { return json_to_py(config_to_json(desk_profile())); },
      "Small-scale profile as a config dict (lists deviations from the reference).");
  m.def(
      "paper_config", [] { return json_to_py(config_to_json(paper_profile())); },
      "Reference training recipe as a config dict.");

  m.def(
      "run_stage",
      [](const py::dict& config) {
        const RunConfig cfg = config_from_json(py_to_json(config));
        const StageResult result = run_stage(cfg);
        py::dict d;
        d["message"] = result.message;
        d["artifacts"] = result.artifacts;
        return d;
      },
      py::arg("config"),
      "Run one pipeline stage (config dict with a \"stage\" key; see desk_config()).");
}
