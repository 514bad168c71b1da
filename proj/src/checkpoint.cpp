// SPDX-License-Identifier: Apache-2.0
#include "promptrl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "promptrl/errors.hpp"

namespace promptrl {

namespace {
constexpr int kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs assume a little-endian host");

nlohmann::json tensor_to_json(const Matrix& m) {
  std::vector<uint8_t> bytes(m.size() * sizeof(double));
  std::memcpy(bytes.data(), m.data.data(), bytes.size());
  return nlohmann::json{{"rows", m.rows}, {"cols", m.cols},
                        {"data", nlohmann::json::binary(std::move(bytes))}};
}

Matrix tensor_from_json(const nlohmann::json& j) {
  Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& bin = j.at("data").get_binary();
  if (bin.size() != m.size() * sizeof(double))
    throw IoError("checkpoint: tensor blob size mismatch");
  std::memcpy(m.data.data(), bin.data(), bin.size());
  return m;
}

nlohmann::json weights_to_json(const TransformerWeights& w) {
  nlohmann::json tensors = nlohmann::json::object();
  for (const Parameter* p : w.all()) tensors[p->name] = tensor_to_json(p->value);
  return tensors;
}

void weights_from_json(const nlohmann::json& tensors, TransformerWeights& w) {
  for (Parameter* p : w.all()) {
    if (!tensors.contains(p->name))
      throw IoError("checkpoint: missing tensor " + p->name);
    Matrix m = tensor_from_json(tensors.at(p->name));
    if (!m.same_shape(p->value))
      throw IoError("checkpoint: shape mismatch for " + p->name);
    p->value = std::move(m);
    p->grad = Matrix(p->value.rows, p->value.cols);
  }
}

nlohmann::json document(const std::string& kind, const ModelConfig& cfg,
                        const Vocabulary& vocab, const TransformerWeights& w) {
  nlohmann::json doc;
  doc["format_version"] = kFormatVersion;
  doc["kind"] = kind;
  doc["config"] = cfg;
  doc["vocab"] = vocab.tokens();
  doc["tensors"] = weights_to_json(w);
  return doc;
}

void write_cbor(const std::filesystem::path& path, const nlohmann::json& doc) {
  const std::vector<uint8_t> bytes = nlohmann::json::to_cbor(doc);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("checkpoint: short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_cbor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("checkpoint: cannot open " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint: " + path.string() + " is not a valid checkpoint: " + e.what());
  }
}

nlohmann::json read_checked(const std::filesystem::path& path, const std::string& kind) {
  nlohmann::json doc = read_cbor(path);
  if (!doc.is_object() || doc.value("format_version", -1) != kFormatVersion)
    throw IoError("checkpoint: unsupported format in " + path.string());
  if (doc.value("kind", "") != kind)
    throw IoError("checkpoint: " + path.string() + " holds a '" +
                  doc.value("kind", "?") + "' model, expected '" + kind + "'");
  return doc;
}
}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"vocab_size", cfg.vocab_size},
                     {"context_length", cfg.context_length},
                     {"layer_count", cfg.layer_count},
                     {"hidden_width", cfg.hidden_width},
                     {"head_count", cfg.head_count},
                     {"value_model_full_copy", cfg.value_model_full_copy}};
}

void from_json(const nlohmann::json& j, ModelConfig& cfg) {
  j.at("vocab_size").get_to(cfg.vocab_size);
  j.at("context_length").get_to(cfg.context_length);
  j.at("layer_count").get_to(cfg.layer_count);
  j.at("hidden_width").get_to(cfg.hidden_width);
  j.at("head_count").get_to(cfg.head_count);
  j.at("value_model_full_copy").get_to(cfg.value_model_full_copy);
}

void save_policy(const std::filesystem::path& path, const PolicyModel& model) {
  write_cbor(path, document("policy", model.config(), model.vocab(), model.weights()));
}

PolicyModel load_policy(const std::filesystem::path& path) {
  nlohmann::json doc = read_checked(path, "policy");
  ModelConfig cfg = doc.at("config").get<ModelConfig>();
  Vocabulary vocab = Vocabulary::from_tokens(doc.at("vocab").get<std::vector<std::string>>());
  PolicyModel model(cfg, std::move(vocab), 0);
  weights_from_json(doc.at("tensors"), model.weights());
  return model;
}

void save_value(const std::filesystem::path& path, const ValueModel& model) {
  write_cbor(path, document("value", model.config(), model.vocab(), model.weights()));
}

ValueModel load_value(const std::filesystem::path& path) {
  nlohmann::json doc = read_checked(path, "value");
  ModelConfig cfg = doc.at("config").get<ModelConfig>();
  Vocabulary vocab = Vocabulary::from_tokens(doc.at("vocab").get<std::vector<std::string>>());
  ValueModel model(cfg, std::move(vocab), 0);
  weights_from_json(doc.at("tensors"), model.weights());
  return model;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  nlohmann::json doc = read_cbor(path);
  if (!doc.is_object() || !doc.contains("kind"))
    throw IoError("checkpoint: no kind tag in " + path.string());
  return doc.at("kind").get<std::string>();
}

}  // namespace promptrl
