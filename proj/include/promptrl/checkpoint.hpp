// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "promptrl/model.hpp"

namespace promptrl {

// Checkpoints are CBOR: a fixed-key document with the config, the vocabulary,
// and one little-endian float64 blob per parameter. Writes go through a temp
// file and rename so a crash never leaves a torn checkpoint behind.

void to_json(nlohmann::json& j, const ModelConfig& cfg);
void from_json(const nlohmann::json& j, ModelConfig& cfg);

void save_policy(const std::filesystem::path& path, const PolicyModel& model);
PolicyModel load_policy(const std::filesystem::path& path);

void save_value(const std::filesystem::path& path, const ValueModel& model);
ValueModel load_value(const std::filesystem::path& path);

// Kind tag stored in the file ("policy" or "value") without loading tensors.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace promptrl
