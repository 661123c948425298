#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "drau/dataset.hpp"
#include "drau/model.hpp"
#include "drau/train.hpp"

namespace drau {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Flat key=value views of the configuration structs. Doubles are written with
// 17 significant digits so a written value parses back to the same bits.
KeyValues model_settings(const ModelConfig& cfg);
KeyValues train_settings(const TrainConfig& cfg);
KeyValues dataset_settings(const DatasetConfig& cfg);

// Each returns false when the key is not one of its own; malformed values throw
// ConfigError naming the key.
bool apply_model_setting(ModelConfig& cfg, const std::string& key, const std::string& value);
bool apply_train_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
bool apply_dataset_setting(DatasetConfig& cfg, const std::string& key, const std::string& value);

/// Parses "key=value" lines; blank lines and lines starting with '#' are
/// skipped. Throws ParseError naming the line for anything else.
KeyValues parse_key_values(const std::string& text, const std::string& origin);
KeyValues read_key_values(const std::filesystem::path& path);

std::string format_double(double v);

}  // namespace drau
