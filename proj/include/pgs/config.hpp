#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pgs/trainer.hpp"

namespace pgs {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Flat `key = value` lines; `#` starts a comment. Duplicate keys are errors.
std::vector<ConfigEntry> parse_key_values(const std::string& text);
std::vector<ConfigEntry> load_key_values(const std::filesystem::path& path);

/// Applies entries onto `cfg`; unknown keys and bad values are Config errors.
void apply_config(TrainConfig& cfg, const std::vector<ConfigEntry>& entries);
TrainConfig load_train_config(const std::filesystem::path& path);

/// Round-trippable `key = value` rendering of every field.
std::string config_text(const TrainConfig& cfg);

}  // namespace pgs
