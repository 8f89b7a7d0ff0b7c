// Copyright 2026 The s2st Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// INI configuration shared by every CLI stage. Sections mirror the module
// configs; unknown sections or keys are rejected, and relative paths resolve
// against the directory holding the config file.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "s2st/eval.hpp"
#include "s2st/forge.hpp"
#include "s2st/model.hpp"
#include "s2st/quantizer.hpp"
#include "s2st/synthesis.hpp"
#include "s2st/trainer.hpp"

namespace s2st {

class Config {
 public:
  Config() = default;
  // Throws kConfig for unreadable files, syntax errors and unknown keys.
  static Config load(const std::filesystem::path& path);
  static Config parse(const std::string& text, const std::filesystem::path& base_dir);

  const std::filesystem::path& base_dir() const { return base_dir_; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  // Keys are "section.name"; set() applies CLI overrides and validates the key.
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback = {}) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Resolved against base_dir(); nullopt when unset.
  std::optional<std::filesystem::path> get_path(const std::string& key) const;
  // Like get_path but throws kConfig naming the key when unset.
  std::filesystem::path require_path(const std::string& key) const;

  std::uint64_t seed() const { return get_u64("run.seed", 0); }
  std::filesystem::path work_dir() const;

 private:
  std::filesystem::path base_dir_ = ".";
  std::map<std::string, std::string> values_;
};

bool is_known_config_key(const std::string& key);

ModelConfig model_config(const Config& c);
KMeansOptions kmeans_options(const Config& c);
PretrainConfig pretrain_config(const Config& c);
TrainConfig train_config(const Config& c);
AugmentPolicy augment_policy(const Config& c);
DecodeConfig decode_config(const Config& c);
SynthesisConfig synthesis_config(const Config& c);
FilterPolicy filter_policy(const Config& c);
StageOptions stage_options(const Config& c);
HttpProviderConfig http_provider_config(const Config& c, const std::string& which);

}  // namespace s2st
