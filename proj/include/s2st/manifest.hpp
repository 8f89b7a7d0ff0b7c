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

// JSON-lines corpus index linking source/target audio, texts and provenance.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace s2st {

struct ManifestRecord {
  std::string id;
  std::filesystem::path src_audio;  // absolute once loaded
  std::string src_text;
  std::optional<std::string> tgt_text;
  std::optional<std::filesystem::path> tgt_audio;
  std::string origin = "real";  // "real" | "synthetic"
  double duration_s = 0.0;      // source audio
  std::optional<double> tgt_duration_s;

  bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
  std::vector<ManifestRecord> records;

  bool empty() const { return records.empty(); }
  std::size_t size() const { return records.size(); }
  const ManifestRecord* find(std::string_view id) const;
};

// Relative audio paths are resolved against `base_dir`. Invalid lines throw
// kMalformedManifest with the 1-based line number; repeated ids kDuplicateId.
Manifest parse_manifest(std::string_view text, const std::filesystem::path& base_dir);
Manifest read_manifest(const std::filesystem::path& path);

// Audio paths are written relative to `base_dir` when they lie beneath it.
std::string serialize_manifest(const Manifest& m, const std::filesystem::path& base_dir);
// Atomic; returns false when the file already holds identical content.
bool write_manifest(const std::filesystem::path& path, const Manifest& m);

void check_unique_ids(const Manifest& m);

}  // namespace s2st
