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

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace s2st::io {

std::string read_file(const std::filesystem::path& path);

// Writes through a sibling temp file and renames it into place. Returns false
// (and leaves the file untouched) when the existing content is identical.
bool write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Replaces directory `dst` with `staged` (a fully written sibling directory).
void replace_dir(const std::filesystem::path& staged, const std::filesystem::path& dst);

std::filesystem::path staging_path(const std::filesystem::path& dst);

std::string hex64(std::uint64_t v);

void put_f32_le(std::string& out, float v);
void put_f64_le(std::string& out, double v);
float get_f32_le(const char* p);
double get_f64_le(const char* p);

}  // namespace s2st::io
