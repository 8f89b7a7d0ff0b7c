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

#include "s2st/manifest.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "s2st/error.hpp"
#include "s2st/io.hpp"

namespace s2st {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return path.lexically_normal();
}

std::string relativize(const fs::path& base, const fs::path& p) {
  if (base.empty()) return p.generic_string();
  const fs::path rel = p.lexically_relative(base);
  if (rel.empty() || *rel.begin() == "..") return p.generic_string();
  return rel.generic_string();
}

fs::path absolute_dir(const fs::path& p) {
  return fs::absolute(p).lexically_normal();
}

}  // namespace

const ManifestRecord* Manifest::find(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

void check_unique_ids(const Manifest& m) {
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    if (!seen.insert(r.id).second) throw Error(Errc::kDuplicateId, "duplicate id " + r.id);
  }
}

Manifest parse_manifest(std::string_view text, const fs::path& base_dir) {
  Manifest m;
  const fs::path base = absolute_dir(base_dir);
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto fail = [&](const std::string& why) {
      return Error(Errc::kMalformedManifest, "line " + std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (!j.is_object()) throw fail("record is not an object");
    ManifestRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.src_audio = resolve(base, j.at("src_audio").get<std::string>());
      r.src_text = j.value("src_text", "");
      if (j.contains("tgt_text") && !j["tgt_text"].is_null()) {
        r.tgt_text = j["tgt_text"].get<std::string>();
      }
      if (j.contains("tgt_audio") && !j["tgt_audio"].is_null()) {
        r.tgt_audio = resolve(base, j["tgt_audio"].get<std::string>());
      }
      r.origin = j.value("origin", "real");
      r.duration_s = j.at("duration_s").get<double>();
      if (j.contains("tgt_duration_s") && !j["tgt_duration_s"].is_null()) {
        r.tgt_duration_s = j["tgt_duration_s"].get<double>();
      }
    } catch (const json::exception& e) {
      throw fail(e.what());
    }
    if (r.id.empty()) throw fail("empty id");
    if (!(r.duration_s > 0.0) || !std::isfinite(r.duration_s)) throw fail("duration_s must be > 0");
    if (r.origin != "real" && r.origin != "synthetic") throw fail("unknown origin " + r.origin);
    if (r.tgt_audio && !r.tgt_text) throw fail("tgt_audio without tgt_text");
    m.records.push_back(std::move(r));
  }
  check_unique_ids(m);
  return m;
}

Manifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::kIo, "manifest not found: " + path.string());
  return parse_manifest(io::read_file(path), path.parent_path());
}

std::string serialize_manifest(const Manifest& m, const fs::path& base_dir) {
  const fs::path base = absolute_dir(base_dir);
  std::string out;
  for (const auto& r : m.records) {
    ordered_json j;
    j["id"] = r.id;
    j["src_audio"] = relativize(base, r.src_audio);
    j["src_text"] = r.src_text;
    if (r.tgt_text) j["tgt_text"] = *r.tgt_text;
    if (r.tgt_audio) j["tgt_audio"] = relativize(base, *r.tgt_audio);
    j["origin"] = r.origin;
    j["duration_s"] = r.duration_s;
    if (r.tgt_duration_s) j["tgt_duration_s"] = *r.tgt_duration_s;
    out += j.dump();
    out += '\n';
  }
  return out;
}

bool write_manifest(const fs::path& path, const Manifest& m) {
  check_unique_ids(m);
  const fs::path dir = path.has_parent_path() ? path.parent_path() : fs::path(".");
  fs::create_directories(dir);
  return io::write_file_atomic(path, serialize_manifest(m, dir));
}

}  // namespace s2st
