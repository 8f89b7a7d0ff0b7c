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

#include "s2st/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "s2st/error.hpp"

namespace s2st::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path staging_path(const fs::path& dst) {
  fs::path p = dst;
  p += ".tmp-" + std::to_string(::getpid());
  return p;
}

bool write_file_atomic(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (fs::exists(path, ec) && fs::file_size(path, ec) == bytes.size()) {
    if (read_file(path) == bytes) return false;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = staging_path(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::kIo, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
  return true;
}

void replace_dir(const fs::path& staged, const fs::path& dst) {
  std::error_code ec;
  fs::remove_all(dst, ec);
  fs::rename(staged, dst);
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

namespace {
template <class U>
void put_le(std::string& out, U bits) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}
template <class U>
U get_le(const char* p) {
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return bits;
}
}  // namespace

void put_f32_le(std::string& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64_le(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
float get_f32_le(const char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }
double get_f64_le(const char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

}  // namespace s2st::io
