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

#include "s2st/checkpoint.hpp"

#include <fstream>

#include "s2st/io.hpp"

namespace s2st {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const fs::path& dir, const TensorMap& tensors, const json& meta,
                     Dtype dtype) {
  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["meta"] = meta;
  json entries = json::object();
  std::string blob;
  for (const auto& [name, t] : tensors) {
    json e;
    e["shape"] = t.shape();
    e["dtype"] = dtype == Dtype::kF32 ? "f32" : "f64";
    e["offset"] = blob.size();
    for (double v : t.data()) {
      if (dtype == Dtype::kF32) {
        io::put_f32_le(blob, static_cast<float>(v));
      } else {
        io::put_f64_le(blob, v);
      }
    }
    entries[name] = e;
  }
  header["tensors"] = entries;

  const fs::path staged = io::staging_path(dir);
  fs::remove_all(staged);
  fs::create_directories(staged);
  io::write_file_atomic(staged / "header.json", header.dump(2) + "\n");
  io::write_file_atomic(staged / "weights.bin", blob);
  io::replace_dir(staged, dir);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  json header;
  try {
    header = json::parse(io::read_file(dir / "header.json"));
  } catch (const json::exception& e) {
    throw Error(Errc::kCorruptFile, dir.string() + "/header.json: " + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormatVersion) {
    throw Error(Errc::kUnsupportedFormat, "checkpoint format version in " + dir.string());
  }
  const std::string blob = io::read_file(dir / "weights.bin");
  Checkpoint ckpt;
  ckpt.meta = header.value("meta", json::object());
  for (const auto& [name, e] : header.at("tensors").items()) {
    Shape shape = e.at("shape").get<Shape>();
    const std::string dtype = e.at("dtype").get<std::string>();
    const std::size_t offset = e.at("offset").get<std::size_t>();
    const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (width == 0) throw Error(Errc::kUnsupportedFormat, "dtype " + dtype);
    const std::size_t n = numel(shape);
    if (offset + n * width > blob.size()) {
      throw Error(Errc::kCorruptFile, "tensor " + name + " runs past weights.bin");
    }
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
      const char* p = blob.data() + offset + i * width;
      data[i] = width == 4 ? static_cast<double>(io::get_f32_le(p)) : io::get_f64_le(p);
    }
    ckpt.tensors.emplace(name, Tensor::from(std::move(shape), std::move(data)));
  }
  return ckpt;
}

void round_to_f32(TensorMap& tensors) {
  for (auto& [name, t] : tensors) {
    for (double& v : t.mutable_data()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace s2st
