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

// Checkpoint container: a directory holding header.json (format version,
// per-tensor shape/dtype/byte offset, free-form metadata) and weights.bin
// (concatenated little-endian buffers in header order).

#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "json.hpp"
#include "s2st/tensor.hpp"

namespace s2st {

enum class Dtype { kF32, kF64 };

using TensorMap = std::map<std::string, Tensor>;

struct Checkpoint {
  TensorMap tensors;
  nlohmann::json meta = nlohmann::json::object();
};

inline constexpr int kCheckpointFormatVersion = 1;

void save_checkpoint(const std::filesystem::path& dir, const TensorMap& tensors,
                     const nlohmann::json& meta, Dtype dtype = Dtype::kF32);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Rounds every element through float32, matching what a kF32 save stores.
void round_to_f32(TensorMap& tensors);

}  // namespace s2st
