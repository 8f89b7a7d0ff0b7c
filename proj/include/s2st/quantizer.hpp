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

// Discrete speech units: a k-means codebook over frame features, nearest
// centroid assignment, and run-length collapse/expansion of unit sequences.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s2st/frontend.hpp"

namespace s2st {

inline constexpr const char* kLogMel80 = "logmel80";

struct Codebook {
  std::size_t k = 0;
  std::size_t dim = 0;
  std::string feature_space = kLogMel80;
  std::vector<float> centroids;  // [k, dim]

  std::span<const float> centroid(std::size_t i) const {
    return {centroids.data() + i * dim, dim};
  }
  // Content hash over header fields and centroid bits.
  std::uint64_t hash() const;
};

struct KMeansResult {
  Codebook codebook;
  // Mean squared distance after seeding, then after each Lloyd step;
  // non-increasing.
  std::vector<double> distortion;
  std::size_t iterations = 0;
};

struct KMeansOptions {
  std::size_t k = 100;
  std::size_t max_iters = 50;
  std::uint64_t seed = 0;
  double tolerance = 1e-6;  // relative distortion improvement to continue
  std::string feature_space = kLogMel80;
};

// features: [n, dim] row-major. k-means++ seeding then Lloyd iterations.
// Throws kTooFewPoints when n < k or fewer than k distinct rows exist.
KMeansResult kmeans_fit(std::span<const double> features, std::size_t dim,
                        const KMeansOptions& opts);

struct UnitSequence {
  std::vector<std::size_t> units;
  std::vector<std::size_t> durations;  // empty, or one run length per unit
  bool reduced = false;

  std::size_t size() const { return units.size(); }
  bool empty() const { return units.empty(); }
  bool has_durations() const { return !durations.empty(); }
  std::size_t frame_count() const;
};

// Nearest centroid per frame (squared Euclidean, ties -> lowest index).
UnitSequence encode_units(std::span<const double> features, std::size_t dim,
                          const Codebook& cb);
UnitSequence encode_units(const MelSpectrogram& m, const Codebook& cb);

UnitSequence reduce_units(const UnitSequence& u);
UnitSequence expand_units(const UnitSequence& u);

// Directory container: codebook.json + centroids.bin (float32 LE).
void save_codebook(const std::filesystem::path& dir, const Codebook& cb);
Codebook load_codebook(const std::filesystem::path& dir);

}  // namespace s2st
