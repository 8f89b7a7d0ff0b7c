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

#include "s2st/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "json.hpp"
#include "s2st/error.hpp"
#include "s2st/io.hpp"
#include "s2st/random.hpp"

namespace s2st {

namespace {

template <class A, class B>
double sq_dist(const A* a, const B* b, std::size_t dim) {
  double s = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = static_cast<double>(a[j]) - static_cast<double>(b[j]);
    s += d * d;
  }
  return s;
}

struct Assignment {
  std::vector<std::size_t> label;
  std::vector<double> dist;
  double distortion = 0.0;
};

Assignment assign(std::span<const double> x, std::size_t n, std::size_t dim,
                  const std::vector<double>& c, std::size_t k) {
  Assignment a;
  a.label.resize(n);
  a.dist.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < k; ++j) {
      const double d = sq_dist(x.data() + i * dim, c.data() + j * dim, dim);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    a.label[i] = arg;
    a.dist[i] = best;
    total += best;
  }
  a.distortion = total / static_cast<double>(n);
  return a;
}

}  // namespace

std::uint64_t Codebook::hash() const {
  std::string head = std::to_string(k) + ":" + std::to_string(dim) + ":" + feature_space;
  std::uint64_t h = fnv1a(head.data(), head.size());
  std::string blob;
  for (float v : centroids) io::put_f32_le(blob, v);
  return fnv1a(blob.data(), blob.size(), h);
}

KMeansResult kmeans_fit(std::span<const double> features, std::size_t dim,
                        const KMeansOptions& opts) {
  if (dim == 0 || features.size() % dim != 0) {
    throw Error(Errc::kDimMismatch, "feature buffer is not a multiple of dim");
  }
  const std::size_t n = features.size() / dim, k = opts.k;
  if (k < 2) throw Error(Errc::kConfig, "codebook needs K >= 2");
  if (n < k) {
    throw Error(Errc::kTooFewPoints,
                std::to_string(n) + " points for K=" + std::to_string(k));
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw Error(Errc::kConfig, "non-finite feature");
  }

  // k-means++ seeding.
  Rng rng(opts.seed);
  std::vector<double> c(k * dim);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(rng, n);
  std::copy_n(features.begin() + first * dim, dim, c.begin());
  for (std::size_t j = 1; j < k; ++j) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(features.data() + i * dim, c.data() + (j - 1) * dim, dim));
      total += d2[i];
    }
    if (total <= 0.0) {
      throw Error(Errc::kTooFewPoints, "fewer than K=" + std::to_string(k) +
                                           " distinct feature vectors");
    }
    double r = uniform01(rng) * total;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      pick = i;
      r -= d2[i];
      if (r < 0.0) break;
    }
    std::copy_n(features.begin() + pick * dim, dim, c.begin() + j * dim);
  }

  KMeansResult result;
  Assignment a = assign(features, n, dim, c, k);
  result.distortion.push_back(a.distortion);
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    std::vector<double> next(k * dim, 0.0);
    std::vector<std::size_t> count(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[a.label[i]];
      for (std::size_t j = 0; j < dim; ++j) next[a.label[i] * dim + j] += features[i * dim + j];
    }
    std::vector<bool> taken(n, false);
    for (std::size_t cl = 0; cl < k; ++cl) {
      if (count[cl] > 0) {
        for (std::size_t j = 0; j < dim; ++j) next[cl * dim + j] /= static_cast<double>(count[cl]);
        continue;
      }
      // Empty cluster: re-seed at the point farthest from its centroid.
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i] && a.dist[i] > far_d) {
          far_d = a.dist[i];
          far = i;
        }
      }
      taken[far] = true;
      std::copy_n(features.begin() + far * dim, dim, next.begin() + cl * dim);
    }
    Assignment na = assign(features, n, dim, next, k);
    // Lloyd steps cannot increase distortion in exact arithmetic; a rounding
    // uptick means convergence, so keep the previous centroids.
    if (na.distortion > a.distortion) break;
    const double prev = a.distortion;
    c = std::move(next);
    a = std::move(na);
    result.distortion.push_back(a.distortion);
    result.iterations = it + 1;
    if (prev <= 0.0 || (prev - a.distortion) / prev < opts.tolerance) break;
  }

  Codebook& cb = result.codebook;
  cb.k = k;
  cb.dim = dim;
  cb.feature_space = opts.feature_space;
  cb.centroids.resize(k * dim);
  for (std::size_t i = 0; i < c.size(); ++i) cb.centroids[i] = static_cast<float>(c[i]);
  std::set<std::vector<float>> seen;
  for (std::size_t j = 0; j < k; ++j) {
    auto row = std::vector<float>(cb.centroids.begin() + j * dim,
                                  cb.centroids.begin() + (j + 1) * dim);
    if (!seen.insert(std::move(row)).second) {
      throw Error(Errc::kTooFewPoints, "k-means produced duplicate centroids");
    }
  }
  return result;
}

std::size_t UnitSequence::frame_count() const {
  if (durations.empty()) return units.size();
  std::size_t s = 0;
  for (auto d : durations) s += d;
  return s;
}

UnitSequence encode_units(std::span<const double> features, std::size_t dim,
                          const Codebook& cb) {
  if (dim != cb.dim || (dim && features.size() % dim != 0)) {
    throw Error(Errc::kDimMismatch, "features of dim " + std::to_string(dim) +
                                        " vs codebook dim " + std::to_string(cb.dim));
  }
  UnitSequence u;
  const std::size_t n = dim ? features.size() / dim : 0;
  u.units.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t j = 0; j < cb.k; ++j) {
      const double d = sq_dist(features.data() + i * dim, cb.centroids.data() + j * dim, dim);
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    u.units[i] = arg;
  }
  return u;
}

UnitSequence encode_units(const MelSpectrogram& m, const Codebook& cb) {
  return encode_units(m.frames, m.n_mels, cb);
}

UnitSequence reduce_units(const UnitSequence& u) {
  if (u.units.empty()) throw Error(Errc::kEmptyInput, "reduce of empty unit sequence");
  UnitSequence r;
  r.reduced = true;
  for (std::size_t i = 0; i < u.units.size(); ++i) {
    const std::size_t run = u.has_durations() ? u.durations[i] : 1;
    if (!r.units.empty() && r.units.back() == u.units[i]) {
      r.durations.back() += run;
    } else {
      r.units.push_back(u.units[i]);
      r.durations.push_back(run);
    }
  }
  return r;
}

UnitSequence expand_units(const UnitSequence& u) {
  if (u.durations.size() != u.units.size() || (u.units.size() && u.durations.empty())) {
    throw Error(Errc::kMissingDurations, "expand needs one duration per unit");
  }
  UnitSequence e;
  for (std::size_t i = 0; i < u.units.size(); ++i) {
    e.units.insert(e.units.end(), u.durations[i], u.units[i]);
  }
  return e;
}

void save_codebook(const std::filesystem::path& dir, const Codebook& cb) {
  nlohmann::json header;
  header["format_version"] = 1;
  header["K"] = cb.k;
  header["D"] = cb.dim;
  header["feature_space"] = cb.feature_space;
  header["dtype"] = "f32";
  header["byte_offset"] = 0;
  std::string blob;
  for (float v : cb.centroids) io::put_f32_le(blob, v);
  const auto staged = io::staging_path(dir);
  std::filesystem::remove_all(staged);
  std::filesystem::create_directories(staged);
  io::write_file_atomic(staged / "codebook.json", header.dump(2) + "\n");
  io::write_file_atomic(staged / "centroids.bin", blob);
  io::replace_dir(staged, dir);
}

Codebook load_codebook(const std::filesystem::path& dir) {
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(io::read_file(dir / "codebook.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kCorruptFile, dir.string() + "/codebook.json: " + e.what());
  }
  Codebook cb;
  cb.k = header.at("K").get<std::size_t>();
  cb.dim = header.at("D").get<std::size_t>();
  cb.feature_space = header.at("feature_space").get<std::string>();
  const std::string blob = io::read_file(dir / "centroids.bin");
  if (blob.size() != cb.k * cb.dim * 4) {
    throw Error(Errc::kCorruptFile, "centroids.bin size does not match K x D");
  }
  cb.centroids.resize(cb.k * cb.dim);
  for (std::size_t i = 0; i < cb.centroids.size(); ++i) {
    cb.centroids[i] = io::get_f32_le(blob.data() + 4 * i);
  }
  return cb;
}

}  // namespace s2st
