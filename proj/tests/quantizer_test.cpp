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

#include <cmath>

#include <gtest/gtest.h>

#include "s2st/frontend.hpp"
#include "s2st/io.hpp"
#include "s2st/manifest.hpp"
#include "s2st/quantizer.hpp"
#include "s2st/synthesis.hpp"
#include "s2st/trainer.hpp"
#include "test_util.hpp"

namespace s2st {
namespace {

using testing::TempDir;

std::vector<double> blobs(std::size_t n, std::size_t dim, std::size_t centres, Rng& rng) {
  std::vector<double> means(centres * dim);
  for (auto& m : means) m = uniform(rng, -10, 10);
  std::vector<double> x(n * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = uniform_index(rng, centres);
    for (std::size_t d = 0; d < dim; ++d) x[i * dim + d] = means[c * dim + d] + normal(rng);
  }
  return x;
}

std::vector<double> toy_target_features() {
  const Manifest m = read_manifest(testing::toy_dir() / "manifest.jsonl");
  std::vector<double> feats;
  for (const auto& r : m.records) {
    const MelSpectrogram mel = log_mel(load_audio_16k(*r.tgt_audio));
    feats.insert(feats.end(), mel.frames.begin(), mel.frames.end());
  }
  return feats;
}

UnitSequence random_reduced(std::size_t k, std::size_t len, Rng& rng) {
  UnitSequence u;
  u.reduced = true;
  while (u.units.size() < len) {
    const std::size_t v = uniform_index(rng, k);
    if (u.units.empty() || u.units.back() != v) u.units.push_back(v);
  }
  return u;
}

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::kIo;
}

// ---- k-means -------------------------------------------------------------------------

TEST(KMeans, DistortionIsMonotoneOnEveryFit) {
  Rng rng(1);
  for (int fit = 0; fit < 20; ++fit) {
    const std::size_t dim = 1 + uniform_index(rng, 6);
    const std::size_t k = 2 + uniform_index(rng, 10);
    const auto x = blobs(200 + uniform_index(rng, 300), dim, 1 + uniform_index(rng, 12), rng);
    KMeansOptions o;
    o.k = k;
    o.seed = static_cast<std::uint64_t>(fit);
    o.tolerance = 0;
    const KMeansResult r = kmeans_fit(x, dim, o);
    ASSERT_FALSE(r.distortion.empty());
    EXPECT_EQ(r.distortion.size(), r.iterations + 1);
    for (std::size_t i = 1; i < r.distortion.size(); ++i) {
      EXPECT_LE(r.distortion[i], r.distortion[i - 1]) << "fit " << fit << " iter " << i;
    }
  }
}

TEST(KMeans, DistortionIsMonotoneOnToyFeatures) {
  const auto feats = toy_target_features();
  for (const std::size_t k : {8u, 32u}) {
    KMeansOptions o;
    o.k = k;
    const KMeansResult r = kmeans_fit(feats, 80, o);
    EXPECT_EQ(r.codebook.k, k);
    for (std::size_t i = 1; i < r.distortion.size(); ++i) EXPECT_LE(r.distortion[i], r.distortion[i - 1]);
  }
}

TEST(KMeans, FinalDistortionMatchesAssignment) {
  Rng rng(2);
  const auto x = blobs(300, 3, 4, rng);
  KMeansOptions o;
  o.k = 4;
  const KMeansResult r = kmeans_fit(x, 3, o);
  const UnitSequence u = encode_units(x, 3, r.codebook);
  double total = 0;
  for (std::size_t i = 0; i < u.units.size(); ++i) {
    const auto c = r.codebook.centroid(u.units[i]);
    for (std::size_t d = 0; d < 3; ++d) total += std::pow(x[i * 3 + d] - c[d], 2);
  }
  // Centroids are stored as float32, so allow for their rounding.
  EXPECT_NEAR(total / 300, r.distortion.back(), 1e-4 * r.distortion.back());
}

TEST(KMeans, SeedDeterminesCodebook) {
  Rng rng(3);
  const auto x = blobs(400, 4, 6, rng);
  KMeansOptions o;
  o.k = 6;
  o.seed = 11;
  EXPECT_EQ(kmeans_fit(x, 4, o).codebook.centroids, kmeans_fit(x, 4, o).codebook.centroids);
  EXPECT_EQ(kmeans_fit(x, 4, o).codebook.hash(), kmeans_fit(x, 4, o).codebook.hash());
}

TEST(KMeans, RejectsDegenerateInput) {
  KMeansOptions o;
  o.k = 4;
  const std::vector<double> three(3 * 2, 1.0);
  EXPECT_EQ(error_of([&] { kmeans_fit(three, 2, o); }), Errc::kTooFewPoints);
  const std::vector<double> same(40 * 2, 1.0);
  EXPECT_EQ(error_of([&] { kmeans_fit(same, 2, o); }), Errc::kTooFewPoints);
  const std::vector<double> ragged(7, 0.5);
  EXPECT_EQ(error_of([&] { kmeans_fit(ragged, 2, o); }), Errc::kDimMismatch);
}

// ---- units -----------------------------------------------------------------------------

TEST(Units, EncodePicksNearestWithLowestIndexTies) {
  Codebook cb;
  cb.k = 3;
  cb.dim = 1;
  cb.centroids = {0.0f, 2.0f, 4.0f};
  const std::vector<double> x = {-1, 0.9, 1.0, 1.1, 3.0, 10};
  EXPECT_EQ(encode_units(x, 1, cb).units, (std::vector<std::size_t>{0, 0, 0, 1, 1, 2}));
  EXPECT_EQ(error_of([&] { encode_units(x, 2, cb); }), Errc::kDimMismatch);
}

TEST(Units, ReduceExpandRoundTrip) {
  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    UnitSequence u;
    for (std::size_t n = 1 + uniform_index(rng, 40); n > 0; --n) u.units.push_back(uniform_index(rng, 4));
    const UnitSequence r = reduce_units(u);
    ASSERT_TRUE(r.reduced);
    ASSERT_EQ(r.durations.size(), r.units.size());
    ASSERT_EQ(r.frame_count(), u.units.size());
    for (std::size_t j = 1; j < r.units.size(); ++j) ASSERT_NE(r.units[j], r.units[j - 1]);
    ASSERT_EQ(expand_units(r).units, u.units);
    ASSERT_EQ(reduce_units(expand_units(r)).units, r.units);
  }
}

TEST(Units, ReduceAndExpandErrors) {
  EXPECT_EQ(error_of([] { reduce_units({}); }), Errc::kEmptyInput);
  UnitSequence u;
  u.units = {1, 2};
  u.reduced = true;
  EXPECT_EQ(error_of([&] { expand_units(u); }), Errc::kMissingDurations);
}

TEST(Units, CodebookFixedPointLaw) {
  const auto feats = toy_target_features();
  KMeansOptions o;
  o.k = 32;
  const Codebook cb = kmeans_fit(feats, 80, o).codebook;
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const UnitSequence u = random_reduced(cb.k, 1 + uniform_index(rng, 30), rng);
    SynthesisConfig sc;
    sc.repeat_factor = 1 + uniform_index(rng, 3);
    const MelSpectrogram mel = units_to_mel(u, cb, sc);
    ASSERT_EQ(mel.n_frames, u.size() * sc.repeat_factor);
    const UnitSequence back = reduce_units(encode_units(mel, cb));
    ASSERT_EQ(back.units, u.units) << "sequence " << i;
    for (const std::size_t d : back.durations) ASSERT_EQ(d, sc.repeat_factor);
  }
}

// ---- persistence -------------------------------------------------------------------------

TEST(Codebook, SaveLoadIsBitExact) {
  TempDir dir("cb");
  const auto feats = toy_target_features();
  KMeansOptions o;
  o.k = 8;
  const Codebook cb = kmeans_fit(feats, 80, o).codebook;
  save_codebook(dir / "cb", cb);
  const Codebook back = load_codebook(dir / "cb");
  EXPECT_EQ(back.k, 8u);
  EXPECT_EQ(back.dim, 80u);
  EXPECT_EQ(back.feature_space, kLogMel80);
  EXPECT_EQ(back.centroids, cb.centroids);
  EXPECT_EQ(back.hash(), cb.hash());
  save_codebook(dir / "again", back);
  for (const char* f : {"codebook.json", "centroids.bin"}) {
    EXPECT_EQ(io::read_file(dir / "cb" / f), io::read_file(dir / "again" / f));
  }
}

TEST(Codebook, HashTracksContent) {
  Codebook a;
  a.k = 2;
  a.dim = 1;
  a.centroids = {0.0f, 1.0f};
  Codebook b = a;
  EXPECT_EQ(a.hash(), b.hash());
  b.centroids[1] = 1.5f;
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.feature_space = "other";
  EXPECT_NE(a.hash(), b.hash());
}

TEST(Codebook, TruncatedFileIsCorrupt) {
  TempDir dir("cb");
  Codebook cb;
  cb.k = 2;
  cb.dim = 2;
  cb.centroids = {0, 1, 2, 3};
  save_codebook(dir / "cb", cb);
  std::string bytes = io::read_file(dir / "cb" / "centroids.bin");
  bytes.pop_back();
  io::write_file_atomic(dir / "cb" / "centroids.bin", bytes);
  EXPECT_EQ(error_of([&] { load_codebook(dir / "cb"); }), Errc::kCorruptFile);
}

}  // namespace
}  // namespace s2st
