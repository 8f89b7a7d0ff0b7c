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

#include <algorithm>
#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "s2st/io.hpp"
#include "s2st/trainer.hpp"
#include "test_util.hpp"

namespace s2st {
namespace {

using testing::TempDir;

Errc error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::kIo;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// ---- schedule ------------------------------------------------------------------------

TEST(Schedule, WarmupPeakAndInverseSqrtDecay) {
  ScheduleConfig s;
  s.warmup_steps = 400;
  EXPECT_DOUBLE_EQ(lr_at(400, ParamGroup::kDecoder, s), 2.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(400, ParamGroup::kEncoder, s), 1e-5);
  EXPECT_DOUBLE_EQ(lr_at(200, ParamGroup::kDecoder, s), 1.25e-4);
  EXPECT_DOUBLE_EQ(lr_at(1600, ParamGroup::kDecoder, s), 1.25e-4);
  EXPECT_DOUBLE_EQ(lr_at(1, ParamGroup::kDecoder, s), 2.5e-4 / 400);
  for (std::size_t step = 1; step < 2000; ++step) {
    const double a = lr_at(step, ParamGroup::kDecoder, s);
    const double b = lr_at(step + 1, ParamGroup::kDecoder, s);
    if (step < 400) EXPECT_LT(a, b);
    if (step >= 400) EXPECT_GT(a, b);
    EXPECT_NEAR(lr_at(step, ParamGroup::kEncoder, s) / a, 1e-5 / 2.5e-4, 1e-12);
  }
  EXPECT_EQ(error_of([&] { lr_at(0, ParamGroup::kDecoder, s); }), Errc::kConfig);
}

// ---- Adam ----------------------------------------------------------------------------

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  std::vector<double> p{1.0, -2.0, 3.0}, g(3, 0.0), m(3, 0.0), v(3, 0.0);
  for (std::size_t t = 1; t <= 5; ++t) adam_update(p, g, m, v, t, 0.1, {});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (const double g0 : {1e-3, 0.5, 7.0, -3.0}) {
    std::vector<double> p{0.0}, g{g0}, m{0.0}, v{0.0};
    adam_update(p, g, m, v, 1, 0.01, {});
    EXPECT_NEAR(std::abs(p[0]), 0.01, 1e-8);
    EXPECT_LT(p[0] * g0, 0.0);
  }
}

TEST(Adam, ThreeStepQuadraticMatchesHandRolledReference) {
  // f(x) = 0.5 * a * (x - c)^2, gradient a * (x - c).
  const double a = 3.0, c = 1.5, lr = 0.05;
  const double b1 = 0.9, b2 = 0.98, eps = 1e-9;
  double x_ref = -2.0, m_ref = 0.0, v_ref = 0.0;
  std::vector<double> x{-2.0}, m{0.0}, v{0.0};
  for (int t = 1; t <= 3; ++t) {
    const double g = a * (x_ref - c);
    m_ref = b1 * m_ref + (1 - b1) * g;
    v_ref = b2 * v_ref + (1 - b2) * g * g;
    const double mh = m_ref / (1 - std::pow(b1, t));
    const double vh = v_ref / (1 - std::pow(b2, t));
    x_ref -= lr * mh / (std::sqrt(vh) + eps);

    const std::vector<double> grad{a * (x[0] - c)};
    adam_update(x, grad, m, v, static_cast<std::size_t>(t), lr, {});
    EXPECT_NEAR(x[0], x_ref, 1e-12) << "step " << t;
  }
}

TEST(Adam, MismatchedBuffersThrow) {
  std::vector<double> p(3), g(2), m(3), v(3);
  EXPECT_EQ(error_of([&] { adam_update(p, g, m, v, 1, 0.1, {}); }), Errc::kShapeMismatch);
}

TEST(Adam, MomentBuffersShapeMatchParameters) {
  ModelConfig cfg;
  cfg.encoder.n_layers = 1;
  cfg.encoder.d_model = 8;
  cfg.encoder.n_heads = 2;
  cfg.decoder.n_layers = 1;
  cfg.decoder.d_model = 8;
  cfg.decoder.n_heads = 2;
  cfg.decoder.n_units = 5;
  S2stModel model(cfg, 0);
  Adam opt(model.params());
  EXPECT_EQ(opt.state().step, 0u);
  EXPECT_EQ(opt.state().moments.size(), model.params().tensors().size());
  for (const auto& [name, t] : model.params().tensors()) {
    EXPECT_EQ(opt.state().moments.at(name).m.size(), t.size()) << name;
    EXPECT_EQ(opt.state().moments.at(name).v.size(), t.size()) << name;
  }
}

// ---- clipping ------------------------------------------------------------------------

TEST(ClipGradNorm, RescalesToBudgetAndReportsPreClipNorm) {
  ParamStore ps;
  Tensor a = ps.add("a", Tensor::from({2}, {0.0, 0.0}));
  Tensor b = ps.add("b", Tensor::from({1}, {0.0}));
  backward(add(sum(mul(a, Tensor::from({2}, {3.0, 0.0}))), sum(mul(b, Tensor::from({1}, {4.0})))));
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
  EXPECT_NEAR(clip_grad_norm(ps, 10.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
}

// ---- batching ------------------------------------------------------------------------

std::vector<std::pair<std::string, std::size_t>> random_lengths(Rng& rng, std::size_t n,
                                                                std::size_t max_len) {
  std::vector<std::pair<std::string, std::size_t>> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back("u" + std::to_string(i), 1 + uniform_index(rng, max_len));
  return out;
}

TEST(PlanBatches, EqualLengthsPackFourPerBatch) {
  std::vector<std::pair<std::string, std::size_t>> f;
  for (int i = 0; i < 18; ++i) f.emplace_back("u" + std::to_string(i), 25);
  const BatchPlan plan = plan_batches(f, 100, 3);
  ASSERT_EQ(plan.batches.size(), 5u);
  std::size_t short_batches = 0;
  for (const auto& b : plan.batches) {
    if (b.size() != 4) {
      EXPECT_EQ(b.size(), 2u);
      ++short_batches;
    }
  }
  EXPECT_EQ(short_batches, 1u);
}

TEST(PlanBatches, PackingLawsOnRandomLengths) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_lengths(rng, 1 + uniform_index(rng, 60), 80);
    const std::size_t budget = 80 + uniform_index(rng, 300);
    const BatchPlan plan = plan_batches(f, budget, static_cast<std::uint64_t>(trial));
    std::map<std::string, std::size_t> len(f.begin(), f.end());
    std::multiset<std::string> seen;
    for (const auto& b : plan.batches) {
      ASSERT_FALSE(b.empty());
      std::size_t total = 0;
      for (const auto& id : b) {
        total += len.at(id);
        seen.insert(id);
      }
      ASSERT_LE(total, budget);
    }
    ASSERT_EQ(seen.size(), f.size());
    for (const auto& [id, n] : f) ASSERT_EQ(seen.count(id), 1u) << id;
  }
}

TEST(PlanBatches, InvariantToRecordOrder) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    auto f = random_lengths(rng, 40, 30);
    const BatchPlan a = plan_batches(f, 100, 7);
    shuffle(f, rng);
    const BatchPlan b = plan_batches(f, 100, 7);
    ASSERT_EQ(a.batches, b.batches);
  }
}

TEST(PlanBatches, SeedChangesOrderNotContent) {
  Rng rng(13);
  const auto f = random_lengths(rng, 60, 30);
  auto a = plan_batches(f, 90, 1).batches;
  auto b = plan_batches(f, 90, 2).batches;
  EXPECT_NE(a, b);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
}

TEST(PlanBatches, OversizedUtteranceNamesTheId) {
  try {
    plan_batches({{"fine", 10}, {"huge-7", 500}}, 100, 0);
    FAIL() << "no error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kUtteranceTooLong);
    EXPECT_NE(std::string(e.what()).find("huge-7"), std::string::npos);
  }
}

TEST(DevSplit, HashSplitIsStableAndRoughlyTenPercent) {
  std::size_t dev = 0;
  for (int i = 0; i < 5000; ++i) {
    const std::string id = "utt-" + std::to_string(i);
    EXPECT_EQ(in_hash_dev_split(id), in_hash_dev_split(id));
    dev += in_hash_dev_split(id) ? 1 : 0;
  }
  // Binomial(5000, 0.1): sd ~21.
  EXPECT_NEAR(static_cast<double>(dev), 500.0, 90.0);
}

// ---- training on toy data ----------------------------------------------------------------

class ToyTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    Manifest m = read_manifest(testing::toy_dir() / "manifest.jsonl");
    m.records.resize(4);
    std::vector<double> feats;
    for (const auto& r : m.records) {
      const MelSpectrogram mel = log_mel(load_audio_16k(*r.tgt_audio));
      feats.insert(feats.end(), mel.frames.begin(), mel.frames.end());
    }
    KMeansOptions ko;
    ko.k = 8;
    codebook_ = new Codebook(kmeans_fit(feats, MelConfig{}.n_mels, ko).codebook);
    examples_ = new std::vector<Example>(prepare_examples(m, *codebook_));
  }
  static void TearDownTestSuite() {
    delete examples_;
    delete codebook_;
  }

  static ModelConfig config() {
    ModelConfig c;
    c.encoder.n_layers = 1;
    c.encoder.d_model = 16;
    c.encoder.n_heads = 2;
    c.encoder.conv_kernel_size = 5;
    c.encoder.ffn_expansion = 2;
    c.encoder.dropout = 0.0;
    c.decoder.n_layers = 1;
    c.decoder.d_model = 16;
    c.decoder.n_heads = 2;
    c.decoder.ffn_expansion = 2;
    c.decoder.dropout = 0.0;
    c.decoder.n_units = 8;
    return c;
  }

  static TrainConfig train_config(std::size_t epochs) {
    TrainConfig tc;
    tc.epochs = epochs;
    tc.max_frames = 100000;
    tc.augment = AugmentPolicy::none();
    return tc;
  }

  static Codebook* codebook_;
  static std::vector<Example>* examples_;
};

Codebook* ToyTraining::codebook_ = nullptr;
std::vector<Example>* ToyTraining::examples_ = nullptr;

TEST_F(ToyTraining, ExamplesCarryReducedTargets) {
  ASSERT_EQ(examples_->size(), 4u);
  for (const auto& ex : *examples_) {
    EXPECT_TRUE(ex.target.reduced);
    EXPECT_FALSE(ex.target.empty());
    for (std::size_t i = 1; i < ex.target.units.size(); ++i) {
      EXPECT_NE(ex.target.units[i], ex.target.units[i - 1]);
    }
    EXPECT_EQ(ex.source.n_mels, MelConfig{}.n_mels);
  }
}

TEST_F(ToyTraining, UnitCacheIsReusedAndKeyedByCodebook) {
  TempDir dir("cache");
  Manifest m = read_manifest(testing::toy_dir() / "manifest.jsonl");
  m.records.resize(4);
  const auto path = unit_cache_path(dir / "manifest.jsonl", *codebook_);
  EXPECT_NE(path.filename().string().find(io::hex64(codebook_->hash())), std::string::npos);
  const auto first = prepare_examples(m, *codebook_, path);
  ASSERT_TRUE(std::filesystem::exists(path));
  const auto stamp = std::filesystem::last_write_time(path);
  const auto second = prepare_examples(m, *codebook_, path);
  EXPECT_EQ(std::filesystem::last_write_time(path), stamp);
  ASSERT_EQ(first.size(), second.size());
  for (std::size_t i = 0; i < first.size(); ++i) {
    EXPECT_EQ(first[i].target.units, second[i].target.units);
    EXPECT_EQ(first[i].target.durations, second[i].target.durations);
  }
}

TEST_F(ToyTraining, FixedBatchLossDecreasesOverFirstTenSteps) {
  S2stModel model(config(), 0);
  TrainConfig tc = train_config(10);
  tc.label_smoothing = 0.0;
  // One batch per epoch: each epoch's loss is the pre-update loss of the same batch.
  const TrainResult r = train(model, *examples_, *examples_, tc);
  ASSERT_EQ(r.history.size(), 10u);
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    EXPECT_LE(r.history[i].train_loss, r.history[i - 1].train_loss) << "step " << i + 1;
  }
  EXPECT_LT(r.history.back().train_loss, r.history.front().train_loss);
}

TEST_F(ToyTraining, FrozenEncoderIsUntouched) {
  S2stModel model(config(), 1);
  const auto before = model.params().snapshot();
  TrainConfig tc = train_config(3);
  tc.schedule.base_lr_encoder = 0.0;
  tc.schedule.warmup_steps = 1;
  train(model, *examples_, *examples_, tc);
  std::size_t encoder = 0, moved = 0;
  for (const auto& [name, t] : model.params().tensors()) {
    const bool same = values(t) == values(before.at(name));
    if (param_group(name) == ParamGroup::kEncoder) {
      ++encoder;
      EXPECT_TRUE(same) << name;
    } else if (!same) {
      ++moved;
    }
  }
  EXPECT_GT(encoder, 0u);
  EXPECT_GT(moved, 0u);
}

TEST_F(ToyTraining, SameSeedGivesIdenticalLogsAndCheckpoints) {
  TempDir dir("train");
  TrainConfig tc = train_config(3);
  tc.max_frames = 400;
  tc.augment = AugmentPolicy{};
  for (const char* run : {"a", "b"}) {
    S2stModel model(config(), 5);
    train(model, *examples_, *examples_, tc, dir / run);
  }
  for (const char* f : {"metrics.jsonl", "best.ckpt/weights.bin", "last.ckpt/weights.bin",
                        "last.ckpt/header.json"}) {
    EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
  }
  const std::string metrics = io::read_file(dir / "a" / "metrics.jsonl");
  EXPECT_EQ(std::count(metrics.begin(), metrics.end(), '\n'), 3);
  EXPECT_EQ(metrics.find("wall_s"), std::string::npos);
  EXPECT_NE(io::read_file(dir / "a" / "timing.jsonl").find("wall_s"), std::string::npos);
}

TEST_F(ToyTraining, BestCheckpointHoldsBestDevAccuracy) {
  TempDir dir("best");
  S2stModel model(config(), 2);
  const TrainResult r = train(model, *examples_, *examples_, train_config(6), dir.path());
  double best = -1;
  for (const auto& e : r.history) best = std::max(best, e.dev_acc);
  EXPECT_EQ(r.best_dev_acc, best);
  const auto loaded = S2stModel::load(dir / "best.ckpt");
  EXPECT_NEAR(teacher_forced_accuracy(*loaded, *examples_), best, 1e-9);
}

TEST_F(ToyTraining, EpochsToReach) {
  TrainResult r;
  for (std::size_t e = 1; e <= 4; ++e) r.history.push_back({e, 0.0, 0.2 * static_cast<double>(e)});
  EXPECT_EQ(r.epochs_to_reach(0.5), 3u);
  EXPECT_EQ(r.epochs_to_reach(0.8), 4u);
  EXPECT_FALSE(r.epochs_to_reach(0.9).has_value());
}

TEST_F(ToyTraining, ErrorsOnEmptySetsAndEmptyTargets) {
  S2stModel model(config(), 0);
  EXPECT_EQ(error_of([&] { train(model, {}, *examples_, train_config(1)); }), Errc::kEmptyCorpus);
  EXPECT_EQ(error_of([&] { train(model, *examples_, {}, train_config(1)); }), Errc::kEmptyCorpus);
  auto bad = *examples_;
  bad[0].target = UnitSequence{};
  EXPECT_EQ(error_of([&] { train(model, bad, *examples_, train_config(1)); }), Errc::kEmptyTarget);
}

TEST_F(ToyTraining, PretrainingIsDeterministicAndWritesEncoder) {
  TempDir dir("pre");
  std::vector<MelSpectrogram> mels;
  for (const auto& ex : *examples_) mels.push_back(ex.source);
  PretrainConfig pc;
  pc.steps = 5;
  pc.mask_prob = 0.3;
  pc.span_len = 2;
  pc.lr = 1e-3;
  std::vector<double> losses[2];
  for (int i = 0; i < 2; ++i) {
    S2stModel model(config(), 9);
    losses[i] = pretrain(model, mels, pc, dir / std::to_string(i)).losses;
  }
  EXPECT_EQ(losses[0], losses[1]);
  ASSERT_EQ(losses[0].size(), 5u);
  for (const double l : losses[0]) EXPECT_TRUE(std::isfinite(l));
  EXPECT_EQ(io::read_file(dir / "0" / "encoder.ckpt" / "weights.bin"),
            io::read_file(dir / "1" / "encoder.ckpt" / "weights.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "0" / "metrics.jsonl"));
}

TEST_F(ToyTraining, PretrainingTouchesOnlyEncoderParameters) {
  std::vector<MelSpectrogram> mels;
  for (const auto& ex : *examples_) mels.push_back(ex.source);
  S2stModel model(config(), 4);
  const auto before = model.params().snapshot();
  PretrainConfig pc;
  pc.steps = 3;
  pc.mask_prob = 0.3;
  pc.span_len = 2;
  pc.warmup_steps = 1;
  pc.lr = 1e-2;
  pretrain(model, mels, pc);
  std::size_t moved = 0;
  for (const auto& [name, t] : model.params().tensors()) {
    const bool same = values(t) == values(before.at(name));
    if (param_group(name) != ParamGroup::kEncoder) EXPECT_TRUE(same) << name;
    if (!same) ++moved;
  }
  EXPECT_GT(moved, 0u);
  EXPECT_EQ(error_of([&] { pretrain(model, {}, pc); }), Errc::kEmptyCorpus);
}

}  // namespace
}  // namespace s2st
