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
#include <numeric>

#include <gtest/gtest.h>

#include "s2st/checkpoint.hpp"
#include "s2st/io.hpp"
#include "s2st/model.hpp"
#include "s2st/trainer.hpp"
#include "grad_cases.hpp"
#include "test_util.hpp"

namespace s2st {
namespace {

using testing::grad_check;
using testing::probe;
using testing::random_tensor;
using testing::TempDir;

ModelConfig tiny_config() { return testing::grad_check_model_config(); }

ModelConfig small_config() {
  ModelConfig c = tiny_config();
  c.encoder.n_mels = 80;
  c.encoder.n_layers = 2;
  c.encoder.d_model = 16;
  c.decoder.n_layers = 2;
  c.decoder.d_model = 16;
  c.decoder.n_units = 12;
  c.decoder.max_target_len = 32;
  return c;
}

Tensor random_mel(std::size_t frames, std::size_t mels, Rng& rng) {
  return random_tensor({frames, mels}, rng, -4, 1, false);
}

UnitSequence reduced(std::vector<std::size_t> units) {
  UnitSequence u;
  u.units = std::move(units);
  u.reduced = true;
  return u;
}

// ---- encoder -----------------------------------------------------------------------

TEST(Encoder, OutputLengthIsCeilQuarterForAllLengths) {
  ModelConfig c = tiny_config();
  S2stModel model(c, 1);
  Rng rng(2);
  NoGradGuard guard;
  for (std::size_t t = 4; t <= 200; ++t) {
    const Tensor out = model.encoder().encode(random_mel(t, 8, rng), {});
    ASSERT_EQ(out.dim(0), (t + 3) / 4) << "T=" << t;
    ASSERT_EQ(out.dim(0), encoder_output_length(t));
    ASSERT_EQ(out.dim(1), 8u);
  }
}

TEST(Encoder, TooShortInputThrows) {
  S2stModel model(tiny_config(), 1);
  Rng rng(3);
  for (std::size_t t = 0; t < 4; ++t) {
    try {
      model.encoder().encode(random_mel(t, 8, rng), {});
      FAIL() << t;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::kTooShort);
    }
  }
  Tape::active().clear();
}

TEST(Encoder, EvalModeIsDeterministic) {
  ModelConfig c = tiny_config();
  c.encoder.dropout = 0.5;
  S2stModel model(c, 4);
  Rng rng(5);
  const Tensor mel = random_mel(13, 8, rng);
  NoGradGuard guard;
  const Tensor a = model.encoder().encode(mel, {});
  const Tensor b = model.encoder().encode(mel, {});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  Rng drop_rng(6);
  const Tensor d = model.encoder().encode(mel, {true, 0.5, &drop_rng});
  double diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a.data()[i] - d.data()[i]);
  EXPECT_GT(diff, 0.0);
}

// ---- adapter -----------------------------------------------------------------------

TEST(Adapter, OutputLengthIsCeilOverStrideProduct) {
  Rng rng(7);
  for (std::size_t layers = 1; layers <= 3; ++layers) {
    for (std::size_t stride = 1; stride <= 3; ++stride) {
      AdapterConfig cfg{layers, stride, 3};
      ParamStore ps;
      LengthAdapter adapter(ps, "adapter", 4, cfg, rng);
      const std::size_t prod = cfg.downsample();
      NoGradGuard guard;
      for (std::size_t t = prod; t <= 200; ++t) {
        const Tensor out = adapter(random_tensor({t, 4}, rng, -1, 1, false));
        ASSERT_EQ(out.dim(0), (t + prod - 1) / prod) << layers << "x" << stride << " T=" << t;
        ASSERT_EQ(out.dim(0), adapter_output_length(t, cfg));
        ASSERT_EQ(out.dim(1), 4u);
      }
    }
  }
}

TEST(Adapter, IdentityInitPassesEveryStrideRow) {
  Rng rng(8);
  AdapterConfig cfg{1, 2, 3};
  ParamStore ps;
  LengthAdapter adapter(ps, "adapter", 3, cfg, rng);
  adapter.init_identity(30.0);
  const Tensor x = random_tensor({7, 3}, rng, -1, 1, false);
  const Tensor y = adapter(x);
  ASSERT_EQ(y.dim(0), 4u);
  for (std::size_t t = 0; t < 4; ++t) {
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(y.at(t, c), x.at(2 * t, c), 1e-12);
  }
  Tape::active().clear();
}

// ---- decoder -----------------------------------------------------------------------

TEST(Decoder, LogitsAtPositionIgnoreLaterTokens) {
  const ModelConfig c = small_config();
  S2stModel model(c, 9);
  Rng rng(10);
  NoGradGuard guard;
  const std::size_t vocab = c.decoder.vocab_size();
  for (int probe_id = 0; probe_id < 50; ++probe_id) {
    const Tensor memory = model.memory(random_mel(8 + uniform_index(rng, 40), 80, rng), {});
    const std::size_t len = 2 + uniform_index(rng, 15);
    std::vector<std::size_t> tokens{c.decoder.bos()};
    for (std::size_t i = 1; i < len; ++i) tokens.push_back(uniform_index(rng, c.decoder.n_units));
    const std::size_t pos = uniform_index(rng, len - 1);
    const Tensor before = model.decoder().forward(memory, tokens, {});
    std::vector<std::size_t> mutated = tokens;
    for (std::size_t j = pos + 1; j < len; ++j) mutated[j] = uniform_index(rng, vocab);
    const Tensor after = model.decoder().forward(memory, mutated, {});
    for (std::size_t i = 0; i <= pos; ++i) {
      for (std::size_t v = 0; v < vocab; ++v) {
        ASSERT_EQ(before.at(i, v), after.at(i, v)) << "probe " << probe_id << " pos " << i;
      }
    }
  }
}

TEST(Decoder, DecodeStepMatchesLastForwardRow) {
  const ModelConfig c = small_config();
  S2stModel model(c, 11);
  Rng rng(12);
  NoGradGuard guard;
  const Tensor memory = model.memory(random_mel(30, 80, rng), {});
  std::vector<std::size_t> prefix{c.decoder.bos(), 3, 7, 1};
  const Tensor logits = model.decoder().forward(memory, prefix, {});
  const auto step = model.decoder().decode_step(memory, prefix);
  ASSERT_EQ(step.size(), c.decoder.vocab_size());
  for (std::size_t v = 0; v < step.size(); ++v) EXPECT_NEAR(step[v], logits.at(3, v), 1e-12);
}

TEST(Decoder, PrefixBeyondMaxLengthThrows) {
  ModelConfig c = tiny_config();
  c.decoder.max_target_len = 4;
  S2stModel model(c, 13);
  Rng rng(14);
  NoGradGuard guard;
  const Tensor memory = model.memory(random_mel(12, 8, rng), {});
  std::vector<std::size_t> prefix{c.decoder.bos(), 0, 1, 2};
  EXPECT_NO_THROW(model.decoder().decode_step(memory, prefix));
  prefix.push_back(3);
  try {
    model.decoder().decode_step(memory, prefix);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kPrefixTooLong);
  }
}

TEST(Decoder, EmptyTargetThrows) {
  S2stModel model(tiny_config(), 15);
  Rng rng(16);
  const Tensor memory = model.memory(random_mel(12, 8, rng), {});
  try {
    model.decoder().teacher_forced_loss(memory, reduced({}), 0.1, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kEmptyTarget);
  }
  Tape::active().clear();
}

TEST(Decoder, TeacherForcedSumCoversUnitsPlusEos) {
  const ModelConfig c = tiny_config();
  S2stModel model(c, 17);
  Rng rng(18);
  NoGradGuard guard;
  const Tensor memory = model.memory(random_mel(16, 8, rng), {});
  const UnitSequence target = reduced({1, 4, 0});
  const auto parts = model.decoder().teacher_forced(memory, target, 0.0, {});
  EXPECT_EQ(parts.count, 4u);
  const std::vector<std::size_t> inputs{c.decoder.bos(), 1, 4, 0};
  const std::vector<std::size_t> outputs{1, 4, 0, c.decoder.eos()};
  const Tensor logits = model.decoder().forward(memory, inputs, {});
  EXPECT_NEAR(parts.sum.item(),
              cross_entropy(logits, outputs, 0.0, Reduction::kSum).item(), 1e-12);
  EXPECT_NEAR(model.decoder().teacher_forced_loss(memory, target, 0.0, {}).item(),
              parts.sum.item() / 4, 1e-12);
}

// ---- span masking and the contrastive objective -------------------------------------

TEST(SpanMask, FullProbabilityAndSpanMasksEverything) {
  Rng rng(20);
  const Tensor x = random_tensor({9, 4}, rng, -1, 1, false);
  const Tensor emb = random_tensor({4}, rng, -1, 1, false);
  const MaskedInput m = apply_span_mask(x, emb, 1.0, 9, rng);
  ASSERT_EQ(m.spec.masked.size(), 9u);
  ASSERT_EQ(m.x.shape(), x.shape());
  for (std::size_t t = 0; t < 9; ++t) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(m.x.at(t, c), emb.at(c));
  }
}

TEST(SpanMask, SeedDeterminesMask) {
  Rng a(21), b(21);
  for (int i = 0; i < 20; ++i) {
    EXPECT_EQ(draw_span_mask(50, 0.1, 4, a).masked, draw_span_mask(50, 0.1, 4, b).masked);
  }
}

TEST(SpanMask, NeverEmptyAndWithinBounds) {
  Rng rng(22);
  for (int i = 0; i < 500; ++i) {
    const std::size_t len = 1 + uniform_index(rng, 30);
    const MaskSpec s = draw_span_mask(len, 0.001, 1 + uniform_index(rng, 5), rng);
    ASSERT_FALSE(s.masked.empty());
    ASSERT_TRUE(std::is_sorted(s.masked.begin(), s.masked.end()));
    ASSERT_EQ(std::adjacent_find(s.masked.begin(), s.masked.end()), s.masked.end());
    ASSERT_LT(s.masked.back(), len);
  }
}

TEST(SpanMask, MaskedFractionMatchesExpectation) {
  // Position t is masked iff a span starts in [t - M + 1, t].
  const std::size_t len = 200, span = 10;
  const double p = 0.065;
  double expected = 0;
  for (std::size_t t = 0; t < len; ++t) {
    expected += 1.0 - std::pow(1.0 - p, static_cast<double>(std::min(t + 1, span)));
  }
  expected /= static_cast<double>(len);
  Rng rng(23);
  const int draws = 2000;
  double total = 0, total_sq = 0;
  for (int i = 0; i < draws; ++i) {
    const double f =
        static_cast<double>(draw_span_mask(len, p, span, rng).masked.size()) / static_cast<double>(len);
    total += f;
    total_sq += f * f;
  }
  const double mean_f = total / draws;
  const double sd = std::sqrt(std::max(0.0, total_sq / draws - mean_f * mean_f));
  EXPECT_NEAR(mean_f, expected, 3.0 * sd / std::sqrt(static_cast<double>(draws)));
}

TEST(SpanMask, MaskingPreservesShape) {
  Rng rng(24);
  for (std::size_t len = 1; len <= 40; ++len) {
    const Tensor x = random_tensor({len, 3}, rng, -1, 1, false);
    const MaskedInput m = apply_span_mask(x, Tensor::zeros({3}), 0.2, 3, rng);
    ASSERT_EQ(m.x.shape(), x.shape());
  }
}

TEST(Negatives, ExcludeOwnPositionAndPreferMaskedSet) {
  Rng rng(25);
  MaskSpec spec;
  spec.masked = {1, 3, 4, 7, 9, 12, 13};
  const auto neg = sample_negatives(spec, 20, 4, rng);
  ASSERT_EQ(neg.size(), spec.masked.size());
  for (std::size_t i = 0; i < neg.size(); ++i) {
    ASSERT_EQ(neg[i].size(), 4u);
    for (const std::size_t n : neg[i]) {
      EXPECT_NE(n, spec.masked[i]);
      EXPECT_TRUE(std::binary_search(spec.masked.begin(), spec.masked.end(), n));
    }
  }
  spec.masked = {2, 5};
  for (const auto& row : sample_negatives(spec, 8, 4, rng)) {
    for (const std::size_t n : row) EXPECT_LT(n, 8u);
  }
}

TEST(InfoNce, UniformScoresGiveLogOfCandidates) {
  const Tensor same = Tensor::full({6, 4}, 0.5);
  const std::vector<std::size_t> masked = {0, 2, 5};
  const std::vector<std::vector<std::size_t>> neg = {{1, 3, 4}, {0, 1, 3}, {2, 3, 4}};
  EXPECT_NEAR(info_nce(same, same, masked, neg, 0.1).item(), std::log(4.0), 1e-12);
}

TEST(InfoNce, AlignedTargetsWithOrthogonalNegativesApproachZero) {
  // Rows are standard basis vectors: c_t = q_t, every negative orthogonal.
  std::vector<double> eye(16, 0.0);
  for (std::size_t i = 0; i < 4; ++i) eye[i * 4 + i] = 1.0;
  const Tensor x = Tensor::from({4, 4}, eye);
  const std::vector<std::size_t> masked = {0, 1};
  const std::vector<std::vector<std::size_t>> neg = {{1, 2, 3}, {0, 2, 3}};
  double prev = std::log(4.0);
  for (const double kappa : {1.0, 0.5, 0.1, 0.05, 0.01}) {
    const double loss = info_nce(x, x, masked, neg, kappa).item();
    EXPECT_LT(loss, prev);
    EXPECT_NEAR(loss, std::log(1.0 + 3.0 * std::exp(-1.0 / kappa)), 1e-12);
    prev = loss;
  }
  EXPECT_LT(prev, 1e-30);
}

TEST(InfoNce, MatchesDirectFormula) {
  Rng rng(26);
  const Tensor c = random_tensor({8, 6}, rng, -1, 1, false);
  const Tensor q = random_tensor({8, 6}, rng, -1, 1, false);
  const std::vector<std::size_t> masked = {1, 2, 4, 5, 7};
  std::vector<std::vector<std::size_t>> neg;
  for (const std::size_t t : masked) {
    std::vector<std::size_t> row;
    for (int k = 0; k < 5; ++k) row.push_back((t + 1 + uniform_index(rng, 7)) % 8);
    neg.push_back(row);
  }
  auto cosine = [&](std::size_t i, std::size_t j) {
    double dot = 0, nc = 0, nq = 0;
    for (std::size_t d = 0; d < 6; ++d) {
      dot += c.at(i, d) * q.at(j, d);
      nc += c.at(i, d) * c.at(i, d);
      nq += q.at(j, d) * q.at(j, d);
    }
    return dot / std::sqrt(nc * nq);
  };
  double oracle = 0;
  for (std::size_t m = 0; m < masked.size(); ++m) {
    const std::size_t t = masked[m];
    double denom = std::exp(cosine(t, t) / 0.1);
    for (const std::size_t n : neg[m]) denom += std::exp(cosine(t, n) / 0.1);
    oracle += -(cosine(t, t) / 0.1 - std::log(denom));
  }
  oracle /= static_cast<double>(masked.size());
  EXPECT_NEAR(info_nce(c, q, masked, neg, 0.1).item(), oracle, 1e-9);
}

TEST(InfoNce, NoMaskedPositionsThrows) {
  const Tensor x = Tensor::full({4, 2}, 1.0);
  try {
    info_nce(x, x, {}, {}, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kNoMaskedPositions);
  }
}

// ---- composite gradients -------------------------------------------------------------

class CompositeGradCheck : public ::testing::TestWithParam<testing::GradCase> {};

TEST_P(CompositeGradCheck, MatchesFiniteDifferences) {
  const auto r = testing::run_grad_case(GetParam());
  EXPECT_GT(r.checked, 500u);
  EXPECT_LE(r.max_rel_error, 1e-4) << r.checked << " entries";
}

INSTANTIATE_TEST_SUITE_P(Model, CompositeGradCheck,
                         ::testing::ValuesIn(testing::composite_grad_cases()),
                         [](const auto& info) { return info.param.name; });

// ---- parameters and persistence -------------------------------------------------------

TEST(Model, ParamGroups) {
  EXPECT_EQ(param_group("encoder.blocks.0.attn.q.weight"), ParamGroup::kEncoder);
  EXPECT_EQ(param_group("mask_embedding"), ParamGroup::kEncoder);
  EXPECT_EQ(param_group("adapter.0.weight"), ParamGroup::kDecoder);
  EXPECT_EQ(param_group("decoder.embedding"), ParamGroup::kDecoder);
  S2stModel model(tiny_config(), 50);
  for (const auto& [name, t] : model.params().tensors()) {
    const bool enc = name.rfind("encoder.", 0) == 0 || name == "mask_embedding";
    EXPECT_EQ(param_group(name) == ParamGroup::kEncoder, enc) << name;
  }
}

TEST(Model, SameSeedSameWeights) {
  S2stModel a(tiny_config(), 51), b(tiny_config(), 51), c(tiny_config(), 52);
  bool any_diff = false;
  for (const auto& [name, t] : a.params().tensors()) {
    const Tensor u = b.params().get(name), v = c.params().get(name);
    for (std::size_t i = 0; i < t.size(); ++i) {
      ASSERT_EQ(t.data()[i], u.data()[i]) << name;
      any_diff = any_diff || t.data()[i] != v.data()[i];
    }
  }
  EXPECT_TRUE(any_diff);
}

TEST(Model, SaveLoadRoundTripIsBitExact) {
  TempDir dir("model");
  S2stModel model(tiny_config(), 53);
  model.codebook_hash = "00000000deadbeef";
  model.save(dir / "a.ckpt");
  const auto loaded = S2stModel::load(dir / "a.ckpt");
  EXPECT_EQ(loaded->codebook_hash, model.codebook_hash);
  TensorMap expected = model.params().snapshot();
  round_to_f32(expected);
  for (const auto& [name, t] : expected) {
    const Tensor u = loaded->params().get(name);
    ASSERT_EQ(u.shape(), t.shape()) << name;
    for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(u.data()[i], t.data()[i]) << name;
  }
  loaded->save(dir / "b.ckpt");
  for (const char* f : {"header.json", "weights.bin"}) {
    EXPECT_EQ(io::read_file(dir / "a.ckpt" / f), io::read_file(dir / "b.ckpt" / f)) << f;
  }
}

TEST(Model, SameSeedGivesByteIdenticalCheckpoints) {
  TempDir dir("model");
  S2stModel(tiny_config(), 54).save(dir / "a.ckpt");
  S2stModel(tiny_config(), 54).save(dir / "b.ckpt");
  EXPECT_EQ(io::read_file(dir / "a.ckpt" / "weights.bin"),
            io::read_file(dir / "b.ckpt" / "weights.bin"));
  EXPECT_EQ(io::read_file(dir / "a.ckpt" / "header.json"),
            io::read_file(dir / "b.ckpt" / "header.json"));
}

TEST(Model, EncoderCheckpointTransfersOnlyEncoderWeights) {
  TempDir dir("model");
  S2stModel donor(tiny_config(), 55);
  donor.save_encoder(dir / "enc.ckpt");
  const Checkpoint ck = load_checkpoint(dir / "enc.ckpt");
  for (const auto& [name, t] : ck.tensors) EXPECT_EQ(param_group(name), ParamGroup::kEncoder);
  EXPECT_TRUE(ck.tensors.count("mask_embedding"));

  S2stModel target(tiny_config(), 56);
  const TensorMap before = target.params().snapshot();
  target.load_encoder(dir / "enc.ckpt");
  for (const auto& [name, t] : target.params().tensors()) {
    if (name == "encoder.pretrain_head.weight" || name == "encoder.pretrain_head.bias" ||
        param_group(name) == ParamGroup::kEncoder) {
      const Tensor src = ck.tensors.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(t.data()[i], src.data()[i]) << name;
    } else {
      const Tensor old = before.at(name);
      for (std::size_t i = 0; i < t.size(); ++i) ASSERT_EQ(t.data()[i], old.data()[i]) << name;
    }
  }
}

TEST(Model, EncoderCheckpointWithOtherShapeIsRejected) {
  TempDir dir("model");
  ModelConfig other = tiny_config();
  other.encoder.n_layers = 2;
  S2stModel(other, 57).save_encoder(dir / "enc.ckpt");
  S2stModel target(tiny_config(), 58);
  try {
    target.load_encoder(dir / "enc.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kConfig);
  }
}

TEST(Model, CorruptCheckpointIsRejected) {
  TempDir dir("model");
  S2stModel(tiny_config(), 59).save(dir / "a.ckpt");
  std::string bytes = io::read_file(dir / "a.ckpt" / "weights.bin");
  bytes.resize(bytes.size() / 2);
  io::write_file_atomic(dir / "a.ckpt" / "weights.bin", bytes);
  try {
    S2stModel::load(dir / "a.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kCorruptFile);
  }
}

TEST(PretrainStep, ZeroLearningRateLeavesParametersUnchanged) {
  S2stModel model(tiny_config(), 60);
  Rng data_rng(61);
  MelSpectrogram mel;
  mel.n_frames = 24;
  mel.n_mels = 8;
  const Tensor t = random_mel(24, 8, data_rng);
  mel.frames.assign(t.data().begin(), t.data().end());
  const TensorMap before = model.params().snapshot();
  PretrainConfig cfg;
  cfg.mask_prob = 0.3;
  cfg.span_len = 2;
  cfg.n_negatives = 3;
  Adam opt(model.params());
  Rng rng(62);
  const MelSpectrogram* batch[] = {&mel};
  const double loss = pretrain_step(model, batch, cfg, opt, 0.0, rng);
  EXPECT_TRUE(std::isfinite(loss));
  for (const auto& [name, t0] : before) {
    const Tensor now = model.params().get(name);
    for (std::size_t i = 0; i < t0.size(); ++i) ASSERT_EQ(now.data()[i], t0.data()[i]) << name;
  }
}

}  // namespace
}  // namespace s2st
