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

#include "s2st/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace s2st {

void ConformerConfig::validate() const {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw Error(Errc::kConfig, "encoder d_model must be divisible by n_heads");
  }
  if (conv_kernel_size % 2 == 0) throw Error(Errc::kConfig, "conv_kernel_size must be odd");
  if (subsample_factor != 4) throw Error(Errc::kConfig, "encoder stem subsamples by 4");
  if (dropout < 0.0 || dropout >= 1.0) throw Error(Errc::kConfig, "dropout in [0, 1)");
}

void to_json(nlohmann::json& j, const ConformerConfig& c) {
  j = {{"n_mels", c.n_mels},
       {"n_layers", c.n_layers},
       {"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"conv_kernel_size", c.conv_kernel_size},
       {"ffn_expansion", c.ffn_expansion},
       {"dropout", c.dropout},
       {"subsample_factor", c.subsample_factor},
       {"max_relative_distance", c.max_relative_distance}};
}

void from_json(const nlohmann::json& j, ConformerConfig& c) {
  c.n_mels = j.at("n_mels");
  c.n_layers = j.at("n_layers");
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.conv_kernel_size = j.at("conv_kernel_size");
  c.ffn_expansion = j.at("ffn_expansion");
  c.dropout = j.at("dropout");
  c.subsample_factor = j.at("subsample_factor");
  c.max_relative_distance = j.at("max_relative_distance");
}

std::size_t encoder_output_length(std::size_t n_frames) { return (n_frames + 3) / 4; }

ConformerEncoder::ConformerEncoder(ParamStore& ps, const std::string& prefix,
                                   const ConformerConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  stem1_w = ps.add(prefix + ".stem.conv1.weight",
                   xavier_uniform({3, cfg.n_mels, d}, 3 * cfg.n_mels, 3 * d, rng));
  stem1_b = ps.add(prefix + ".stem.conv1.bias", Tensor::zeros({d}));
  stem2_w = ps.add(prefix + ".stem.conv2.weight", xavier_uniform({3, d, d}, 3 * d, 3 * d, rng));
  stem2_b = ps.add(prefix + ".stem.conv2.bias", Tensor::zeros({d}));
  const RelPosAttentionConfig acfg{cfg.n_heads, d, cfg.max_relative_distance};
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = prefix + ".layers." + std::to_string(i);
    Block b;
    b.ff1 = FeedForward::create(ps, p + ".ff1", d, cfg.ffn_expansion, rng);
    b.attn_norm = LayerNorm::create(ps, p + ".attn_norm", d);
    b.attn = RelSelfAttention::create(ps, p + ".attn", acfg, rng);
    b.conv_norm = LayerNorm::create(ps, p + ".conv.norm", d);
    b.pointwise_in = Linear::create(ps, p + ".conv.pointwise_in", d, 2 * d, rng);
    const std::size_t w = cfg.conv_kernel_size;
    b.depthwise = ps.add(p + ".conv.depthwise.weight", xavier_uniform({w, d}, w, w, rng));
    b.depthwise_bias = ps.add(p + ".conv.depthwise.bias", Tensor::zeros({d}));
    b.depthwise_norm = LayerNorm::create(ps, p + ".conv.depthwise_norm", d);
    b.pointwise_out = Linear::create(ps, p + ".conv.pointwise_out", d, d, rng);
    b.ff2 = FeedForward::create(ps, p + ".ff2", d, cfg.ffn_expansion, rng);
    b.final_norm = LayerNorm::create(ps, p + ".final_norm", d);
    blocks_.push_back(std::move(b));
  }
}

Tensor ConformerEncoder::stem(const Tensor& mel, const ForwardContext& ctx) const {
  if (mel.rank() != 2 || mel.dim(1) != cfg_.n_mels) {
    throw Error(Errc::kShapeMismatch, "encoder expects [T, " + std::to_string(cfg_.n_mels) +
                                          "], got " + shape_str(mel.shape()));
  }
  if (mel.dim(0) < cfg_.subsample_factor) {
    throw Error(Errc::kTooShort, std::to_string(mel.dim(0)) + " frames; the stem needs " +
                                     std::to_string(cfg_.subsample_factor));
  }
  Tensor h = silu(add_bias(conv1d(mel, stem1_w, 2, 1), stem1_b));
  h = silu(add_bias(conv1d(h, stem2_w, 2, 1), stem2_b));
  return ctx.drop(h);
}

Tensor ConformerEncoder::block(const Block& b, const Tensor& x,
                               const ForwardContext& ctx) const {
  Tensor h = add(x, scale(b.ff1(x, ctx), 0.5));
  h = add(h, ctx.drop(b.attn(b.attn_norm(h), false)));
  Tensor c = glu(b.pointwise_in(b.conv_norm(h)));
  c = add_bias(depthwise_conv1d(c, b.depthwise), b.depthwise_bias);
  c = silu(b.depthwise_norm(c));
  h = add(h, ctx.drop(b.pointwise_out(c)));
  h = add(h, scale(b.ff2(h, ctx), 0.5));
  return b.final_norm(h);
}

Tensor ConformerEncoder::run_blocks(const Tensor& x, const ForwardContext& ctx) const {
  Tensor h = x;
  for (const auto& b : blocks_) h = block(b, h, ctx);
  return h;
}

Tensor ConformerEncoder::encode(const Tensor& mel, const ForwardContext& ctx) const {
  return run_blocks(stem(mel, ctx), ctx);
}

Tensor ConformerEncoder::encode(const MelSpectrogram& m, const ForwardContext& ctx) const {
  if (m.empty()) throw Error(Errc::kTooShort, "empty spectrogram");
  return encode(mel_tensor(m), ctx);
}

Tensor mel_tensor(const MelSpectrogram& m) {
  return Tensor::from({m.n_frames, m.n_mels}, m.frames);
}

MaskSpec draw_span_mask(std::size_t length, double mask_prob, std::size_t span_len,
                        Rng& rng) {
  if (mask_prob <= 0.0 || mask_prob > 1.0 || span_len < 1) {
    throw Error(Errc::kConfig, "mask needs 0 < p <= 1 and span length >= 1");
  }
  MaskSpec spec;
  spec.mask_prob = mask_prob;
  spec.span_len = span_len;
  if (length == 0) return spec;
  std::vector<bool> hit(length, false);
  for (int attempt = 0; attempt < 2; ++attempt) {
    for (std::size_t t = 0; t < length; ++t) {
      if (!bernoulli(rng, mask_prob)) continue;
      for (std::size_t j = t; j < std::min(length, t + span_len); ++j) hit[j] = true;
    }
    if (std::find(hit.begin(), hit.end(), true) != hit.end()) break;
  }
  if (std::find(hit.begin(), hit.end(), true) == hit.end()) {
    const std::size_t last_start = length > span_len ? length - span_len : 0;
    const std::size_t start = uniform_index(rng, last_start + 1);
    for (std::size_t j = start; j < std::min(length, start + span_len); ++j) hit[j] = true;
  }
  for (std::size_t t = 0; t < length; ++t) {
    if (hit[t]) spec.masked.push_back(t);
  }
  return spec;
}

MaskedInput apply_span_mask(const Tensor& x, const Tensor& mask_embedding,
                            double mask_prob, std::size_t span_len, Rng& rng) {
  MaskedInput out;
  out.spec = draw_span_mask(x.dim(0), mask_prob, span_len, rng);
  std::vector<bool> mask(x.dim(0), false);
  for (auto t : out.spec.masked) mask[t] = true;
  out.x = replace_rows(x, mask, mask_embedding);
  return out;
}

std::vector<std::vector<std::size_t>> sample_negatives(const MaskSpec& spec,
                                                       std::size_t length,
                                                       std::size_t n_negatives, Rng& rng) {
  if (spec.masked.empty()) throw Error(Errc::kNoMaskedPositions, "nothing masked");
  if (n_negatives < 1) throw Error(Errc::kConfig, "need at least one negative");
  if (length < 2) throw Error(Errc::kTooShort, "negatives need at least two positions");
  std::vector<std::size_t> pool;
  if (spec.masked.size() >= n_negatives + 1) {
    pool = spec.masked;
  } else {
    pool.resize(length);
    for (std::size_t t = 0; t < length; ++t) pool[t] = t;
  }
  std::vector<std::vector<std::size_t>> negs(spec.masked.size());
  for (std::size_t i = 0; i < spec.masked.size(); ++i) {
    const std::size_t t = spec.masked[i];
    // Uniform over pool \ {t}: draw from pool.size() - 1 slots, skip t.
    const auto self = std::find(pool.begin(), pool.end(), t);
    const std::size_t self_idx = static_cast<std::size_t>(self - pool.begin());
    for (std::size_t n = 0; n < n_negatives; ++n) {
      std::size_t j = uniform_index(rng, pool.size() - 1);
      if (self != pool.end() && j >= self_idx) ++j;
      negs[i].push_back(pool[j]);
    }
  }
  return negs;
}

Tensor info_nce(const Tensor& context, const Tensor& targets,
                const std::vector<std::size_t>& masked,
                const std::vector<std::vector<std::size_t>>& negatives, double temperature) {
  if (masked.empty()) throw Error(Errc::kNoMaskedPositions, "no masked positions");
  if (context.shape() != targets.shape()) {
    throw Error(Errc::kShapeMismatch, "context and targets differ in shape");
  }
  if (negatives.size() != masked.size()) {
    throw Error(Errc::kShapeMismatch, "one negative set per masked position");
  }
  const Tensor c = l2_normalize_rows(gather_rows(context, masked));
  const Tensor q = l2_normalize_rows(targets);
  const Tensor sims = scale(matmul(c, transpose(q)), 1.0 / temperature);
  std::vector<std::vector<std::size_t>> cols(masked.size());
  for (std::size_t i = 0; i < masked.size(); ++i) {
    cols[i].push_back(masked[i]);
    cols[i].insert(cols[i].end(), negatives[i].begin(), negatives[i].end());
  }
  const std::vector<std::size_t> positive(masked.size(), 0);
  return cross_entropy(gather_cols_per_row(sims, cols), positive, 0.0);
}

Tensor contrastive_loss(const Tensor& context, const Tensor& targets, const MaskSpec& spec,
                        std::size_t n_negatives, double temperature, Rng& rng) {
  if (spec.masked.empty()) throw Error(Errc::kNoMaskedPositions, "nothing masked");
  const auto negs = sample_negatives(spec, context.dim(0), n_negatives, rng);
  return info_nce(context, targets, spec.masked, negs, temperature);
}

}  // namespace s2st
