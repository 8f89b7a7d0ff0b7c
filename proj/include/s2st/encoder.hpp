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

// Conformer speech encoder and its masked contrastive pretraining objective.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2st/attention.hpp"
#include "s2st/frontend.hpp"
#include "s2st/nn.hpp"

namespace s2st {

struct ConformerConfig {
  std::size_t n_mels = 80;
  std::size_t n_layers = 4;
  std::size_t d_model = 144;
  std::size_t n_heads = 4;
  std::size_t conv_kernel_size = 15;
  std::size_t ffn_expansion = 4;
  double dropout = 0.1;
  std::size_t subsample_factor = 4;  // two stride-2 stem convolutions
  std::size_t max_relative_distance = 16;

  void validate() const;
};

void to_json(nlohmann::json& j, const ConformerConfig& c);
void from_json(const nlohmann::json& j, ConformerConfig& c);

// Output length of the stem: ceil(T / 4).
std::size_t encoder_output_length(std::size_t n_frames);

class ConformerEncoder {
 public:
  struct Block {
    FeedForward ff1;
    LayerNorm attn_norm;
    RelSelfAttention attn;
    LayerNorm conv_norm;
    Linear pointwise_in;     // d -> 2d, followed by GLU
    Tensor depthwise;        // [kernel, d]
    Tensor depthwise_bias;   // [d]
    LayerNorm depthwise_norm;
    Linear pointwise_out;    // d -> d
    FeedForward ff2;
    LayerNorm final_norm;
  };

  ConformerEncoder() = default;
  // Registers parameters under "<prefix>.*".
  ConformerEncoder(ParamStore& ps, const std::string& prefix, const ConformerConfig& cfg,
                   Rng& rng);

  const ConformerConfig& config() const { return cfg_; }
  std::vector<Block>& blocks() { return blocks_; }

  // mel [T, n_mels] -> [ceil(T/4), d_model]; kTooShort when T < 4.
  Tensor stem(const Tensor& mel, const ForwardContext& ctx) const;
  Tensor block(const Block& b, const Tensor& x, const ForwardContext& ctx) const;
  Tensor run_blocks(const Tensor& x, const ForwardContext& ctx) const;
  Tensor encode(const Tensor& mel, const ForwardContext& ctx) const;
  Tensor encode(const MelSpectrogram& m, const ForwardContext& ctx) const;

 private:
  ConformerConfig cfg_;
  Tensor stem1_w, stem1_b, stem2_w, stem2_b;
  std::vector<Block> blocks_;
};

Tensor mel_tensor(const MelSpectrogram& m);

struct MaskSpec {
  double mask_prob = 0.065;
  std::size_t span_len = 10;
  std::vector<std::size_t> masked;  // sorted, unique positions
};

struct MaskedInput {
  Tensor x;
  MaskSpec spec;
};

// Each position starts a span of span_len frames with probability mask_prob;
// spans merge. A draw with nothing masked is redrawn once, then one random
// span is forced. Masked rows become `mask_embedding`.
MaskedInput apply_span_mask(const Tensor& x, const Tensor& mask_embedding,
                            double mask_prob, std::size_t span_len, Rng& rng);
MaskSpec draw_span_mask(std::size_t length, double mask_prob, std::size_t span_len,
                        Rng& rng);

// For each masked position, n_negatives distractor positions drawn uniformly
// (with replacement) from the other masked positions, or from all other
// positions when fewer than n_negatives + 1 are masked.
std::vector<std::vector<std::size_t>> sample_negatives(const MaskSpec& spec,
                                                       std::size_t length,
                                                       std::size_t n_negatives, Rng& rng);

// Mean InfoNCE over masked positions with cosine similarity / temperature.
Tensor info_nce(const Tensor& context, const Tensor& targets,
                const std::vector<std::size_t>& masked,
                const std::vector<std::vector<std::size_t>>& negatives, double temperature);

Tensor contrastive_loss(const Tensor& context, const Tensor& targets, const MaskSpec& spec,
                        std::size_t n_negatives, double temperature, Rng& rng);

}  // namespace s2st
