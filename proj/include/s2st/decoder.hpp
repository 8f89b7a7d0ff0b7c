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

// Length adapter and the causal unit decoder.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "s2st/attention.hpp"
#include "s2st/nn.hpp"
#include "s2st/quantizer.hpp"

namespace s2st {

struct AdapterConfig {
  std::size_t n_layers = 1;
  std::size_t stride = 2;
  std::size_t kernel = 3;  // odd; padding (kernel - 1) / 2

  std::size_t downsample() const;
};

void to_json(nlohmann::json& j, const AdapterConfig& c);
void from_json(const nlohmann::json& j, AdapterConfig& c);

// Output length ceil(T / stride^n_layers).
std::size_t adapter_output_length(std::size_t frames, const AdapterConfig& cfg);

// Stack of strided convolutions, each d -> 2d followed by GLU.
class LengthAdapter {
 public:
  LengthAdapter() = default;
  LengthAdapter(ParamStore& ps, const std::string& prefix, std::size_t d,
                const AdapterConfig& cfg, Rng& rng);

  const AdapterConfig& config() const { return cfg_; }
  // Sets every layer to pass its input through: centre tap = identity on the
  // value half, gate bias = +gate.
  void init_identity(double gate = 10.0);
  Tensor operator()(const Tensor& x) const;

 private:
  AdapterConfig cfg_;
  std::size_t d_ = 0;
  std::vector<Tensor> weights_;  // [kernel, d, 2d]
  std::vector<Tensor> biases_;   // [2d]
};

struct DecoderConfig {
  std::size_t n_layers = 4;
  std::size_t d_model = 144;
  std::size_t n_heads = 4;
  std::size_t ffn_expansion = 4;
  double dropout = 0.1;
  std::size_t n_units = 100;  // K; specials follow
  std::size_t max_target_len = 512;
  std::size_t max_relative_distance = 16;

  std::size_t vocab_size() const { return n_units + 3; }
  std::size_t bos() const { return n_units; }
  std::size_t eos() const { return n_units + 1; }
  std::size_t pad() const { return n_units + 2; }
  bool is_special(std::size_t id) const { return id >= n_units; }
};

void to_json(nlohmann::json& j, const DecoderConfig& c);
void from_json(const nlohmann::json& j, DecoderConfig& c);

class UnitDecoder {
 public:
  struct Layer {
    LayerNorm self_norm;
    RelSelfAttention self_attn;
    LayerNorm cross_norm;
    CrossAttention cross_attn;
    FeedForward ffn;
  };

  UnitDecoder() = default;
  UnitDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg, Rng& rng);

  const DecoderConfig& config() const { return cfg_; }

  // tokens: decoder inputs starting with BOS. Returns logits [len, vocab].
  Tensor forward(const Tensor& memory, std::span<const std::size_t> tokens,
                 const ForwardContext& ctx) const;

  // Next-token logits [vocab] after `prefix` (must start with BOS).
  std::vector<double> decode_step(const Tensor& memory,
                                  std::span<const std::size_t> prefix) const;

  struct LossParts {
    Tensor sum;            // summed smoothed CE over target positions
    std::size_t count = 0; // number of positions (units + EOS)
  };
  // Teacher forcing on [BOS] + units -> units + [EOS].
  LossParts teacher_forced(const Tensor& memory, const UnitSequence& target,
                           double label_smoothing, const ForwardContext& ctx) const;
  // Mean over positions of a single target.
  Tensor teacher_forced_loss(const Tensor& memory, const UnitSequence& target,
                             double label_smoothing, const ForwardContext& ctx) const;

  // Argmax accuracy over teacher-forced positions: {correct, total}.
  std::pair<std::size_t, std::size_t> teacher_forced_accuracy(
      const Tensor& memory, const UnitSequence& target) const;

 private:
  DecoderConfig cfg_;
  Tensor embedding_;  // [vocab, d]
  std::vector<Layer> layers_;
  LayerNorm final_norm_;
  Linear output_;
};

}  // namespace s2st
