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

#include "s2st/decoder.hpp"

#include <algorithm>

namespace s2st {

std::size_t AdapterConfig::downsample() const {
  std::size_t f = 1;
  for (std::size_t i = 0; i < n_layers; ++i) f *= stride;
  return f;
}

void to_json(nlohmann::json& j, const AdapterConfig& c) {
  j = {{"n_layers", c.n_layers}, {"stride", c.stride}, {"kernel", c.kernel}};
}

void from_json(const nlohmann::json& j, AdapterConfig& c) {
  c.n_layers = j.at("n_layers");
  c.stride = j.at("stride");
  c.kernel = j.at("kernel");
}

std::size_t adapter_output_length(std::size_t frames, const AdapterConfig& cfg) {
  std::size_t t = frames;
  for (std::size_t i = 0; i < cfg.n_layers; ++i) t = (t + cfg.stride - 1) / cfg.stride;
  return t;
}

LengthAdapter::LengthAdapter(ParamStore& ps, const std::string& prefix, std::size_t d,
                             const AdapterConfig& cfg, Rng& rng)
    : cfg_(cfg), d_(d) {
  if (cfg.kernel % 2 == 0 || cfg.stride == 0) {
    throw Error(Errc::kConfig, "adapter kernel must be odd and stride >= 1");
  }
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = prefix + ".conv" + std::to_string(i);
    weights_.push_back(ps.add(p + ".weight", xavier_uniform({cfg.kernel, d, 2 * d},
                                                            cfg.kernel * d, cfg.kernel * 2 * d,
                                                            rng)));
    biases_.push_back(ps.add(p + ".bias", Tensor::zeros({2 * d})));
  }
}

void LengthAdapter::init_identity(double gate) {
  const std::size_t centre = (cfg_.kernel - 1) / 2;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    auto w = weights_[l].mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t c = 0; c < d_; ++c) w[(centre * d_ + c) * 2 * d_ + c] = 1.0;
    auto b = biases_[l].mutable_data();
    for (std::size_t c = 0; c < d_; ++c) {
      b[c] = 0.0;
      b[d_ + c] = gate;
    }
  }
}

Tensor LengthAdapter::operator()(const Tensor& x) const {
  if (x.dim(0) < cfg_.downsample()) {
    throw Error(Errc::kTooShort, std::to_string(x.dim(0)) + " frames for downsample " +
                                     std::to_string(cfg_.downsample()));
  }
  Tensor h = x;
  const std::size_t pad = (cfg_.kernel - 1) / 2;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    h = glu(add_bias(conv1d(h, weights_[l], cfg_.stride, pad), biases_[l]));
  }
  return h;
}

void to_json(nlohmann::json& j, const DecoderConfig& c) {
  j = {{"n_layers", c.n_layers},
       {"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"ffn_expansion", c.ffn_expansion},
       {"dropout", c.dropout},
       {"n_units", c.n_units},
       {"max_target_len", c.max_target_len},
       {"max_relative_distance", c.max_relative_distance}};
}

void from_json(const nlohmann::json& j, DecoderConfig& c) {
  c.n_layers = j.at("n_layers");
  c.d_model = j.at("d_model");
  c.n_heads = j.at("n_heads");
  c.ffn_expansion = j.at("ffn_expansion");
  c.dropout = j.at("dropout");
  c.n_units = j.at("n_units");
  c.max_target_len = j.at("max_target_len");
  c.max_relative_distance = j.at("max_relative_distance");
}

UnitDecoder::UnitDecoder(ParamStore& ps, const std::string& prefix, const DecoderConfig& cfg,
                         Rng& rng)
    : cfg_(cfg) {
  if (cfg.n_heads == 0 || cfg.d_model % cfg.n_heads != 0) {
    throw Error(Errc::kConfig, "decoder d_model must be divisible by n_heads");
  }
  const std::size_t d = cfg.d_model, v = cfg.vocab_size();
  embedding_ = ps.add(prefix + ".embedding", xavier_uniform({v, d}, v, d, rng));
  const RelPosAttentionConfig acfg{cfg.n_heads, d, cfg.max_relative_distance};
  for (std::size_t i = 0; i < cfg.n_layers; ++i) {
    const std::string p = prefix + ".layers." + std::to_string(i);
    Layer l;
    l.self_norm = LayerNorm::create(ps, p + ".self_norm", d);
    l.self_attn = RelSelfAttention::create(ps, p + ".self_attn", acfg, rng);
    l.cross_norm = LayerNorm::create(ps, p + ".cross_norm", d);
    l.cross_attn = CrossAttention::create(ps, p + ".cross_attn", d, cfg.n_heads, rng);
    l.ffn = FeedForward::create(ps, p + ".ffn", d, cfg.ffn_expansion, rng);
    layers_.push_back(std::move(l));
  }
  final_norm_ = LayerNorm::create(ps, prefix + ".final_norm", d);
  output_ = Linear::create(ps, prefix + ".output", d, v, rng);
}

Tensor UnitDecoder::forward(const Tensor& memory, std::span<const std::size_t> tokens,
                            const ForwardContext& ctx) const {
  if (tokens.empty() || tokens.front() != cfg_.bos()) {
    throw Error(Errc::kEmptyTarget, "decoder input must start with BOS");
  }
  if (tokens.size() > cfg_.max_target_len) {
    throw Error(Errc::kPrefixTooLong, std::to_string(tokens.size()) + " tokens > max " +
                                          std::to_string(cfg_.max_target_len));
  }
  Tensor h = ctx.drop(gather_rows(embedding_, tokens));
  for (const auto& l : layers_) {
    h = add(h, ctx.drop(l.self_attn(l.self_norm(h), true)));
    h = add(h, ctx.drop(l.cross_attn(l.cross_norm(h), memory)));
    h = add(h, l.ffn(h, ctx));
  }
  return output_(final_norm_(h));
}

std::vector<double> UnitDecoder::decode_step(const Tensor& memory,
                                             std::span<const std::size_t> prefix) const {
  if (prefix.size() > cfg_.max_target_len) {
    throw Error(Errc::kPrefixTooLong, "prefix of " + std::to_string(prefix.size()) +
                                          " exceeds max_target_len");
  }
  NoGradGuard guard;
  const Tensor logits = forward(memory, prefix, ForwardContext{});
  const std::size_t v = cfg_.vocab_size(), last = prefix.size() - 1;
  return {logits.data().begin() + static_cast<std::ptrdiff_t>(last * v),
          logits.data().begin() + static_cast<std::ptrdiff_t>((last + 1) * v)};
}

UnitDecoder::LossParts UnitDecoder::teacher_forced(const Tensor& memory,
                                                   const UnitSequence& target,
                                                   double label_smoothing,
                                                   const ForwardContext& ctx) const {
  if (target.units.empty()) throw Error(Errc::kEmptyTarget, "target has no units");
  std::vector<std::size_t> inputs{cfg_.bos()};
  inputs.insert(inputs.end(), target.units.begin(), target.units.end());
  std::vector<std::size_t> labels(target.units.begin(), target.units.end());
  labels.push_back(cfg_.eos());
  for (auto u : target.units) {
    if (u >= cfg_.n_units) {
      throw Error(Errc::kIndexOutOfVocab, "target unit " + std::to_string(u));
    }
  }
  const Tensor logits = forward(memory, inputs, ctx);
  return {cross_entropy(logits, labels, label_smoothing, Reduction::kSum), labels.size()};
}

Tensor UnitDecoder::teacher_forced_loss(const Tensor& memory, const UnitSequence& target,
                                        double label_smoothing,
                                        const ForwardContext& ctx) const {
  auto parts = teacher_forced(memory, target, label_smoothing, ctx);
  return scale(parts.sum, 1.0 / static_cast<double>(parts.count));
}

std::pair<std::size_t, std::size_t> UnitDecoder::teacher_forced_accuracy(
    const Tensor& memory, const UnitSequence& target) const {
  NoGradGuard guard;
  std::vector<std::size_t> inputs{cfg_.bos()};
  inputs.insert(inputs.end(), target.units.begin(), target.units.end());
  std::vector<std::size_t> labels(target.units.begin(), target.units.end());
  labels.push_back(cfg_.eos());
  const Tensor logits = forward(memory, inputs, ForwardContext{});
  const std::size_t v = cfg_.vocab_size();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = logits.data().subspan(i * v, v);
    const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) -
                                              row.begin());
    if (arg == labels[i]) ++correct;
  }
  return {correct, labels.size()};
}

}  // namespace s2st
