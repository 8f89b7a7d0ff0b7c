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

// The full translation network: conformer encoder -> length adapter ->
// relative-position unit decoder, sharing one parameter store.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "json.hpp"
#include "s2st/decoder.hpp"
#include "s2st/encoder.hpp"

namespace s2st {

struct ModelConfig {
  ConformerConfig encoder;
  AdapterConfig adapter;
  DecoderConfig decoder;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

enum class ParamGroup { kEncoder, kDecoder };

// "encoder.*" and "mask_embedding" train at the encoder rate; everything
// else (adapter, decoder) at the decoder rate.
ParamGroup param_group(const std::string& name);

class S2stModel {
 public:
  S2stModel(const ModelConfig& cfg, std::uint64_t seed);
  S2stModel(const S2stModel&) = delete;
  S2stModel& operator=(const S2stModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  ConformerEncoder& encoder() { return encoder_; }
  const ConformerEncoder& encoder() const { return encoder_; }
  const Linear& pretrain_head() const { return pretrain_head_; }
  const Tensor& mask_embedding() const { return mask_embedding_; }
  LengthAdapter& adapter() { return adapter_; }
  const LengthAdapter& adapter() const { return adapter_; }
  const UnitDecoder& decoder() const { return decoder_; }

  // Encoder followed by the length adapter: the decoder's memory.
  Tensor memory(const Tensor& mel, const ForwardContext& ctx) const;
  Tensor memory(const MelSpectrogram& m, const ForwardContext& ctx) const;

  std::string codebook_hash;  // hex; ties the model to the units it predicts

  // Full model in the shared checkpoint format (meta: config + codebook hash).
  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<S2stModel> load(const std::filesystem::path& dir);

  // Encoder-only checkpoint: encoder.* and mask_embedding.
  void save_encoder(const std::filesystem::path& dir) const;
  // Copies encoder weights from an encoder or full checkpoint; configs must match.
  void load_encoder(const std::filesystem::path& dir);

 private:
  ModelConfig cfg_;
  ParamStore params_;
  ConformerEncoder encoder_;
  Linear pretrain_head_;
  Tensor mask_embedding_;
  LengthAdapter adapter_;
  UnitDecoder decoder_;
};

}  // namespace s2st
