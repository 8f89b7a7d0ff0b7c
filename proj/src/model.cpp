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

#include "s2st/model.hpp"

namespace s2st {

using nlohmann::json;

void to_json(json& j, const ModelConfig& c) {
  j = {{"encoder", c.encoder}, {"adapter", c.adapter}, {"decoder", c.decoder}};
}

void from_json(const json& j, ModelConfig& c) {
  c.encoder = j.at("encoder").get<ConformerConfig>();
  c.adapter = j.at("adapter").get<AdapterConfig>();
  c.decoder = j.at("decoder").get<DecoderConfig>();
}

ParamGroup param_group(const std::string& name) {
  return name.starts_with("encoder.") || name == "mask_embedding" ? ParamGroup::kEncoder
                                                                   : ParamGroup::kDecoder;
}

S2stModel::S2stModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.encoder.d_model != cfg.decoder.d_model) {
    throw Error(Errc::kConfig, "encoder and decoder d_model must agree");
  }
  Rng rng(seed);
  const std::size_t d = cfg.encoder.d_model;
  encoder_ = ConformerEncoder(params_, "encoder", cfg.encoder, rng);
  pretrain_head_ = Linear::create(params_, "encoder.pretrain_head", d, d, rng);
  std::vector<double> mask(d);
  for (auto& v : mask) v = uniform01(rng);
  mask_embedding_ = params_.add("mask_embedding", Tensor::from({d}, std::move(mask)));
  adapter_ = LengthAdapter(params_, "adapter", d, cfg.adapter, rng);
  decoder_ = UnitDecoder(params_, "decoder", cfg.decoder, rng);
}

Tensor S2stModel::memory(const Tensor& mel, const ForwardContext& ctx) const {
  return adapter_(encoder_.encode(mel, ctx));
}

Tensor S2stModel::memory(const MelSpectrogram& m, const ForwardContext& ctx) const {
  return adapter_(encoder_.encode(m, ctx));
}

void S2stModel::save(const std::filesystem::path& dir) const {
  json meta;
  meta["kind"] = "s2st_model";
  meta["model"] = cfg_;
  meta["codebook_hash"] = codebook_hash;
  save_checkpoint(dir, params_.tensors(), meta);
}

std::unique_ptr<S2stModel> S2stModel::load(const std::filesystem::path& dir) {
  Checkpoint ckpt = load_checkpoint(dir);
  if (ckpt.meta.value("kind", "") != "s2st_model") {
    throw Error(Errc::kUnsupportedFormat, dir.string() + " is not a model checkpoint");
  }
  auto model = std::make_unique<S2stModel>(ckpt.meta.at("model").get<ModelConfig>(), 0);
  const std::size_t copied = model->params_.load(ckpt.tensors);
  if (copied != model->params_.tensors().size()) {
    throw Error(Errc::kCorruptFile, "checkpoint " + dir.string() + " is missing parameters");
  }
  model->codebook_hash = ckpt.meta.value("codebook_hash", "");
  return model;
}

void S2stModel::save_encoder(const std::filesystem::path& dir) const {
  TensorMap tensors;
  for (const auto& [name, t] : params_.tensors()) {
    if (param_group(name) == ParamGroup::kEncoder) tensors.emplace(name, t);
  }
  json meta;
  meta["kind"] = "s2st_encoder";
  meta["encoder"] = cfg_.encoder;
  save_checkpoint(dir, tensors, meta);
}

void S2stModel::load_encoder(const std::filesystem::path& dir) {
  Checkpoint ckpt = load_checkpoint(dir);
  json enc_cfg;
  if (ckpt.meta.contains("encoder")) {
    enc_cfg = ckpt.meta["encoder"];
  } else if (ckpt.meta.contains("model")) {
    enc_cfg = ckpt.meta["model"]["encoder"];
  } else {
    throw Error(Errc::kUnsupportedFormat, dir.string() + " has no encoder config");
  }
  if (enc_cfg != json(cfg_.encoder)) {
    throw Error(Errc::kConfig, "encoder checkpoint config differs from the model's");
  }
  TensorMap subset;
  for (const auto& [name, t] : ckpt.tensors) {
    if (param_group(name) == ParamGroup::kEncoder) subset.emplace(name, t);
  }
  params_.load(subset);
}

}  // namespace s2st
