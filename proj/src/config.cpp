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

#include "s2st/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <set>
#include <sstream>

#include "s2st/io.hpp"

namespace s2st {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, std::set<std::string>>& schema() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"run", {"seed"}},
      {"data", {"manifest", "dev_manifest", "dev_split", "work_dir"}},
      {"quantizer", {"k", "max_iters", "tolerance", "codebook"}},
      {"encoder",
       {"n_mels", "n_layers", "d_model", "n_heads", "conv_kernel_size", "ffn_expansion",
        "dropout", "max_relative_distance"}},
      {"adapter", {"n_layers", "stride", "kernel"}},
      {"decoder",
       {"n_layers", "d_model", "n_heads", "ffn_expansion", "dropout", "max_target_len",
        "max_relative_distance"}},
      {"pretrain",
       {"steps", "batch_size", "lr", "warmup_steps", "mask_prob", "span_len", "n_negatives",
        "temperature", "clip_norm", "stop_target_grad", "out"}},
      {"train",
       {"epochs", "max_frames", "lr_decoder", "lr_encoder", "warmup_steps", "clip_norm",
        "label_smoothing", "init_encoder", "out"}},
      {"augment",
       {"max_time_shift_frames", "freq_mask_width", "n_freq_masks", "time_mask_width",
        "n_time_masks"}},
      {"decode", {"strategy", "beam_size", "length_penalty", "max_len"}},
      {"synthesis",
       {"repeat_factor", "griffin_lim_iters", "ridge", "nonneg_iters", "vocoder",
        "vocoder_command"}},
      {"eval", {"manifest", "model", "report", "transcriber", "transcriber_command",
                "oracle_manifest"}},
      {"forge",
       {"translation_provider", "translation_endpoint", "translation_api_key_env",
        "translation_prompt", "tts_provider", "tts_endpoint", "tts_api_key_env", "parallelism",
        "max_attempts", "backoff_ms", "max_failure_fraction", "src_lang", "tgt_lang",
        "id_prefix", "min_duration_s", "max_duration_s", "max_text_ratio",
        "reject_empty_translation"}},
  };
  return keys;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const std::string& want) {
  throw Error(Errc::kConfig, "config key " + key + ": '" + value + "' is not " + want);
}

}  // namespace

bool is_known_config_key(const std::string& key) {
  const auto dot = key.find('.');
  if (dot == std::string::npos) return false;
  auto it = schema().find(key.substr(0, dot));
  return it != schema().end() && it->second.count(key.substr(dot + 1)) > 0;
}

Config Config::parse(const std::string& text, const fs::path& base_dir) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(Errc::kConfig, "config line " + std::to_string(e.line()) + ": " + e.message());
  }
  Config c;
  c.base_dir_ = base_dir.empty() ? fs::path(".") : base_dir;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw Error(Errc::kConfig, "config key '" + section + "' is outside a section");
    }
    for (const auto& [name, value] : body) c.set(section + "." + name, value.data());
  }
  return c;
}

Config Config::load(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::kConfig, "config file not found: " + path.string());
  return parse(io::read_file(path), path.parent_path());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!is_known_config_key(key)) throw Error(Errc::kConfig, "unknown config key '" + key + "'");
  values_[key] = value;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used == it->second.size()) return v;
  } catch (const std::exception&) {
  }
  bad_value(key, it->second, "a number");
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    if (!it->second.empty() && it->second[0] != '-') {
      const auto v = std::stoull(it->second, &used);
      if (used == it->second.size()) return v;
    }
  } catch (const std::exception&) {
  }
  bad_value(key, it->second, "a non-negative integer");
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  bad_value(key, it->second, "true or false");
}

std::optional<fs::path> Config::get_path(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) return std::nullopt;
  fs::path p(it->second);
  if (p.is_relative()) p = base_dir_ / p;
  return p.lexically_normal();
}

fs::path Config::require_path(const std::string& key) const {
  auto p = get_path(key);
  if (!p) throw Error(Errc::kConfig, "config key " + key + " is required");
  return *p;
}

fs::path Config::work_dir() const {
  return get_path("data.work_dir").value_or((base_dir_ / "work").lexically_normal());
}

ModelConfig model_config(const Config& c) {
  ModelConfig m;
  ConformerConfig& e = m.encoder;
  e.n_mels = c.get_size("encoder.n_mels", e.n_mels);
  e.n_layers = c.get_size("encoder.n_layers", e.n_layers);
  e.d_model = c.get_size("encoder.d_model", e.d_model);
  e.n_heads = c.get_size("encoder.n_heads", e.n_heads);
  e.conv_kernel_size = c.get_size("encoder.conv_kernel_size", e.conv_kernel_size);
  e.ffn_expansion = c.get_size("encoder.ffn_expansion", e.ffn_expansion);
  e.dropout = c.get_double("encoder.dropout", e.dropout);
  e.max_relative_distance = c.get_size("encoder.max_relative_distance", e.max_relative_distance);
  AdapterConfig& a = m.adapter;
  a.n_layers = c.get_size("adapter.n_layers", a.n_layers);
  a.stride = c.get_size("adapter.stride", a.stride);
  a.kernel = c.get_size("adapter.kernel", a.kernel);
  DecoderConfig& d = m.decoder;
  d.n_layers = c.get_size("decoder.n_layers", d.n_layers);
  d.d_model = c.get_size("decoder.d_model", e.d_model);
  d.n_heads = c.get_size("decoder.n_heads", d.n_heads);
  d.ffn_expansion = c.get_size("decoder.ffn_expansion", d.ffn_expansion);
  d.dropout = c.get_double("decoder.dropout", d.dropout);
  d.max_target_len = c.get_size("decoder.max_target_len", d.max_target_len);
  d.max_relative_distance = c.get_size("decoder.max_relative_distance", d.max_relative_distance);
  d.n_units = c.get_size("quantizer.k", d.n_units);
  return m;
}

KMeansOptions kmeans_options(const Config& c) {
  KMeansOptions o;
  o.k = c.get_size("quantizer.k", o.k);
  o.max_iters = c.get_size("quantizer.max_iters", o.max_iters);
  o.tolerance = c.get_double("quantizer.tolerance", o.tolerance);
  o.seed = c.seed();
  return o;
}

PretrainConfig pretrain_config(const Config& c) {
  PretrainConfig p;
  p.steps = c.get_size("pretrain.steps", p.steps);
  p.batch_size = c.get_size("pretrain.batch_size", p.batch_size);
  p.lr = c.get_double("pretrain.lr", p.lr);
  p.warmup_steps = c.get_size("pretrain.warmup_steps", p.warmup_steps);
  p.mask_prob = c.get_double("pretrain.mask_prob", p.mask_prob);
  p.span_len = c.get_size("pretrain.span_len", p.span_len);
  p.n_negatives = c.get_size("pretrain.n_negatives", p.n_negatives);
  p.temperature = c.get_double("pretrain.temperature", p.temperature);
  p.clip_norm = c.get_double("pretrain.clip_norm", p.clip_norm);
  p.stop_target_grad = c.get_bool("pretrain.stop_target_grad", p.stop_target_grad);
  p.seed = c.seed();
  return p;
}

AugmentPolicy augment_policy(const Config& c) {
  AugmentPolicy p;
  p.max_time_shift_frames = c.get_size("augment.max_time_shift_frames", p.max_time_shift_frames);
  p.freq_mask_width = c.get_size("augment.freq_mask_width", p.freq_mask_width);
  p.n_freq_masks = c.get_size("augment.n_freq_masks", p.n_freq_masks);
  p.time_mask_width = c.get_size("augment.time_mask_width", p.time_mask_width);
  p.n_time_masks = c.get_size("augment.n_time_masks", p.n_time_masks);
  p.seed = c.seed();
  return p;
}

TrainConfig train_config(const Config& c) {
  TrainConfig t;
  t.epochs = c.get_size("train.epochs", t.epochs);
  t.max_frames = c.get_size("train.max_frames", t.max_frames);
  t.schedule.base_lr_decoder = c.get_double("train.lr_decoder", t.schedule.base_lr_decoder);
  t.schedule.base_lr_encoder = c.get_double("train.lr_encoder", t.schedule.base_lr_encoder);
  t.schedule.warmup_steps = c.get_size("train.warmup_steps", t.schedule.warmup_steps);
  t.clip_norm = c.get_double("train.clip_norm", t.clip_norm);
  t.label_smoothing = c.get_double("train.label_smoothing", t.label_smoothing);
  t.augment = augment_policy(c);
  t.seed = c.seed();
  if (t.schedule.warmup_steps == 0) throw Error(Errc::kConfig, "train.warmup_steps must be >= 1");
  return t;
}

DecodeConfig decode_config(const Config& c) {
  DecodeConfig d;
  const std::string s = c.get_string("decode.strategy", "beam");
  if (s == "greedy") {
    d.strategy = DecodeStrategy::kGreedy;
  } else if (s == "beam") {
    d.strategy = DecodeStrategy::kBeam;
  } else {
    throw Error(Errc::kConfig, "decode.strategy must be greedy or beam, got '" + s + "'");
  }
  d.beam_size = c.get_size("decode.beam_size", d.beam_size);
  d.length_penalty = c.get_double("decode.length_penalty", d.length_penalty);
  d.max_len = c.get_size("decode.max_len", d.max_len);
  return d;
}

SynthesisConfig synthesis_config(const Config& c) {
  SynthesisConfig s;
  s.repeat_factor = c.get_size("synthesis.repeat_factor", s.repeat_factor);
  s.griffin_lim_iters = c.get_size("synthesis.griffin_lim_iters", s.griffin_lim_iters);
  s.ridge = c.get_double("synthesis.ridge", s.ridge);
  s.nonneg_iters = c.get_size("synthesis.nonneg_iters", s.nonneg_iters);
  if (s.repeat_factor == 0) throw Error(Errc::kConfig, "synthesis.repeat_factor must be >= 1");
  return s;
}

FilterPolicy filter_policy(const Config& c) {
  FilterPolicy f;
  f.min_duration_s = c.get_double("forge.min_duration_s", f.min_duration_s);
  f.max_duration_s = c.get_double("forge.max_duration_s", f.max_duration_s);
  f.max_text_ratio = c.get_double("forge.max_text_ratio", f.max_text_ratio);
  f.reject_empty_translation =
      c.get_bool("forge.reject_empty_translation", f.reject_empty_translation);
  return f;
}

StageOptions stage_options(const Config& c) {
  StageOptions o;
  o.parallelism = c.get_size("forge.parallelism", o.parallelism);
  o.max_attempts = c.get_size("forge.max_attempts", o.max_attempts);
  o.backoff = std::chrono::milliseconds(c.get_u64("forge.backoff_ms", o.backoff.count()));
  o.max_failure_fraction = c.get_double("forge.max_failure_fraction", o.max_failure_fraction);
  o.src_lang = c.get_string("forge.src_lang", o.src_lang);
  o.tgt_lang = c.get_string("forge.tgt_lang", o.tgt_lang);
  o.id_prefix = c.get_string("forge.id_prefix", o.id_prefix);
  return o;
}

HttpProviderConfig http_provider_config(const Config& c, const std::string& which) {
  HttpProviderConfig h;
  h.endpoint = c.get_string("forge." + which + "_endpoint");
  if (h.endpoint.empty()) {
    throw Error(Errc::kConfig, "config key forge." + which + "_endpoint is required");
  }
  h.api_key_env = c.get_string("forge." + which + "_api_key_env");
  if (which == "translation") h.prompt = c.get_string("forge.translation_prompt", h.prompt);
  return h;
}

}  // namespace s2st
