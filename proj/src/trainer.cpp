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

#include "s2st/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "json.hpp"
#include "s2st/io.hpp"

namespace s2st {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

double lr_at(std::size_t step, ParamGroup group, const ScheduleConfig& sched) {
  if (step == 0) throw Error(Errc::kConfig, "lr_at: step must be >= 1");
  if (sched.warmup_steps == 0) throw Error(Errc::kConfig, "warmup_steps must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(sched.warmup_steps);
  return sched.base_lr(group) * std::min(s / w, std::sqrt(w / s));
}

void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t t, double lr, const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    throw Error(Errc::kShapeMismatch, "adam buffers do not match the parameter");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

Adam::Adam(const ParamStore& ps, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, t] : ps.tensors()) {
    state_.moments[name] = {std::vector<double>(t.size(), 0.0),
                            std::vector<double>(t.size(), 0.0)};
  }
}

void Adam::step(ParamStore& ps, double lr_encoder, double lr_decoder) {
  ++state_.step;
  for (const auto& [name, handle] : ps.tensors()) {
    Tensor t = handle;
    if (!t.has_grad()) continue;
    auto it = state_.moments.find(name);
    if (it == state_.moments.end()) throw Error(Errc::kConfig, "optimizer has no state for " + name);
    const double lr = param_group(name) == ParamGroup::kEncoder ? lr_encoder : lr_decoder;
    adam_update(t.mutable_data(), t.grad(), it->second.m, it->second.v, state_.step, lr, cfg_);
  }
}

double clip_grad_norm(ParamStore& ps, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : ps.tensors()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double f = max_norm / norm;
    for (const auto& [name, handle] : ps.tensors()) {
      Tensor t = handle;
      if (!t.has_grad()) continue;
      for (double& g : t.mutable_grad()) g *= f;
    }
  }
  return norm;
}

BatchPlan plan_batches(const std::vector<std::pair<std::string, std::size_t>>& frames,
                       std::size_t max_frames, std::uint64_t seed) {
  auto sorted = frames;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });
  BatchPlan plan;
  std::vector<std::string> current;
  std::size_t used = 0;
  for (const auto& [id, n] : sorted) {
    if (n > max_frames) {
      throw Error(Errc::kUtteranceTooLong, id + " has " + std::to_string(n) +
                                               " frames, budget is " + std::to_string(max_frames));
    }
    if (used + n > max_frames && !current.empty()) {
      plan.batches.push_back(std::move(current));
      current.clear();
      used = 0;
    }
    current.push_back(id);
    used += n;
  }
  if (!current.empty()) plan.batches.push_back(std::move(current));
  Rng rng(seed);
  shuffle(plan.batches, rng);
  return plan;
}

Waveform load_audio_16k(const fs::path& path) {
  Waveform w = load_wav(path);
  return w.sample_rate == kSampleRate ? w : resample(w, kSampleRate);
}

fs::path unit_cache_path(const fs::path& manifest_path, const Codebook& cb) {
  return manifest_path.parent_path() /
         (manifest_path.stem().string() + ".units-" + io::hex64(cb.hash()) + ".jsonl");
}

bool in_hash_dev_split(const std::string& id) {
  return fnv1a(id.data(), id.size()) % 10 == 0;
}

std::vector<Example> prepare_examples(const Manifest& m, const Codebook& cb,
                                      const fs::path& cache_path) {
  std::unordered_map<std::string, std::pair<std::string, UnitSequence>> cache;
  if (!cache_path.empty() && fs::exists(cache_path)) {
    const std::string text = io::read_file(cache_path);
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const json j = json::parse(text.substr(pos, end - pos), nullptr, false);
      pos = end + 1;
      if (j.is_discarded() || !j.is_object()) continue;
      UnitSequence u;
      u.units = j.at("units").get<std::vector<std::size_t>>();
      u.durations = j.at("durations").get<std::vector<std::size_t>>();
      u.reduced = true;
      cache[j.at("id").get<std::string>()] = {j.at("tgt_audio").get<std::string>(), u};
    }
  }
  std::vector<Example> out;
  std::string cache_text;
  bool computed = false;
  for (const auto& r : m.records) {
    if (!r.tgt_audio) continue;
    Example ex;
    ex.id = r.id;
    ex.tgt_text = r.tgt_text.value_or("");
    ex.source = log_mel(load_audio_16k(r.src_audio));
    const std::string tgt_key = r.tgt_audio->generic_string();
    auto it = cache.find(r.id);
    if (it != cache.end() && it->second.first == tgt_key) {
      ex.target = it->second.second;
    } else {
      ex.target = reduce_units(encode_units(log_mel(load_audio_16k(*r.tgt_audio)), cb));
      computed = true;
    }
    ordered_json line;
    line["id"] = ex.id;
    line["tgt_audio"] = tgt_key;
    line["units"] = ex.target.units;
    line["durations"] = ex.target.durations;
    cache_text += line.dump() + "\n";
    out.push_back(std::move(ex));
  }
  if (!cache_path.empty() && computed) io::write_file_atomic(cache_path, cache_text);
  return out;
}

std::optional<std::size_t> TrainResult::epochs_to_reach(double threshold) const {
  for (const auto& e : history) {
    if (e.dev_acc >= threshold) return e.epoch;
  }
  return std::nullopt;
}

double teacher_forced_accuracy(const S2stModel& model, const std::vector<Example>& data) {
  NoGradGuard guard;
  const ForwardContext eval;
  std::size_t correct = 0;
  std::size_t total = 0;
  for (const auto& ex : data) {
    const Tensor mem = model.memory(ex.source, eval);
    const auto [c, n] = model.decoder().teacher_forced_accuracy(mem, ex.target);
    correct += c;
    total += n;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(S2stModel& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const TrainConfig& cfg,
                  const fs::path& out_dir) {
  if (train_set.empty()) throw Error(Errc::kEmptyCorpus, "training set is empty");
  if (dev_set.empty()) throw Error(Errc::kEmptyCorpus, "dev set is empty");
  if (!out_dir.empty()) fs::create_directories(out_dir);

  std::unordered_map<std::string, const Example*> by_id;
  std::vector<std::pair<std::string, std::size_t>> frames;
  for (const auto& ex : train_set) {
    if (ex.target.empty()) throw Error(Errc::kEmptyTarget, ex.id + " has no target units");
    by_id[ex.id] = &ex;
    frames.emplace_back(ex.id, ex.source.n_frames);
  }

  Rng rng(cfg.seed);
  ParamStore& ps = model.params();
  Adam opt(ps, cfg.adam);
  const ModelConfig& mc = model.config();
  const ForwardContext enc_ctx{true, mc.encoder.dropout, &rng};
  const ForwardContext dec_ctx{true, mc.decoder.dropout, &rng};
  const bool augment = cfg.augment.max_time_shift_frames > 0 || cfg.augment.n_freq_masks > 0 ||
                       cfg.augment.n_time_masks > 0;

  TrainResult result;
  std::string metrics_text;
  std::string timing_text;
  std::size_t step = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const BatchPlan plan = plan_batches(frames, cfg.max_frames, cfg.seed + epoch);
    double loss_sum = 0.0;
    std::size_t positions_sum = 0;
    double lr_enc = 0.0;
    double lr_dec = 0.0;
    for (std::size_t b = 0; b < plan.batches.size(); ++b) {
      ++step;
      lr_enc = lr_at(step, ParamGroup::kEncoder, cfg.schedule);
      lr_dec = lr_at(step, ParamGroup::kDecoder, cfg.schedule);
      ps.zero_grad();
      Tensor total;
      std::size_t positions = 0;
      for (const auto& id : plan.batches[b]) {
        const Example& ex = *by_id.at(id);
        const MelSpectrogram mel =
            augment ? spec_augment(ex.source, cfg.augment, rng) : ex.source;
        const Tensor mem = model.adapter()(model.encoder().encode(mel, enc_ctx));
        auto parts = model.decoder().teacher_forced(mem, ex.target, cfg.label_smoothing, dec_ctx);
        total = total.defined() ? add(total, parts.sum) : parts.sum;
        positions += parts.count;
      }
      const Tensor loss = scale(total, 1.0 / static_cast<double>(positions));
      const double value = loss.item();
      if (!std::isfinite(value)) {
        Tape::active().clear();
        std::string ids;
        for (const auto& id : plan.batches[b]) ids += (ids.empty() ? "" : ",") + id;
        throw Error(Errc::kNonFiniteLoss, "epoch " + std::to_string(epoch) + " step " +
                                              std::to_string(step) + " batch [" + ids +
                                              "] loss " + std::to_string(value));
      }
      backward(loss);
      clip_grad_norm(ps, cfg.clip_norm);
      opt.step(ps, lr_enc, lr_dec);
      loss_sum += value * static_cast<double>(positions);
      positions_sum += positions;
    }

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(positions_sum);
    em.dev_acc = teacher_forced_accuracy(model, dev_set);
    em.lr_decoder = lr_dec;
    em.lr_encoder = lr_enc;
    em.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(em);
    const bool improved = em.dev_acc > result.best_dev_acc;
    if (improved) {
      result.best_dev_acc = em.dev_acc;
      result.best_epoch = epoch;
    }

    if (!out_dir.empty()) {
      ordered_json line;
      line["epoch"] = em.epoch;
      line["train_loss"] = em.train_loss;
      line["dev_acc"] = em.dev_acc;
      line["lr_decoder"] = em.lr_decoder;
      line["lr_encoder"] = em.lr_encoder;
      metrics_text += line.dump() + "\n";
      io::write_file_atomic(out_dir / "metrics.jsonl", metrics_text);
      ordered_json timing;
      timing["epoch"] = em.epoch;
      timing["wall_s"] = em.wall_s;
      timing_text += timing.dump() + "\n";
      io::write_file_atomic(out_dir / "timing.jsonl", timing_text);
      model.save(out_dir / "last.ckpt");
      if (improved) model.save(out_dir / "best.ckpt");
    }
  }
  return result;
}

double pretrain_step(S2stModel& model, std::span<const MelSpectrogram* const> batch,
                     const PretrainConfig& cfg, Adam& opt, double lr, Rng& rng) {
  if (batch.empty()) throw Error(Errc::kEmptyInput, "pretrain batch is empty");
  ParamStore& ps = model.params();
  const ForwardContext ctx{true, model.config().encoder.dropout, &rng};
  ps.zero_grad();
  Tensor total;
  for (const MelSpectrogram* mel : batch) {
    const Tensor x = model.encoder().stem(mel_tensor(*mel), ctx);
    const MaskedInput masked =
        apply_span_mask(x, model.mask_embedding(), cfg.mask_prob, cfg.span_len, rng);
    const Tensor context = model.pretrain_head()(model.encoder().run_blocks(masked.x, ctx));
    const Tensor targets = cfg.stop_target_grad ? x.detach() : x;
    const Tensor l =
        contrastive_loss(context, targets, masked.spec, cfg.n_negatives, cfg.temperature, rng);
    total = total.defined() ? add(total, l) : l;
  }
  const Tensor loss = scale(total, 1.0 / static_cast<double>(batch.size()));
  const double value = loss.item();
  if (!std::isfinite(value)) {
    Tape::active().clear();
    throw Error(Errc::kNonFiniteLoss, "pretraining loss " + std::to_string(value));
  }
  backward(loss);
  clip_grad_norm(ps, cfg.clip_norm);
  opt.step(ps, lr, lr);
  return value;
}

PretrainResult pretrain(S2stModel& model, const std::vector<MelSpectrogram>& data,
                        const PretrainConfig& cfg, const fs::path& out_dir) {
  if (data.empty()) throw Error(Errc::kEmptyCorpus, "pretraining set is empty");
  if (!out_dir.empty()) fs::create_directories(out_dir);
  Rng rng(cfg.seed);
  Adam opt(model.params());
  ScheduleConfig sched;
  sched.base_lr_encoder = cfg.lr;
  sched.warmup_steps = std::max<std::size_t>(1, cfg.warmup_steps);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t bs = std::min(cfg.batch_size, data.size());

  PretrainResult result;
  std::string metrics_text;
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<const MelSpectrogram*> batch;
    while (batch.size() < bs) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      batch.push_back(&data[order[cursor++]]);
    }
    const double lr = lr_at(step, ParamGroup::kEncoder, sched);
    const double loss = pretrain_step(model, batch, cfg, opt, lr, rng);
    result.losses.push_back(loss);
    if (!out_dir.empty()) {
      ordered_json line;
      line["step"] = step;
      line["loss"] = loss;
      line["lr"] = lr;
      metrics_text += line.dump() + "\n";
    }
  }
  if (!out_dir.empty()) {
    io::write_file_atomic(out_dir / "metrics.jsonl", metrics_text);
    model.save_encoder(out_dir / "encoder.ckpt");
  }
  return result;
}

}  // namespace s2st
