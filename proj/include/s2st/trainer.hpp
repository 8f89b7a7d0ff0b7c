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

// Optimization: Adam with two learning-rate groups, warmup + inverse-sqrt
// decay, frame-budget batching, the fine-tuning loop and contrastive
// pretraining.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "s2st/frontend.hpp"
#include "s2st/manifest.hpp"
#include "s2st/model.hpp"
#include "s2st/quantizer.hpp"

namespace s2st {

struct ScheduleConfig {
  double base_lr_decoder = 2.5e-4;
  double base_lr_encoder = 1e-5;
  std::size_t warmup_steps = 400;

  double base_lr(ParamGroup g) const {
    return g == ParamGroup::kEncoder ? base_lr_encoder : base_lr_decoder;
  }
};

// base_lr(group) * min(step / warmup, sqrt(warmup / step)); step >= 1.
double lr_at(std::size_t step, ParamGroup group, const ScheduleConfig& sched);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// One bias-corrected Adam update at (1-based) step t. Throws kShapeMismatch
// unless all spans have equal length.
void adam_update(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, std::size_t t, double lr, const AdamConfig& cfg);

struct OptimState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::map<std::string, Moments> moments;
  std::size_t step = 0;
};

class Adam {
 public:
  explicit Adam(const ParamStore& ps, AdamConfig cfg = {});

  // Advances the step count and updates every parameter with its group's rate.
  void step(ParamStore& ps, double lr_encoder, double lr_decoder);
  const OptimState& state() const { return state_; }

 private:
  AdamConfig cfg_;
  OptimState state_;
};

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the norm before clipping.
double clip_grad_norm(ParamStore& ps, double max_norm);

struct BatchPlan {
  std::vector<std::vector<std::string>> batches;
};

// Sort by (frames, id), pack greedily under max_frames, shuffle batch order by
// seed. A single utterance above the budget throws kUtteranceTooLong.
BatchPlan plan_batches(const std::vector<std::pair<std::string, std::size_t>>& frames,
                       std::size_t max_frames, std::uint64_t seed);

// ---- data --------------------------------------------------------------------

Waveform load_audio_16k(const std::filesystem::path& path);

struct Example {
  std::string id;
  MelSpectrogram source;
  UnitSequence target;  // reduced
  std::string tgt_text;
};

// Source log-mels and reduced target units for every record with target
// audio. With `cache_dir` set, units are cached in a file keyed by the
// codebook hash and reused on later calls.
std::vector<Example> prepare_examples(const Manifest& m, const Codebook& cb,
                                      const std::filesystem::path& cache_path = {});

std::filesystem::path unit_cache_path(const std::filesystem::path& manifest_path,
                                      const Codebook& cb);

// 10% of ids by FNV-1a hash (hash % 10 == 0).
bool in_hash_dev_split(const std::string& id);

// ---- fine-tuning ---------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t max_frames = 2000;
  ScheduleConfig schedule;
  AdamConfig adam;
  double clip_norm = 5.0;
  double label_smoothing = 0.1;
  AugmentPolicy augment;
  std::uint64_t seed = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_acc = 0.0;
  double lr_decoder = 0.0;
  double lr_encoder = 0.0;
  double wall_s = 0.0;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  double best_dev_acc = -1.0;
  std::size_t best_epoch = 0;

  // First epoch whose dev accuracy reaches `threshold`.
  std::optional<std::size_t> epochs_to_reach(double threshold) const;
};

// Teacher-forced argmax unit accuracy pooled over all positions.
double teacher_forced_accuracy(const S2stModel& model, const std::vector<Example>& data);

// When `out_dir` is non-empty, writes metrics.jsonl (deterministic fields),
// timing.jsonl (wall clock), last.ckpt after every epoch and best.ckpt on
// every dev improvement. Non-finite loss throws kNonFiniteLoss.
TrainResult train(S2stModel& model, const std::vector<Example>& train_set,
                  const std::vector<Example>& dev_set, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir = {});

// ---- contrastive pretraining ---------------------------------------------------

struct PretrainConfig {
  std::size_t steps = 200;
  std::size_t batch_size = 4;
  double lr = 5e-4;
  std::size_t warmup_steps = 20;
  double mask_prob = 0.065;
  std::size_t span_len = 10;
  std::size_t n_negatives = 10;
  double temperature = 0.1;
  double clip_norm = 5.0;
  bool stop_target_grad = true;  // targets enter the loss as constants
  std::uint64_t seed = 0;
};

// Masked contrastive loss on a batch, backward, one optimizer step at `lr`.
// Returns the pre-update mean loss.
double pretrain_step(S2stModel& model, std::span<const MelSpectrogram* const> batch,
                     const PretrainConfig& cfg, Adam& opt, double lr, Rng& rng);

struct PretrainResult {
  std::vector<double> losses;  // one per step
};

// When `out_dir` is non-empty, writes metrics.jsonl and encoder.ckpt.
PretrainResult pretrain(S2stModel& model, const std::vector<MelSpectrogram>& data,
                        const PretrainConfig& cfg, const std::filesystem::path& out_dir = {});

}  // namespace s2st
