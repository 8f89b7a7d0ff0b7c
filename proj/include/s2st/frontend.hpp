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

// Audio I/O, resampling, log-mel features and spectrogram augmentation.

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "s2st/random.hpp"

namespace s2st {

inline constexpr int kSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  double duration_s() const {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

// RIFF/WAVE, PCM-16, mono. Samples are scaled by 1/32768.
Waveform load_wav(const std::filesystem::path& path);
Waveform parse_wav(std::string_view bytes);
// PCM-16 mono; samples are clipped to [-1, 1] before quantization.
std::string encode_wav(const Waveform& w);
void save_wav(const std::filesystem::path& path, const Waveform& w);

// Linear-interpolation resampling; output length round(len * target / source).
Waveform resample(const Waveform& w, int target_rate);

struct MelConfig {
  std::size_t n_mels = 80;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-10;

  std::size_t win_length() const;  // samples at 16 kHz
  std::size_t hop() const;
  std::size_t n_fft() const;       // next power of two >= win_length
};

struct MelSpectrogram {
  std::size_t n_frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> frames;  // [n_frames, n_mels] row-major
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;

  double at(std::size_t t, std::size_t m) const { return frames[t * n_mels + m]; }
  double& at(std::size_t t, std::size_t m) { return frames[t * n_mels + m]; }
  bool empty() const { return n_frames == 0; }
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters on the HTK mel scale, [n_mels, n_fft/2 + 1] row-major.
std::vector<double> mel_filterbank(const MelConfig& cfg);

// 1 + floor((n - win) / hop), or 0 when shorter than one window.
std::size_t mel_frame_count(std::size_t n_samples, const MelConfig& cfg = {});

// Hann window, power spectrum, mel filterbank, natural log floored at
// cfg.log_floor. Requires 16 kHz input of at least one frame (kTooShort).
MelSpectrogram log_mel(const Waveform& w, const MelConfig& cfg = {});

struct AugmentPolicy {
  std::size_t max_time_shift_frames = 10;
  std::size_t freq_mask_width = 27;
  std::size_t n_freq_masks = 2;
  std::size_t time_mask_width = 40;
  std::size_t n_time_masks = 2;
  std::uint64_t seed = 0;

  static AugmentPolicy none() { return {0, 0, 0, 0, 0, 0}; }
};

double utterance_mean(const MelSpectrogram& m);
// Circular shift: out[t] = in[(t - shift) mod T].
void time_shift(MelSpectrogram& m, std::ptrdiff_t shift);
void fill_freq_band(MelSpectrogram& m, std::size_t first, std::size_t width, double value);
void fill_time_span(MelSpectrogram& m, std::size_t first, std::size_t width, double value);

// Time shift, frequency masks, then time masks; masked cells take the
// utterance mean. Mask widths are clamped to the spectrogram's extent.
MelSpectrogram spec_augment(const MelSpectrogram& m, const AugmentPolicy& p, Rng& rng);

}  // namespace s2st
