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

#include "s2st/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>

#include "s2st/error.hpp"

namespace s2st::dsp {

namespace {
// FFTW planning is not thread-safe; execution on distinct plans is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

struct RealFft::Plans {
  double* real = nullptr;
  fftw_complex* cplx = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan inv = nullptr;
};

RealFft::RealFft(std::size_t n) : n_(n), plans_(std::make_unique<Plans>()) {
  if (n < 2 || n % 2 != 0) throw Error(Errc::kShapeMismatch, "fft size must be even");
  std::lock_guard lock(planner_mutex());
  plans_->real = fftw_alloc_real(n);
  plans_->cplx = fftw_alloc_complex(n / 2 + 1);
  const int ni = static_cast<int>(n);
  plans_->fwd = fftw_plan_dft_r2c_1d(ni, plans_->real, plans_->cplx, FFTW_ESTIMATE);
  plans_->inv = fftw_plan_dft_c2r_1d(ni, plans_->cplx, plans_->real, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->fwd);
  fftw_destroy_plan(plans_->inv);
  fftw_free(plans_->real);
  fftw_free(plans_->cplx);
}

void RealFft::forward(std::span<const double> input, std::span<Complex> out) {
  for (std::size_t i = 0; i < n_; ++i) plans_->real[i] = i < input.size() ? input[i] : 0.0;
  fftw_execute(plans_->fwd);
  for (std::size_t k = 0; k < bins(); ++k) {
    out[k] = Complex(plans_->cplx[k][0], plans_->cplx[k][1]);
  }
}

void RealFft::inverse(std::span<const Complex> spectrum, std::span<double> out) {
  for (std::size_t k = 0; k < bins(); ++k) {
    plans_->cplx[k][0] = spectrum[k].real();
    plans_->cplx[k][1] = spectrum[k].imag();
  }
  // c2r ignores the imaginary parts of DC and Nyquist; zero them for clarity.
  plans_->cplx[0][1] = 0.0;
  plans_->cplx[bins() - 1][1] = 0.0;
  fftw_execute(plans_->inv);
  for (std::size_t i = 0; i < n_; ++i) out[i] = plans_->real[i];
}

std::vector<double> hann_window(std::size_t length) {
  std::vector<double> w(length);
  for (std::size_t i = 0; i < length; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(length));
  }
  return w;
}

std::size_t stft_frames(std::size_t n_samples, const StftConfig& cfg) {
  if (n_samples < cfg.win_length) return 0;
  return 1 + (n_samples - cfg.win_length) / cfg.hop;
}

std::size_t istft_length(std::size_t n_frames, const StftConfig& cfg) {
  if (n_frames == 0) return 0;
  return (n_frames - 1) * cfg.hop + cfg.win_length;
}

Stft::Stft(StftConfig cfg) : cfg_(cfg), fft_(cfg.n_fft), window_(hann_window(cfg.win_length)) {
  if (cfg.win_length > cfg.n_fft || cfg.hop == 0) {
    throw Error(Errc::kConfig, "stft needs win_length <= n_fft and hop > 0");
  }
}

std::vector<Complex> Stft::forward(std::span<const double> signal) {
  const std::size_t frames = stft_frames(signal.size(), cfg_);
  const std::size_t nb = bins();
  std::vector<Complex> out(frames * nb);
  std::vector<double> buf(cfg_.win_length);
  for (std::size_t t = 0; t < frames; ++t) {
    const std::size_t start = t * cfg_.hop;
    for (std::size_t i = 0; i < cfg_.win_length; ++i) buf[i] = signal[start + i] * window_[i];
    fft_.forward(buf, std::span<Complex>(out.data() + t * nb, nb));
  }
  return out;
}

std::vector<double> Stft::inverse(std::span<const Complex> spectrum, std::size_t n_frames) {
  const std::size_t nb = bins();
  const std::size_t len = istft_length(n_frames, cfg_);
  std::vector<double> out(len, 0.0), norm(len, 0.0), frame(cfg_.n_fft);
  const double inv_n = 1.0 / static_cast<double>(cfg_.n_fft);
  for (std::size_t t = 0; t < n_frames; ++t) {
    fft_.inverse(spectrum.subspan(t * nb, nb), frame);
    const std::size_t start = t * cfg_.hop;
    for (std::size_t i = 0; i < cfg_.win_length; ++i) {
      out[start + i] += frame[i] * inv_n * window_[i];
      norm[start + i] += window_[i] * window_[i];
    }
  }
  // Samples only reached by the window tails are divided by a floor instead
  // of their vanishing weight, which keeps inconsistent spectra bounded.
  const double floor = 1e-2 * *std::max_element(norm.begin(), norm.end());
  for (std::size_t i = 0; i < len; ++i) out[i] /= std::max(norm[i], floor);
  return out;
}

}  // namespace s2st::dsp
