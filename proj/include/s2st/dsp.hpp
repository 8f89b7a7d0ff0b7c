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

// FFT and short-time Fourier transform shared by feature extraction and
// phase reconstruction. FFTW does the transforms.

#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace s2st::dsp {

using Complex = std::complex<double>;

// Real-input FFT of a fixed size n (even). Instances are not shareable
// across threads; create one per worker.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // input.size() <= n; zero padded.
  void forward(std::span<const double> input, std::span<Complex> out);
  // Unnormalized inverse: returns n * x for x = forward^-1.
  void inverse(std::span<const Complex> spectrum, std::span<double> out);

 private:
  struct Plans;
  std::size_t n_;
  std::unique_ptr<Plans> plans_;
};

std::vector<double> hann_window(std::size_t length);

struct StftConfig {
  std::size_t win_length = 400;
  std::size_t hop = 160;
  std::size_t n_fft = 512;
};

std::size_t stft_frames(std::size_t n_samples, const StftConfig& cfg);
std::size_t istft_length(std::size_t n_frames, const StftConfig& cfg);

class Stft {
 public:
  explicit Stft(StftConfig cfg = {});

  const StftConfig& config() const { return cfg_; }
  std::size_t bins() const { return fft_.bins(); }

  // Returns [frames * bins] row-major spectrum.
  std::vector<Complex> forward(std::span<const double> signal);
  // Least-squares overlap-add inverse (window-squared normalization, floored
  // at 1% of its peak so the outermost tail samples stay bounded).
  std::vector<double> inverse(std::span<const Complex> spectrum, std::size_t n_frames);

 private:
  StftConfig cfg_;
  RealFft fft_;
  std::vector<double> window_;
};

}  // namespace s2st::dsp
