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

// Inference: autoregressive unit decoding, and a codebook-lookup +
// Griffin-Lim unit vocoder.

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "s2st/model.hpp"
#include "s2st/quantizer.hpp"

namespace s2st {

enum class DecodeStrategy { kGreedy, kBeam };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::kBeam;
  std::size_t beam_size = 5;
  double length_penalty = 1.0;
  std::size_t max_len = 0;  // emitted tokens including EOS; 0 = decoder limit

  void validate(const DecoderConfig& dec) const;
};

struct DecodeResult {
  std::vector<std::size_t> tokens;  // emitted units, no specials
  double log_prob = 0.0;            // including EOS when it was emitted
  double score = 0.0;               // log_prob / length^length_penalty
  bool finished = false;            // EOS reached before max_len
};

// log_prob / n^alpha with n = emitted tokens (+1 for EOS).
double length_normalized(double log_prob, std::size_t length, double alpha);

// Model log-probability of `units` (+ EOS when `with_eos`) after BOS.
double sequence_log_prob(const S2stModel& model, const Tensor& memory,
                         const std::vector<std::size_t>& units, bool with_eos);

DecodeResult greedy_decode(const S2stModel& model, const Tensor& memory, const DecodeConfig& dc);
// Returns the best completed hypothesis by length-normalized score, never
// scoring below the greedy hypothesis.
DecodeResult beam_decode(const S2stModel& model, const Tensor& memory, const DecodeConfig& dc);

// Decodes and run-length reduces. Durations are left empty so synthesis uses
// the repeat factor. An immediate EOS yields an empty sequence.
UnitSequence translate_units(const Waveform& src, const S2stModel& model,
                             const DecodeConfig& dc, DecodeResult* detail = nullptr);

struct SynthesisConfig {
  std::size_t repeat_factor = 2;  // frames per reduced unit
  std::size_t griffin_lim_iters = 32;
  double ridge = 1e-8;
  std::size_t nonneg_iters = 100;  // non-negative refinement of the ridge solution
  MelConfig mel;
};

// Each unit becomes `repeat_factor` copies (or its duration) of its centroid.
MelSpectrogram units_to_mel(const UnitSequence& u, const Codebook& cb, const SynthesisConfig& sc);

// Linear magnitude [frames, n_fft/2 + 1] from log-mel through the
// ridge-regularized pseudo-inverse of the mel filterbank.
std::vector<double> mel_to_magnitude(const MelSpectrogram& m, const SynthesisConfig& sc);

struct GriffinLimTrace {
  // || |STFT(x_i)| - S ||_F / ||S||_F after every reconstruction, starting
  // with the zero-phase estimate.
  std::vector<double> spectral_convergence;
};

Waveform griffin_lim_magnitude(const std::vector<double>& magnitude, std::size_t n_frames,
                               const SynthesisConfig& sc, GriffinLimTrace* trace = nullptr);
// Output length (T - 1) * hop + win. The level follows the spectrogram; the
// result is scaled down only if its peak exceeds full scale.
Waveform griffin_lim(const MelSpectrogram& m, const SynthesisConfig& sc,
                     GriffinLimTrace* trace = nullptr);

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  virtual Waveform vocode(const UnitSequence& u, const Codebook& cb) = 0;
};

class GriffinLimVocoder : public Vocoder {
 public:
  explicit GriffinLimVocoder(SynthesisConfig sc = {}) : sc_(sc) {}
  Waveform vocode(const UnitSequence& u, const Codebook& cb) override;

 private:
  SynthesisConfig sc_;
};

// Runs `command <units.txt> <out.wav>`; units.txt holds space-separated ids.
class ExternalVocoder : public Vocoder {
 public:
  explicit ExternalVocoder(std::string command) : command_(std::move(command)) {}
  Waveform vocode(const UnitSequence& u, const Codebook& cb) override;

 private:
  std::string command_;
};

std::unique_ptr<Vocoder> make_vocoder(const std::string& kind, const SynthesisConfig& sc,
                                      const std::string& command = {});

struct SpeakDetail {
  UnitSequence units;
  bool empty_output = false;
};

// translate_units -> vocoder. Throws kCodebookMismatch unless the model was
// trained on `cb`. An empty unit sequence gives a 0-sample waveform.
Waveform speak(const Waveform& src, const S2stModel& model, const Codebook& cb,
               const DecodeConfig& dc, Vocoder& vocoder, SpeakDetail* detail = nullptr);

}  // namespace s2st
