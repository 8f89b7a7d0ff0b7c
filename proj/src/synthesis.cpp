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

#include "s2st/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "s2st/dsp.hpp"
#include "s2st/io.hpp"

namespace s2st {

namespace fs = std::filesystem;

namespace {

std::vector<double> log_softmax_vec(const std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  const double lse = mx + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::size_t effective_max_len(const DecodeConfig& dc, const DecoderConfig& dec) {
  return dc.max_len == 0 ? dec.max_target_len : dc.max_len;
}

bool selectable(std::size_t id, const DecoderConfig& dec) {
  return id != dec.bos() && id != dec.pad();
}

}  // namespace

void DecodeConfig::validate(const DecoderConfig& dec) const {
  if (beam_size == 0) throw Error(Errc::kConfig, "beam_size must be >= 1");
  if (max_len > dec.max_target_len) {
    throw Error(Errc::kConfig, "max_len exceeds the decoder's max_target_len");
  }
}

double length_normalized(double log_prob, std::size_t length, double alpha) {
  return log_prob / std::pow(static_cast<double>(std::max<std::size_t>(1, length)), alpha);
}

double sequence_log_prob(const S2stModel& model, const Tensor& memory,
                         const std::vector<std::size_t>& units, bool with_eos) {
  const DecoderConfig& dec = model.decoder().config();
  std::vector<std::size_t> prefix{dec.bos()};
  double lp = 0.0;
  const std::size_t n = units.size() + (with_eos ? 1 : 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto logp = log_softmax_vec(model.decoder().decode_step(memory, prefix));
    const std::size_t tok = i < units.size() ? units[i] : dec.eos();
    lp += logp.at(tok);
    prefix.push_back(tok);
  }
  return lp;
}

DecodeResult greedy_decode(const S2stModel& model, const Tensor& memory, const DecodeConfig& dc) {
  const DecoderConfig& dec = model.decoder().config();
  dc.validate(dec);
  const std::size_t max_len = effective_max_len(dc, dec);
  std::vector<std::size_t> prefix{dec.bos()};
  DecodeResult r;
  std::size_t emitted = 0;
  while (emitted < max_len) {
    const auto logp = log_softmax_vec(model.decoder().decode_step(memory, prefix));
    std::size_t best = dec.eos();
    double best_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < logp.size(); ++v) {
      if (selectable(v, dec) && logp[v] > best_lp) {
        best_lp = logp[v];
        best = v;
      }
    }
    r.log_prob += best_lp;
    ++emitted;
    if (best == dec.eos()) {
      r.finished = true;
      break;
    }
    r.tokens.push_back(best);
    prefix.push_back(best);
  }
  r.score = length_normalized(r.log_prob, emitted, dc.length_penalty);
  return r;
}

DecodeResult beam_decode(const S2stModel& model, const Tensor& memory, const DecodeConfig& dc) {
  const DecoderConfig& dec = model.decoder().config();
  dc.validate(dec);
  const std::size_t max_len = effective_max_len(dc, dec);
  struct Hyp {
    std::vector<std::size_t> tokens;
    double log_prob = 0.0;
  };
  std::vector<Hyp> alive{Hyp{}};
  std::vector<DecodeResult> done;
  for (std::size_t step = 1; step <= max_len && !alive.empty(); ++step) {
    struct Cand {
      std::size_t parent;
      std::size_t token;
      double log_prob;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < alive.size(); ++h) {
      std::vector<std::size_t> prefix{dec.bos()};
      prefix.insert(prefix.end(), alive[h].tokens.begin(), alive[h].tokens.end());
      const auto logp = log_softmax_vec(model.decoder().decode_step(memory, prefix));
      for (std::size_t v = 0; v < logp.size(); ++v) {
        if (selectable(v, dec)) cands.push_back({h, v, alive[h].log_prob + logp[v]});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.log_prob > b.log_prob; });
    std::vector<Hyp> next;
    for (const Cand& c : cands) {
      if (next.size() >= dc.beam_size) break;
      if (c.token == dec.eos()) {
        DecodeResult r;
        r.tokens = alive[c.parent].tokens;
        r.log_prob = c.log_prob;
        r.finished = true;
        r.score = length_normalized(r.log_prob, step, dc.length_penalty);
        done.push_back(std::move(r));
        if (done.size() >= dc.beam_size) break;
        continue;
      }
      Hyp h = alive[c.parent];
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      next.push_back(std::move(h));
    }
    alive = done.size() >= dc.beam_size ? std::vector<Hyp>{} : std::move(next);
  }
  for (const Hyp& h : alive) {
    DecodeResult r;
    r.tokens = h.tokens;
    r.log_prob = h.log_prob;
    r.score = length_normalized(r.log_prob, h.tokens.size(), dc.length_penalty);
    done.push_back(std::move(r));
  }
  done.push_back(greedy_decode(model, memory, dc));
  std::size_t best = 0;
  for (std::size_t i = 1; i < done.size(); ++i) {
    if (done[i].score > done[best].score) best = i;
  }
  return done[best];
}

UnitSequence translate_units(const Waveform& src, const S2stModel& model, const DecodeConfig& dc,
                             DecodeResult* detail) {
  if (src.sample_rate != kSampleRate) {
    throw Error(Errc::kUnsupportedFormat, "translate_units expects 16 kHz input");
  }
  const Tensor memory = [&] {
    NoGradGuard guard;
    return model.memory(log_mel(src), ForwardContext{});
  }();
  DecodeResult r = dc.strategy == DecodeStrategy::kGreedy || dc.beam_size == 1
                       ? greedy_decode(model, memory, dc)
                       : beam_decode(model, memory, dc);
  UnitSequence out;
  out.reduced = true;
  for (std::size_t t : r.tokens) {
    if (out.units.empty() || out.units.back() != t) out.units.push_back(t);
  }
  if (detail) *detail = std::move(r);
  return out;
}

MelSpectrogram units_to_mel(const UnitSequence& u, const Codebook& cb, const SynthesisConfig& sc) {
  if (cb.feature_space != kLogMel80 || cb.dim != sc.mel.n_mels) {
    throw Error(Errc::kFeatureSpaceMismatch,
                "codebook feature space " + cb.feature_space + " cannot be rendered as log-mel");
  }
  if (sc.repeat_factor == 0) throw Error(Errc::kConfig, "repeat_factor must be >= 1");
  if (u.has_durations() && u.durations.size() != u.units.size()) {
    throw Error(Errc::kLengthMismatch, "one duration per unit");
  }
  MelSpectrogram m;
  m.n_mels = cb.dim;
  m.frame_shift_ms = sc.mel.frame_shift_ms;
  m.frame_length_ms = sc.mel.frame_length_ms;
  for (std::size_t i = 0; i < u.units.size(); ++i) {
    if (u.units[i] >= cb.k) {
      throw Error(Errc::kIndexOutOfVocab, "unit " + std::to_string(u.units[i]) +
                                              " outside codebook of " + std::to_string(cb.k));
    }
    const std::size_t reps = u.has_durations() ? u.durations[i] : sc.repeat_factor;
    const auto c = cb.centroid(u.units[i]);
    for (std::size_t r = 0; r < reps; ++r) m.frames.insert(m.frames.end(), c.begin(), c.end());
    m.n_frames += reps;
  }
  return m;
}

std::vector<double> mel_to_magnitude(const MelSpectrogram& m, const SynthesisConfig& sc) {
  const std::vector<double> fb_flat = mel_filterbank(sc.mel);
  const auto n_mels = static_cast<Eigen::Index>(sc.mel.n_mels);
  const auto n_bins = static_cast<Eigen::Index>(sc.mel.n_fft() / 2 + 1);
  if (m.n_mels != sc.mel.n_mels) throw Error(Errc::kDimMismatch, "mel bin count differs");
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      fb(fb_flat.data(), n_mels, n_bins);
  Eigen::MatrixXd gram = fb * fb.transpose();
  gram.diagonal().array() += sc.ridge;
  const Eigen::LDLT<Eigen::MatrixXd> solver(gram);

  const auto frames = static_cast<Eigen::Index>(m.n_frames);
  Eigen::MatrixXd mel_power(n_mels, frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index j = 0; j < n_mels; ++j) {
      mel_power(j, t) = std::exp(m.frames[static_cast<std::size_t>(t * n_mels + j)]);
    }
  }
  Eigen::MatrixXd power = (fb.transpose() * solver.solve(mel_power)).cwiseMax(0.0);
  if (sc.nonneg_iters > 0) {
    // Multiplicative updates for min ||fb * P - mel_power|| with P >= 0,
    // started from the clamped ridge solution.
    const Eigen::MatrixXd numer = fb.transpose() * mel_power;
    const Eigen::MatrixXd gram_bins = fb.transpose() * fb;
    for (Eigen::Index t = 0; t < frames; ++t) {
      const double floor = 1e-6 * std::max(power.col(t).maxCoeff(), 1e-30);
      power.col(t) = power.col(t).array().max(floor);
    }
    for (std::size_t it = 0; it < sc.nonneg_iters; ++it) {
      const Eigen::MatrixXd denom = gram_bins * power;
      power = power.array() * numer.array() / (denom.array() + 1e-300);
    }
  }
  std::vector<double> mag(static_cast<std::size_t>(frames * n_bins));
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      mag[static_cast<std::size_t>(t * n_bins + k)] = std::sqrt(std::max(0.0, power(k, t)));
    }
  }
  return mag;
}

Waveform griffin_lim_magnitude(const std::vector<double>& magnitude, std::size_t n_frames,
                               const SynthesisConfig& sc, GriffinLimTrace* trace) {
  Waveform w;
  if (n_frames == 0) return w;
  dsp::Stft stft({sc.mel.win_length(), sc.mel.hop(), sc.mel.n_fft()});
  const std::size_t nb = stft.bins();
  if (magnitude.size() != n_frames * nb) {
    throw Error(Errc::kShapeMismatch, "magnitude must be frames x bins");
  }
  double norm_s = 0.0;
  for (double s : magnitude) norm_s += s * s;
  norm_s = std::sqrt(norm_s);

  std::vector<dsp::Complex> spec(magnitude.begin(), magnitude.end());
  std::vector<double> x = stft.inverse(spec, n_frames);
  const auto convergence = [&](const std::vector<dsp::Complex>& est) {
    double err = 0.0;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const double d = std::abs(est[i]) - magnitude[i];
      err += d * d;
    }
    return norm_s > 0.0 ? std::sqrt(err) / norm_s : std::sqrt(err);
  };
  for (std::size_t it = 0; it < sc.griffin_lim_iters || trace; ++it) {
    const std::vector<dsp::Complex> est = stft.forward(x);
    if (trace) trace->spectral_convergence.push_back(convergence(est));
    if (it >= sc.griffin_lim_iters) break;
    for (std::size_t i = 0; i < est.size(); ++i) {
      const double a = std::abs(est[i]);
      spec[i] = a > 0.0 ? magnitude[i] * est[i] / a : dsp::Complex(magnitude[i], 0.0);
    }
    x = stft.inverse(spec, n_frames);
  }
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = peak > 1.0 ? 1.0 / peak : 1.0;
  w.samples.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) w.samples[i] = static_cast<float>(x[i] * gain);
  return w;
}

Waveform griffin_lim(const MelSpectrogram& m, const SynthesisConfig& sc, GriffinLimTrace* trace) {
  return griffin_lim_magnitude(mel_to_magnitude(m, sc), m.n_frames, sc, trace);
}

Waveform GriffinLimVocoder::vocode(const UnitSequence& u, const Codebook& cb) {
  return griffin_lim(units_to_mel(u, cb, sc_), sc_);
}

Waveform ExternalVocoder::vocode(const UnitSequence& u, const Codebook&) {
  const fs::path dir = fs::temp_directory_path() / io::staging_path("s2st-vocoder").filename();
  fs::create_directories(dir);
  const fs::path units_path = dir / "units.txt";
  const fs::path wav_path = dir / "out.wav";
  std::string text;
  for (std::size_t i = 0; i < u.units.size(); ++i) {
    text += (i ? " " : "") + std::to_string(u.units[i]);
  }
  io::write_file_atomic(units_path, text + "\n");
  const std::string cmd = command_ + " '" + units_path.string() + "' '" + wav_path.string() + "'";
  const int rc = std::system(cmd.c_str());
  if (rc != 0) {
    fs::remove_all(dir);
    throw Error(Errc::kIo, "external vocoder exited with status " + std::to_string(rc));
  }
  Waveform w = load_wav(wav_path);
  fs::remove_all(dir);
  return w.sample_rate == kSampleRate ? w : resample(w, kSampleRate);
}

std::unique_ptr<Vocoder> make_vocoder(const std::string& kind, const SynthesisConfig& sc,
                                      const std::string& command) {
  if (kind == "griffin_lim") return std::make_unique<GriffinLimVocoder>(sc);
  if (kind == "external") {
    if (command.empty()) throw Error(Errc::kConfig, "external vocoder needs a command");
    return std::make_unique<ExternalVocoder>(command);
  }
  throw Error(Errc::kConfig, "unknown vocoder '" + kind + "'");
}

Waveform speak(const Waveform& src, const S2stModel& model, const Codebook& cb,
               const DecodeConfig& dc, Vocoder& vocoder, SpeakDetail* detail) {
  const std::string hash = io::hex64(cb.hash());
  if (model.codebook_hash != hash) {
    throw Error(Errc::kCodebookMismatch, "model was trained on codebook " +
                                             model.codebook_hash + ", got " + hash);
  }
  const Waveform in = src.sample_rate == kSampleRate ? src : resample(src, kSampleRate);
  UnitSequence units = translate_units(in, model, dc);
  Waveform out;
  const bool empty = units.empty();
  if (!empty) out = vocoder.vocode(units, cb);
  if (detail) {
    detail->units = std::move(units);
    detail->empty_output = empty;
  }
  return out;
}

}  // namespace s2st
