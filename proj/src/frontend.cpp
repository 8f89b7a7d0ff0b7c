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

#include "s2st/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "s2st/dsp.hpp"
#include "s2st/error.hpp"
#include "s2st/io.hpp"

namespace s2st {

namespace {

std::uint32_t u32(std::string_view b, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[off])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[off + 3])) << 24;
}

std::uint16_t u16(std::string_view b, std::size_t off) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[off]) |
                                    static_cast<unsigned char>(b[off + 1]) << 8);
}

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Waveform parse_wav(std::string_view b) {
  if (b.size() < 12 || b.substr(0, 4) != "RIFF" || b.substr(8, 4) != "WAVE") {
    throw Error(Errc::kCorruptFile, "missing RIFF/WAVE header");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  int sample_rate = 0;
  while (pos + 8 <= b.size()) {
    const std::string_view id = b.substr(pos, 4);
    const std::uint32_t size = u32(b, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + 16 > b.size()) throw Error(Errc::kCorruptFile, "short fmt chunk");
      const std::uint16_t format = u16(b, body);
      const std::uint16_t channels = u16(b, body + 2);
      sample_rate = static_cast<int>(u32(b, body + 4));
      const std::uint16_t bits = u16(b, body + 14);
      if (format != 1) throw Error(Errc::kUnsupportedFormat, "non-PCM wav");
      if (channels != 1) {
        throw Error(Errc::kUnsupportedFormat, std::to_string(channels) + " channels");
      }
      if (bits != 16) {
        throw Error(Errc::kUnsupportedFormat, std::to_string(bits) + "-bit samples");
      }
      if (sample_rate <= 0) throw Error(Errc::kCorruptFile, "sample rate 0");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(Errc::kCorruptFile, "data chunk before fmt");
      if (body + size > b.size() || size % 2 != 0) {
        throw Error(Errc::kCorruptFile, "truncated data chunk");
      }
      Waveform w;
      w.sample_rate = sample_rate;
      w.samples.resize(size / 2);
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        const auto s = static_cast<std::int16_t>(u16(b, body + 2 * i));
        w.samples[i] = static_cast<float>(s) / 32768.0f;
      }
      return w;
    }
    pos = body + size + (size & 1);
  }
  throw Error(Errc::kCorruptFile, "no data chunk");
}

Waveform load_wav(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  try {
    return parse_wav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

std::string encode_wav(const Waveform& w) {
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::string s;
  s.reserve(44 + data_bytes);
  s += "RIFF";
  put_u32(s, 36 + data_bytes);
  s += "WAVE";
  s += "fmt ";
  put_u32(s, 16);
  put_u16(s, 1);
  put_u16(s, 1);
  put_u32(s, static_cast<std::uint32_t>(w.sample_rate));
  put_u32(s, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put_u16(s, 2);
  put_u16(s, 16);
  s += "data";
  put_u32(s, data_bytes);
  for (float x : w.samples) {
    const double c = std::clamp(static_cast<double>(x), -1.0, 1.0);
    const long q = std::clamp(std::lround(c * 32768.0), -32768L, 32767L);
    put_u16(s, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return s;
}

void save_wav(const std::filesystem::path& path, const Waveform& w) {
  io::write_file_atomic(path, encode_wav(w));
}

Waveform resample(const Waveform& w, int target_rate) {
  if (w.sample_rate <= 0 || target_rate <= 0) {
    throw Error(Errc::kConfig, "sample rates must be positive");
  }
  if (w.sample_rate == target_rate) return w;
  const double ratio = static_cast<double>(w.sample_rate) / target_rate;
  const auto n_out = static_cast<std::size_t>(std::llround(
      static_cast<double>(w.samples.size()) * target_rate / w.sample_rate));
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const std::size_t n = w.samples.size();
  for (std::size_t i = 0; i < n_out; ++i) {
    const double pos = static_cast<double>(i) * ratio;
    const auto i0 = static_cast<std::size_t>(pos);
    if (i0 + 1 >= n) {
      out.samples[i] = n ? w.samples[n - 1] : 0.0f;
      continue;
    }
    const double frac = pos - static_cast<double>(i0);
    out.samples[i] = static_cast<float>((1.0 - frac) * w.samples[i0] + frac * w.samples[i0 + 1]);
  }
  return out;
}

std::size_t MelConfig::win_length() const {
  return static_cast<std::size_t>(std::lround(frame_length_ms * kSampleRate / 1000.0));
}

std::size_t MelConfig::hop() const {
  return static_cast<std::size_t>(std::lround(frame_shift_ms * kSampleRate / 1000.0));
}

std::size_t MelConfig::n_fft() const {
  std::size_t n = 2;
  while (n < win_length()) n *= 2;
  return n;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> mel_filterbank(const MelConfig& cfg) {
  const std::size_t n_bins = cfg.n_fft() / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min), hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) /
                                  static_cast<double>(cfg.n_mels + 1));
  }
  std::vector<double> fb(cfg.n_mels * n_bins, 0.0);
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * kSampleRate / static_cast<double>(cfg.n_fft());
      double v = 0.0;
      if (f > left && f <= center) {
        v = (f - left) / (center - left);
      } else if (f > center && f < right) {
        v = (right - f) / (right - center);
      }
      fb[m * n_bins + k] = v;
    }
  }
  return fb;
}

std::size_t mel_frame_count(std::size_t n_samples, const MelConfig& cfg) {
  return dsp::stft_frames(n_samples, {cfg.win_length(), cfg.hop(), cfg.n_fft()});
}

MelSpectrogram log_mel(const Waveform& w, const MelConfig& cfg) {
  if (w.sample_rate != kSampleRate) {
    throw Error(Errc::kConfig, "log_mel expects 16 kHz audio, got " +
                                   std::to_string(w.sample_rate));
  }
  const dsp::StftConfig sc{cfg.win_length(), cfg.hop(), cfg.n_fft()};
  const std::size_t frames = dsp::stft_frames(w.samples.size(), sc);
  if (frames == 0) {
    throw Error(Errc::kTooShort, std::to_string(w.samples.size()) +
                                     " samples is shorter than one frame");
  }
  std::vector<double> signal(w.samples.begin(), w.samples.end());
  dsp::Stft stft(sc);
  const auto spec = stft.forward(signal);
  const auto fb = mel_filterbank(cfg);
  const std::size_t nb = stft.bins();
  MelSpectrogram m;
  m.n_frames = frames;
  m.n_mels = cfg.n_mels;
  m.frame_shift_ms = cfg.frame_shift_ms;
  m.frame_length_ms = cfg.frame_length_ms;
  m.frames.resize(frames * cfg.n_mels);
  std::vector<double> power(nb);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t k = 0; k < nb; ++k) power[k] = std::norm(spec[t * nb + k]);
    for (std::size_t j = 0; j < cfg.n_mels; ++j) {
      double e = 0.0;
      for (std::size_t k = 0; k < nb; ++k) e += fb[j * nb + k] * power[k];
      m.at(t, j) = std::log(std::max(e, cfg.log_floor));
    }
  }
  return m;
}

double utterance_mean(const MelSpectrogram& m) {
  if (m.frames.empty()) return 0.0;
  double s = 0.0;
  for (double v : m.frames) s += v;
  return s / static_cast<double>(m.frames.size());
}

void time_shift(MelSpectrogram& m, std::ptrdiff_t shift) {
  if (m.n_frames == 0 || shift == 0) return;
  const auto t_len = static_cast<std::ptrdiff_t>(m.n_frames);
  const std::ptrdiff_t s = ((shift % t_len) + t_len) % t_len;
  std::vector<double> out(m.frames.size());
  for (std::ptrdiff_t t = 0; t < t_len; ++t) {
    const std::ptrdiff_t src = (t - s + t_len) % t_len;
    std::copy_n(m.frames.begin() + src * static_cast<std::ptrdiff_t>(m.n_mels), m.n_mels,
                out.begin() + t * static_cast<std::ptrdiff_t>(m.n_mels));
  }
  m.frames = std::move(out);
}

void fill_freq_band(MelSpectrogram& m, std::size_t first, std::size_t width, double value) {
  const std::size_t end = std::min(first + width, m.n_mels);
  for (std::size_t t = 0; t < m.n_frames; ++t) {
    for (std::size_t j = first; j < end; ++j) m.at(t, j) = value;
  }
}

void fill_time_span(MelSpectrogram& m, std::size_t first, std::size_t width, double value) {
  const std::size_t end = std::min(first + width, m.n_frames);
  for (std::size_t t = first; t < end; ++t) {
    for (std::size_t j = 0; j < m.n_mels; ++j) m.at(t, j) = value;
  }
}

MelSpectrogram spec_augment(const MelSpectrogram& m, const AugmentPolicy& p, Rng& rng) {
  MelSpectrogram out = m;
  if (m.n_frames == 0) return out;
  if (p.max_time_shift_frames > 0) {
    const auto s = static_cast<std::int64_t>(p.max_time_shift_frames);
    time_shift(out, static_cast<std::ptrdiff_t>(uniform_int(rng, -s, s)));
  }
  if (p.n_freq_masks == 0 && p.n_time_masks == 0) return out;
  const double fill = utterance_mean(out);
  const std::size_t f_max = std::min(p.freq_mask_width, out.n_mels);
  for (std::size_t i = 0; i < p.n_freq_masks; ++i) {
    const auto f = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(f_max)));
    const auto f0 = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(out.n_mels - f)));
    fill_freq_band(out, f0, f, fill);
  }
  const std::size_t t_max = std::min(p.time_mask_width, out.n_frames);
  for (std::size_t i = 0; i < p.n_time_masks; ++i) {
    const auto t = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(t_max)));
    const auto t0 = static_cast<std::size_t>(
        uniform_int(rng, 0, static_cast<std::int64_t>(out.n_frames - t)));
    fill_time_span(out, t0, t, fill);
  }
  return out;
}

}  // namespace s2st
