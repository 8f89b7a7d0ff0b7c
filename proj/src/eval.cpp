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

#include "s2st/eval.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sys/wait.h>

#include "s2st/io.hpp"
#include "s2st/trainer.hpp"

namespace s2st {

namespace fs = std::filesystem;

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isspace(c)) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const TokenSequence& s, std::size_t n) {
  NgramCounts counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++counts[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                      s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

// Clipped matches and hypothesis n-gram total for one pair.
std::pair<std::size_t, std::size_t> clipped(const TokenSequence& hyp, const TokenSequence& ref,
                                            std::size_t n) {
  const NgramCounts h = ngrams(hyp, n);
  const NgramCounts r = ngrams(ref, n);
  std::size_t matches = 0;
  for (const auto& [g, c] : h) {
    auto it = r.find(g);
    if (it != r.end()) matches += std::min(c, it->second);
  }
  return {matches, hyp.size() >= n ? hyp.size() - n + 1 : 0};
}

double brevity_penalty(std::size_t c, std::size_t r) {
  if (c == 0) return 0.0;
  if (c >= r) return 1.0;
  return std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
}

}  // namespace

BleuDetail bleu_detail(const std::vector<TokenSequence>& hyps,
                       const std::vector<TokenSequence>& refs, std::size_t max_n) {
  if (hyps.size() != refs.size()) {
    throw Error(Errc::kLengthMismatch, std::to_string(hyps.size()) + " hypotheses vs " +
                                           std::to_string(refs.size()) + " references");
  }
  if (hyps.empty()) throw Error(Errc::kEmptyCorpus, "bleu over an empty corpus");
  std::vector<std::size_t> matches(max_n, 0);
  std::vector<std::size_t> totals(max_n, 0);
  BleuDetail d;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    d.hyp_len += hyps[i].size();
    d.ref_len += refs[i].size();
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto [m, t] = clipped(hyps[i], refs[i], n);
      matches[n - 1] += m;
      totals[n - 1] += t;
    }
  }
  d.brevity_penalty = brevity_penalty(d.hyp_len, d.ref_len);
  double log_sum = 0.0;
  bool zero = d.hyp_len == 0;
  for (std::size_t n = 0; n < max_n; ++n) {
    const double p = totals[n] == 0 ? 0.0
                                    : static_cast<double>(matches[n]) /
                                          static_cast<double>(totals[n]);
    d.precisions.push_back(p);
    if (p == 0.0) {
      zero = true;
    } else {
      log_sum += std::log(p);
    }
  }
  d.score = zero ? 0.0 : d.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  return d;
}

double bleu(const std::vector<TokenSequence>& hyps, const std::vector<TokenSequence>& refs,
            std::size_t max_n) {
  return bleu_detail(hyps, refs, max_n).score;
}

double sentence_bleu(const TokenSequence& hyp, const TokenSequence& ref, std::size_t max_n) {
  if (ref.empty()) throw Error(Errc::kEmptyRef, "sentence_bleu needs a reference");
  if (hyp.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_n; ++n) {
    const auto [m, t] = clipped(hyp, ref, n);
    double p = 0.0;
    if (n == 1) {
      p = static_cast<double>(m) / static_cast<double>(t);
    } else {
      p = static_cast<double>(m + 1) / static_cast<double>(t + 1);
    }
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
  }
  return brevity_penalty(hyp.size(), ref.size()) *
         std::exp(log_sum / static_cast<double>(max_n));
}

std::size_t levenshtein(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

TokenSequence unit_tokens(const UnitSequence& u) {
  TokenSequence out;
  out.reserve(u.units.size());
  for (std::size_t x : u.units) out.push_back(std::to_string(x));
  return out;
}

UnitMetrics unit_metrics(const UnitSequence& hyp, const UnitSequence& ref) {
  if (ref.empty()) throw Error(Errc::kEmptyRef, "unit_metrics needs a reference");
  UnitMetrics m;
  m.unit_bleu = bleu({unit_tokens(hyp)}, {unit_tokens(ref)});
  m.unit_error_rate = static_cast<double>(levenshtein(hyp.units, ref.units)) /
                      static_cast<double>(ref.units.size());
  return m;
}

OracleTranscriber::OracleTranscriber(Codebook cb, std::vector<Entry> entries)
    : cb_(std::move(cb)), entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(Errc::kEmptyCorpus, "oracle transcriber has no references");
}

OracleTranscriber OracleTranscriber::from_manifest(const Manifest& m, const Codebook& cb) {
  std::vector<Entry> entries;
  for (const auto& r : m.records) {
    if (!r.tgt_audio || !r.tgt_text) continue;
    entries.push_back(
        {reduce_units(encode_units(log_mel(load_audio_16k(*r.tgt_audio)), cb)), *r.tgt_text});
  }
  return OracleTranscriber(cb, std::move(entries));
}

TokenSequence OracleTranscriber::transcribe(const Waveform& w) {
  if (mel_frame_count(w.samples.size()) == 0) return {};
  const UnitSequence u = reduce_units(encode_units(log_mel(w), cb_));
  std::size_t best = 0;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const std::size_t d = levenshtein(u.units, entries_[i].units.units);
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return tokenize(entries_[best].transcript);
}

TokenSequence ExternalTranscriber::transcribe(const Waveform& w) {
  const fs::path wav = fs::temp_directory_path() /
                       (io::staging_path("s2st-asr").filename().string() + ".wav");
  io::write_file_atomic(wav, encode_wav(w));
  const std::string cmd = command_ + " '" + wav.string() + "'";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    fs::remove(wav);
    throw Error(Errc::kTranscriberFailure, "cannot run " + command_);
  }
  std::string text;
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) text.append(buf.data(), n);
  const int status = ::pclose(pipe);
  fs::remove(wav);
  if (status != 0) {
    throw Error(Errc::kTranscriberFailure,
                command_ + " exited with status " + std::to_string(WEXITSTATUS(status)));
  }
  return tokenize(text);
}

nlohmann::ordered_json AsrBleuReport::to_json() const {
  nlohmann::ordered_json j;
  j["corpus_bleu"] = corpus_bleu;
  if (unit_bleu) j["unit_bleu"] = *unit_bleu;
  if (uer) j["uer"] = *uer;
  j["n_utts"] = n_utts;
  j["n_failed"] = n_failed;
  j["per_utt"] = nlohmann::ordered_json::array();
  for (const auto& u : per_utt) {
    nlohmann::ordered_json row;
    row["id"] = u.id;
    row["reference"] = u.reference;
    row["hypothesis"] = u.hypothesis;
    row["units"] = u.units;
    if (u.unit) {
      row["unit_bleu"] = u.unit->unit_bleu;
      row["uer"] = u.unit->unit_error_rate;
    }
    row["failed"] = u.failed;
    if (u.failed) row["error"] = u.error;
    j["per_utt"].push_back(std::move(row));
  }
  return j;
}

AsrBleuReport asr_bleu(const Manifest& m, const S2stModel& model, const Codebook& cb,
                       const DecodeConfig& dc, Vocoder& vocoder, Transcriber& transcriber) {
  if (m.empty()) throw Error(Errc::kEmptyCorpus, "evaluation manifest is empty");
  AsrBleuReport report;
  std::vector<TokenSequence> hyps;
  std::vector<TokenSequence> refs;
  std::vector<TokenSequence> unit_hyps;
  std::vector<TokenSequence> unit_refs;
  std::size_t edits = 0;
  std::size_t ref_units = 0;
  for (const auto& r : m.records) {
    if (!r.tgt_text) throw Error(Errc::kMalformedManifest, r.id + " has no reference text");
    UtteranceResult u;
    u.id = r.id;
    u.reference = *r.tgt_text;
    SpeakDetail detail;
    const Waveform out = speak(load_audio_16k(r.src_audio), model, cb, dc, vocoder, &detail);
    u.units = detail.units.units;
    if (r.tgt_audio) {
      const UnitSequence ref = reduce_units(encode_units(log_mel(load_audio_16k(*r.tgt_audio)), cb));
      u.unit = unit_metrics(detail.units, ref);
      unit_hyps.push_back(unit_tokens(detail.units));
      unit_refs.push_back(unit_tokens(ref));
      edits += levenshtein(detail.units.units, ref.units);
      ref_units += ref.units.size();
    }
    try {
      const TokenSequence hyp = transcriber.transcribe(out);
      for (const auto& t : hyp) u.hypothesis += (u.hypothesis.empty() ? "" : " ") + t;
      hyps.push_back(hyp);
      refs.push_back(tokenize(*r.tgt_text));
    } catch (const Error& e) {
      if (e.code() != Errc::kTranscriberFailure) throw;
      u.failed = true;
      u.error = e.what();
      ++report.n_failed;
    }
    report.per_utt.push_back(std::move(u));
  }
  report.n_utts = m.size();
  report.corpus_bleu = hyps.empty() ? 0.0 : bleu(hyps, refs);
  if (!unit_hyps.empty()) {
    report.unit_bleu = bleu(unit_hyps, unit_refs);
    report.uer = static_cast<double>(edits) / static_cast<double>(std::max<std::size_t>(1, ref_units));
  }
  return report;
}

}  // namespace s2st
