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

// Translation quality: corpus and sentence BLEU, unit-level metrics and the
// ASR-BLEU protocol over a pluggable transcriber.

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "s2st/manifest.hpp"
#include "s2st/quantizer.hpp"
#include "s2st/synthesis.hpp"

namespace s2st {

using TokenSequence = std::vector<std::string>;

// ASCII lowercase, ASCII punctuation removed, whitespace split.
TokenSequence tokenize(std::string_view text);

struct BleuDetail {
  double score = 0.0;
  std::vector<double> precisions;  // p_1 .. p_max_n
  double brevity_penalty = 0.0;
  std::size_t hyp_len = 0;
  std::size_t ref_len = 0;
};

// Corpus BLEU: clipped n-gram counts pooled over the corpus, geometric mean,
// BP = min(1, exp(1 - r/c)). Zero if any pooled precision is zero.
BleuDetail bleu_detail(const std::vector<TokenSequence>& hyps,
                       const std::vector<TokenSequence>& refs, std::size_t max_n = 4);
double bleu(const std::vector<TokenSequence>& hyps, const std::vector<TokenSequence>& refs,
            std::size_t max_n = 4);

// Single pair with add-one smoothing of numerator and denominator for n >= 2.
double sentence_bleu(const TokenSequence& hyp, const TokenSequence& ref, std::size_t max_n = 4);

std::size_t levenshtein(std::span<const std::size_t> a, std::span<const std::size_t> b);

TokenSequence unit_tokens(const UnitSequence& u);

struct UnitMetrics {
  double unit_bleu = 0.0;
  double unit_error_rate = 0.0;
};

UnitMetrics unit_metrics(const UnitSequence& hyp, const UnitSequence& ref);

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  // Throws kTranscriberFailure when the utterance cannot be transcribed.
  virtual TokenSequence transcribe(const Waveform& w) = 0;
};

// Closed-vocabulary stand-in for ASR: re-quantizes the audio and returns the
// transcript whose reference unit sequence is nearest in edit distance (ties
// go to the earliest reference).
class OracleTranscriber : public Transcriber {
 public:
  struct Entry {
    UnitSequence units;  // reduced
    std::string transcript;
  };

  OracleTranscriber(Codebook cb, std::vector<Entry> entries);
  // Reference units from each record's target audio, transcript = tgt_text.
  static OracleTranscriber from_manifest(const Manifest& m, const Codebook& cb);

  TokenSequence transcribe(const Waveform& w) override;
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  Codebook cb_;
  std::vector<Entry> entries_;
};

// Runs `command <wav>`; stdout is the transcript, nonzero exit a failure.
class ExternalTranscriber : public Transcriber {
 public:
  explicit ExternalTranscriber(std::string command) : command_(std::move(command)) {}
  TokenSequence transcribe(const Waveform& w) override;

 private:
  std::string command_;
};

struct UtteranceResult {
  std::string id;
  std::string reference;
  std::string hypothesis;
  std::vector<std::size_t> units;
  std::optional<UnitMetrics> unit;
  bool failed = false;
  std::string error;
};

struct AsrBleuReport {
  double corpus_bleu = 0.0;
  std::optional<double> unit_bleu;
  std::optional<double> uer;  // total edits / total reference units
  std::size_t n_utts = 0;
  std::size_t n_failed = 0;
  std::vector<UtteranceResult> per_utt;

  nlohmann::ordered_json to_json() const;
};

// speak -> transcribe -> corpus BLEU against tgt_text. Unit metrics are
// added when records carry target audio. Transcriber failures are recorded
// and excluded.
AsrBleuReport asr_bleu(const Manifest& m, const S2stModel& model, const Codebook& cb,
                       const DecodeConfig& dc, Vocoder& vocoder, Transcriber& transcriber);

}  // namespace s2st
