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

// Synthetic parallel corpus construction: clean source manifests, translate
// transcripts, synthesize target speech, merge with real data.

#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "s2st/frontend.hpp"
#include "s2st/manifest.hpp"

namespace s2st {

// ---- providers -------------------------------------------------------------

class TranslationProvider {
 public:
  virtual ~TranslationProvider() = default;
  // Must be safe to call from several threads. Failures throw kProviderFailure.
  virtual std::string translate(const std::string& text, const std::string& src_lang,
                                const std::string& tgt_lang) = 0;
};

class TtsProvider {
 public:
  virtual ~TtsProvider() = default;
  virtual Waveform synthesize(const std::string& text,
                              const std::optional<std::filesystem::path>& voice_ref) = 0;
};

// Persian -> English word dictionary of the bundled toy corpus.
const std::map<std::string, std::string>& toy_dictionary();

// Word-by-word dictionary lookup preserving order. Unknown words throw
// kProviderFailure. Bijective dictionaries make it invertible.
class MockTranslationProvider : public TranslationProvider {
 public:
  explicit MockTranslationProvider(std::map<std::string, std::string> dict = toy_dictionary());
  std::string translate(const std::string& text, const std::string& src_lang,
                        const std::string& tgt_lang) override;
  std::string invert(const std::string& text) const;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::map<std::string, std::string> forward_;
  std::map<std::string, std::string> inverse_;
  std::atomic<std::size_t> calls_{0};
};

// Each word becomes two 75 ms tones whose frequencies are picked by word
// hash from a mel-spaced grid: exactly 0.15 s per word at 16 kHz.
class MockTtsProvider : public TtsProvider {
 public:
  static constexpr double kWordSeconds = 0.15;
  static constexpr std::size_t kTonesPerWord = 2;

  Waveform synthesize(const std::string& text,
                      const std::optional<std::filesystem::path>& voice_ref) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

struct HttpProviderConfig {
  std::string endpoint;     // http://host:port/path
  std::string api_key_env;  // name of the environment variable holding the key
  std::string prompt =
      "Translate the following Persian utterance into fluent, semantically faithful "
      "English suitable for spoken dialogue. Reply with the translation only.";
  std::chrono::seconds timeout{60};
};

// POST {text, src_lang, tgt_lang, prompt} -> {text}.
class HttpTranslationProvider : public TranslationProvider {
 public:
  explicit HttpTranslationProvider(HttpProviderConfig cfg);
  std::string translate(const std::string& text, const std::string& src_lang,
                        const std::string& tgt_lang) override;

 private:
  HttpProviderConfig cfg_;
};

// POST {text, voice_ref?} -> WAV bytes.
class HttpTtsProvider : public TtsProvider {
 public:
  explicit HttpTtsProvider(HttpProviderConfig cfg);
  Waveform synthesize(const std::string& text,
                      const std::optional<std::filesystem::path>& voice_ref) override;

 private:
  HttpProviderConfig cfg_;
};

// ---- stages ----------------------------------------------------------------

struct FilterPolicy {
  double min_duration_s = 0.5;
  double max_duration_s = 20.0;
  double max_text_ratio = 3.0;  // word-count ratio between src and tgt text
  bool reject_empty_translation = true;
  bool check_audio = true;      // try to read every source WAV
};

struct Rejection {
  std::string id;
  std::string reason;

  bool operator==(const Rejection&) const = default;
};

struct CleanResult {
  Manifest kept;
  std::vector<Rejection> rejected;
};

// Reasons: too_short, too_long, empty_text, unreadable_audio,
// empty_translation, text_ratio. Surviving records are passed through as is.
CleanResult clean_source(const Manifest& m, const FilterPolicy& policy);

struct StageOptions {
  std::size_t max_attempts = 3;
  std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
  std::size_t parallelism = 4;
  double max_failure_fraction = 0.5;
  std::string src_lang = "fa";
  std::string tgt_lang = "en";
  std::string id_prefix = "syn-";
};

struct StageReport {
  std::size_t provider_calls = 0;
  std::size_t reused = 0;
  std::size_t files_written = 0;
  std::vector<Rejection> dropped;
};

// Fills tgt_text. Records already translated in `resume` (the previous output
// manifest) are reused without calling the provider. Records that still fail
// after max_attempts are dropped; more than max_failure_fraction failures of
// the attempted records throws kProviderUnavailable.
Manifest translate_manifest(const Manifest& m, TranslationProvider& provider,
                            const Manifest* resume, const StageOptions& opts,
                            StageReport* report = nullptr);

// Writes out_dir/<id>.wav per record (ids gain opts.id_prefix), sets
// tgt_audio, tgt_duration_s and origin "synthetic". Existing readable WAVs
// are kept as they are.
Manifest synthesize_manifest(const Manifest& m, TtsProvider& provider,
                             const std::filesystem::path& out_dir, const StageOptions& opts,
                             StageReport* report = nullptr);

struct MergeStats {
  double real_hours = 0.0;
  double synthetic_hours = 0.0;
  double ratio = 0.0;  // synthetic / real
  std::size_t real_records = 0;
  std::size_t synthetic_records = 0;
};

// Concatenation; a repeated id throws kDuplicateId. Hours are source
// durations summed per origin.
Manifest merge_corpora(const Manifest& real, const Manifest& synthetic, MergeStats* stats);
MergeStats corpus_stats(const Manifest& m);

// ---- bundled toy corpus ------------------------------------------------------

struct ToyCorpusOptions {
  std::size_t n_train = 32;
  std::size_t n_dev = 8;
  std::size_t min_words = 4;
  std::size_t max_words = 5;
  std::uint64_t seed = 7;
};

// Writes manifest.jsonl (train), dev.jsonl, src/*.wav and tgt/*.wav: Persian
// sentences over the toy dictionary, their mock translations, and both sides
// rendered by the mock TTS.
void write_toy_corpus(const std::filesystem::path& dir, const ToyCorpusOptions& opts = {});

}  // namespace s2st
