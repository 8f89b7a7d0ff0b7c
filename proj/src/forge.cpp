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

#include "s2st/forge.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "s2st/error.hpp"
#include "s2st/io.hpp"
#include "s2st/random.hpp"

namespace s2st {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> words;
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions escape
// from the lowest failing index.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::max<std::size_t>(1, std::min(workers, n));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < k; ++t) pool.emplace_back(run);
  run();
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// Calls fn up to max_attempts times with exponential backoff between
// attempts. Returns the error message of the last failure, or nullopt.
template <class Fn>
std::optional<std::string> with_retries(const StageOptions& opts, std::atomic<std::size_t>& calls,
                                        Fn fn) {
  std::string last;
  auto delay = opts.backoff;
  for (std::size_t attempt = 1; attempt <= std::max<std::size_t>(1, opts.max_attempts);
       ++attempt) {
    ++calls;
    try {
      fn();
      return std::nullopt;
    } catch (const Error& e) {
      if (e.code() != Errc::kProviderFailure) throw;
      last = e.what();
    }
    if (attempt < opts.max_attempts && delay.count() > 0) {
      std::this_thread::sleep_for(delay);
      delay *= 2;
    }
  }
  return last;
}

struct Endpoint {
  std::string scheme_host_port;
  std::string path;
};

Endpoint parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(http://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(Errc::kConfig, "endpoint must be an http:// URL: " + url);
  }
  return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

httplib::Result post_json(const HttpProviderConfig& cfg, const json& body) {
  const Endpoint ep = parse_endpoint(cfg.endpoint);
  httplib::Client cli(ep.scheme_host_port);
  cli.set_connection_timeout(cfg.timeout);
  cli.set_read_timeout(cfg.timeout);
  httplib::Headers headers;
  if (!cfg.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = cli.Post(ep.path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::kProviderFailure,
                cfg.endpoint + ": " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::kProviderFailure,
                cfg.endpoint + " returned HTTP " + std::to_string(res->status));
  }
  return res;
}

}  // namespace

const std::map<std::string, std::string>& toy_dictionary() {
  static const std::map<std::string, std::string> dict = {
      {"سلام", "hello"}, {"دوست", "friend"}, {"من", "i"},       {"تو", "you"},
      {"کتاب", "book"},  {"آب", "water"},    {"خانه", "house"}, {"نان", "bread"},
      {"خوب", "good"},   {"بزرگ", "big"},    {"سبز", "green"},  {"دارم", "have"},
  };
  return dict;
}

MockTranslationProvider::MockTranslationProvider(std::map<std::string, std::string> dict)
    : forward_(std::move(dict)) {
  for (const auto& [src, tgt] : forward_) {
    if (!inverse_.emplace(tgt, src).second) {
      throw Error(Errc::kConfig, "mock dictionary is not bijective at " + tgt);
    }
  }
}

std::string MockTranslationProvider::translate(const std::string& text, const std::string&,
                                               const std::string&) {
  ++calls_;
  std::vector<std::string> out;
  for (const auto& w : split_words(text)) {
    auto it = forward_.find(w);
    if (it == forward_.end()) throw Error(Errc::kProviderFailure, "unknown word '" + w + "'");
    out.push_back(it->second);
  }
  return join_words(out);
}

std::string MockTranslationProvider::invert(const std::string& text) const {
  std::vector<std::string> out;
  for (const auto& w : split_words(text)) {
    auto it = inverse_.find(w);
    if (it == inverse_.end()) throw Error(Errc::kProviderFailure, "unknown word '" + w + "'");
    out.push_back(it->second);
  }
  return join_words(out);
}

Waveform MockTtsProvider::synthesize(const std::string& text,
                                     const std::optional<fs::path>&) {
  ++calls_;
  const auto words = split_words(text);
  if (words.empty()) throw Error(Errc::kProviderFailure, "nothing to synthesize");

  constexpr std::size_t kGrid = 32;
  const double low_mel = hz_to_mel(300.0);
  const double high_mel = hz_to_mel(3600.0);
  const std::size_t tone_len = static_cast<std::size_t>(
      std::lround(kWordSeconds * kSampleRate / static_cast<double>(kTonesPerWord)));
  const std::size_t fade = 80;

  Waveform w;
  w.samples.reserve(words.size() * tone_len * kTonesPerWord);
  Rng dither(fnv1a(text.data(), text.size()));
  for (const auto& word : words) {
    const std::uint64_t h = fnv1a(word.data(), word.size());
    std::size_t prev = kGrid;
    for (std::size_t k = 0; k < kTonesPerWord; ++k) {
      std::size_t idx = (h >> (16 * k)) % kGrid;
      if (idx == prev) idx = (idx + 1) % kGrid;
      prev = idx;
      const double mel = low_mel + (high_mel - low_mel) * static_cast<double>(idx) /
                                       static_cast<double>(kGrid - 1);
      const double freq = mel_to_hz(mel);
      for (std::size_t n = 0; n < tone_len; ++n) {
        double env = 1.0;
        if (n < fade) env = 0.5 - 0.5 * std::cos(std::numbers::pi * n / fade);
        if (n >= tone_len - fade) {
          env = 0.5 - 0.5 * std::cos(std::numbers::pi * (tone_len - 1 - n) / fade);
        }
        const double s = 0.5 * env *
                             std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(n) /
                                      kSampleRate) +
                         uniform(dither, -1e-3, 1e-3);
        w.samples.push_back(static_cast<float>(s));
      }
    }
  }
  return w;
}

HttpTranslationProvider::HttpTranslationProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
  parse_endpoint(cfg_.endpoint);
}

std::string HttpTranslationProvider::translate(const std::string& text,
                                               const std::string& src_lang,
                                               const std::string& tgt_lang) {
  const json body = {
      {"text", text}, {"src_lang", src_lang}, {"tgt_lang", tgt_lang}, {"prompt", cfg_.prompt}};
  auto res = post_json(cfg_, body);
  const json reply = json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("text") || !reply["text"].is_string()) {
    throw Error(Errc::kProviderFailure, cfg_.endpoint + " reply has no text field");
  }
  return reply["text"].get<std::string>();
}

HttpTtsProvider::HttpTtsProvider(HttpProviderConfig cfg) : cfg_(std::move(cfg)) {
  parse_endpoint(cfg_.endpoint);
}

Waveform HttpTtsProvider::synthesize(const std::string& text,
                                     const std::optional<fs::path>& voice_ref) {
  json body = {{"text", text}};
  if (voice_ref) body["voice_ref"] = voice_ref->string();
  auto res = post_json(cfg_, body);
  Waveform w;
  try {
    w = parse_wav(res->body);
  } catch (const Error& e) {
    throw Error(Errc::kProviderFailure, cfg_.endpoint + " returned invalid audio: " + e.what());
  }
  return w.sample_rate == kSampleRate ? w : resample(w, kSampleRate);
}

CleanResult clean_source(const Manifest& m, const FilterPolicy& policy) {
  if (!(policy.min_duration_s < policy.max_duration_s)) {
    throw Error(Errc::kConfig, "filter policy needs min_duration_s < max_duration_s");
  }
  CleanResult out;
  for (const auto& r : m.records) {
    std::string reason;
    const auto src_words = split_words(r.src_text).size();
    if (src_words == 0) {
      reason = "empty_text";
    } else if (r.duration_s < policy.min_duration_s) {
      reason = "too_short";
    } else if (r.duration_s > policy.max_duration_s) {
      reason = "too_long";
    } else if (policy.check_audio) {
      try {
        load_wav(r.src_audio);
      } catch (const Error&) {
        reason = "unreadable_audio";
      }
    }
    if (reason.empty() && r.tgt_text) {
      const auto tgt_words = split_words(*r.tgt_text).size();
      if (tgt_words == 0) {
        if (policy.reject_empty_translation) reason = "empty_translation";
      } else {
        const double a = static_cast<double>(src_words);
        const double b = static_cast<double>(tgt_words);
        if (std::max(a, b) / std::min(a, b) > policy.max_text_ratio) reason = "text_ratio";
      }
    }
    if (reason.empty()) {
      out.kept.records.push_back(r);
    } else {
      out.rejected.push_back({r.id, reason});
    }
  }
  return out;
}

Manifest translate_manifest(const Manifest& m, TranslationProvider& provider,
                            const Manifest* resume, const StageOptions& opts,
                            StageReport* report) {
  std::map<std::string, std::string> done;
  if (resume) {
    for (const auto& r : resume->records) {
      if (r.tgt_text) done[r.id] = *r.tgt_text;
    }
  }
  std::vector<ManifestRecord> records = m.records;
  std::vector<std::size_t> todo;
  StageReport local;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].tgt_text) {
      ++local.reused;
    } else if (auto it = done.find(records[i].id); it != done.end()) {
      records[i].tgt_text = it->second;
      ++local.reused;
    } else {
      todo.push_back(i);
    }
  }

  std::atomic<std::size_t> calls{0};
  std::vector<std::optional<std::string>> failure(todo.size());
  parallel_for(todo.size(), opts.parallelism, [&](std::size_t k) {
    ManifestRecord& r = records[todo[k]];
    failure[k] = with_retries(opts, calls, [&] {
      r.tgt_text = provider.translate(r.src_text, opts.src_lang, opts.tgt_lang);
    });
  });
  local.provider_calls = calls.load();

  std::set<std::size_t> drop;
  for (std::size_t k = 0; k < todo.size(); ++k) {
    if (failure[k]) {
      drop.insert(todo[k]);
      local.dropped.push_back({records[todo[k]].id, *failure[k]});
    }
  }
  if (!todo.empty() && static_cast<double>(drop.size()) >
                           opts.max_failure_fraction * static_cast<double>(todo.size())) {
    if (report) *report = local;
    throw Error(Errc::kProviderUnavailable,
                std::to_string(drop.size()) + " of " + std::to_string(todo.size()) +
                    " translations failed: " + local.dropped.front().reason);
  }
  Manifest out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!drop.count(i)) out.records.push_back(std::move(records[i]));
  }
  if (report) *report = local;
  return out;
}

Manifest synthesize_manifest(const Manifest& m, TtsProvider& provider, const fs::path& out_dir,
                             const StageOptions& opts, StageReport* report) {
  fs::create_directories(out_dir);
  const fs::path dir = fs::absolute(out_dir).lexically_normal();
  std::vector<ManifestRecord> records = m.records;
  std::vector<std::optional<std::string>> failure(records.size());
  std::vector<char> wrote(records.size(), 0);
  std::vector<char> reused(records.size(), 0);
  std::atomic<std::size_t> calls{0};

  parallel_for(records.size(), opts.parallelism, [&](std::size_t i) {
    ManifestRecord& r = records[i];
    if (!r.tgt_text) {
      failure[i] = "no_tgt_text";
      return;
    }
    if (!r.id.starts_with(opts.id_prefix)) r.id = opts.id_prefix + r.id;
    const fs::path wav_path = dir / (r.id + ".wav");
    std::optional<Waveform> wav;
    if (fs::exists(wav_path)) {
      try {
        wav = load_wav(wav_path);
        reused[i] = 1;
      } catch (const Error&) {
        wav.reset();
      }
    }
    if (!wav) {
      failure[i] = with_retries(opts, calls, [&] {
        wav = provider.synthesize(*r.tgt_text, r.src_audio);
      });
      if (failure[i]) return;
      wrote[i] = io::write_file_atomic(wav_path, encode_wav(*wav)) ? 1 : 0;
    }
    r.tgt_audio = wav_path;
    r.tgt_duration_s = wav->duration_s();
    r.origin = "synthetic";
  });

  StageReport local;
  local.provider_calls = calls.load();
  Manifest out;
  std::size_t attempted = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!reused[i]) ++attempted;
    local.reused += reused[i];
    local.files_written += wrote[i];
    if (failure[i]) {
      local.dropped.push_back({records[i].id, *failure[i]});
    } else {
      out.records.push_back(std::move(records[i]));
    }
  }
  if (report) *report = local;
  if (attempted > 0 && static_cast<double>(local.dropped.size()) >
                           opts.max_failure_fraction * static_cast<double>(attempted)) {
    throw Error(Errc::kProviderUnavailable,
                std::to_string(local.dropped.size()) + " of " + std::to_string(attempted) +
                    " syntheses failed: " + local.dropped.front().reason);
  }
  check_unique_ids(out);
  return out;
}

MergeStats corpus_stats(const Manifest& m) {
  MergeStats s;
  double real_s = 0.0;
  double syn_s = 0.0;
  for (const auto& r : m.records) {
    if (r.origin == "synthetic") {
      syn_s += r.duration_s;
      ++s.synthetic_records;
    } else {
      real_s += r.duration_s;
      ++s.real_records;
    }
  }
  s.real_hours = real_s / 3600.0;
  s.synthetic_hours = syn_s / 3600.0;
  if (s.synthetic_hours == 0.0) {
    s.ratio = 0.0;
  } else {
    s.ratio = s.real_hours > 0.0 ? s.synthetic_hours / s.real_hours
                                 : std::numeric_limits<double>::infinity();
  }
  return s;
}

Manifest merge_corpora(const Manifest& real, const Manifest& synthetic, MergeStats* stats) {
  Manifest out = real;
  out.records.insert(out.records.end(), synthetic.records.begin(), synthetic.records.end());
  check_unique_ids(out);
  if (stats) *stats = corpus_stats(out);
  return out;
}

void write_toy_corpus(const fs::path& dir, const ToyCorpusOptions& opts) {
  if (opts.min_words == 0 || opts.min_words > opts.max_words) {
    throw Error(Errc::kConfig, "toy corpus word range is empty");
  }
  std::vector<std::string> vocab;
  for (const auto& [fa, en] : toy_dictionary()) vocab.push_back(fa);

  Rng rng(opts.seed);
  std::set<std::string> seen;
  std::vector<std::string> sentences;
  while (sentences.size() < opts.n_train + opts.n_dev) {
    const auto n = static_cast<std::size_t>(uniform_int(
        rng, static_cast<std::int64_t>(opts.min_words), static_cast<std::int64_t>(opts.max_words)));
    std::vector<std::string> words;
    for (std::size_t i = 0; i < n; ++i) words.push_back(vocab[uniform_index(rng, vocab.size())]);
    std::string s = join_words(words);
    if (seen.insert(s).second) sentences.push_back(std::move(s));
  }

  fs::create_directories(dir / "src");
  fs::create_directories(dir / "tgt");
  MockTranslationProvider mt;
  MockTtsProvider tts;
  Manifest train;
  Manifest dev;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const bool is_dev = i >= opts.n_train;
    char id[32];
    std::snprintf(id, sizeof(id), "%s-%03zu", is_dev ? "dev" : "toy",
                  is_dev ? i - opts.n_train : i);
    ManifestRecord r;
    r.id = id;
    r.src_text = sentences[i];
    r.tgt_text = mt.translate(r.src_text, "fa", "en");
    const Waveform src = tts.synthesize(r.src_text, std::nullopt);
    const Waveform tgt = tts.synthesize(*r.tgt_text, std::nullopt);
    r.src_audio = fs::absolute(dir / "src" / (r.id + ".wav")).lexically_normal();
    r.tgt_audio = fs::absolute(dir / "tgt" / (r.id + ".wav")).lexically_normal();
    io::write_file_atomic(r.src_audio, encode_wav(src));
    io::write_file_atomic(*r.tgt_audio, encode_wav(tgt));
    r.duration_s = src.duration_s();
    r.tgt_duration_s = tgt.duration_s();
    (is_dev ? dev : train).records.push_back(std::move(r));
  }
  write_manifest(dir / "manifest.jsonl", train);
  write_manifest(dir / "dev.jsonl", dev);
}

}  // namespace s2st
