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

// s2st: command-line driver for every pipeline stage.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "s2st/config.hpp"
#include "s2st/eval.hpp"
#include "s2st/forge.hpp"
#include "s2st/io.hpp"
#include "s2st/synthesis.hpp"
#include "s2st/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace s2st;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::pair<std::string, std::string>> overrides;
};

Config load_config(const Common& c) {
  Config cfg = c.config.empty() ? Config() : Config::load(c.config);
  if (c.seed) cfg.set("run.seed", std::to_string(*c.seed));
  for (const auto& [key, value] : c.overrides) cfg.set(key, value);
  return cfg;
}

fs::path existing_path(const Config& cfg, const std::string& key) {
  const fs::path p = cfg.require_path(key);
  if (!fs::exists(p)) throw Error(Errc::kConfig, "config key " + key + ": not found: " + p.string());
  return p;
}

fs::path codebook_path(const Config& cfg) {
  return cfg.get_path("quantizer.codebook").value_or(cfg.work_dir() / "codebook");
}

Codebook load_existing_codebook(const Config& cfg) {
  const fs::path p = codebook_path(cfg);
  if (!fs::exists(p)) {
    throw Error(Errc::kConfig,
                "config key quantizer.codebook: not found: " + p.string() + " (run quantize first)");
  }
  return load_codebook(p);
}

fs::path pretrain_dir(const Config& cfg) {
  return cfg.get_path("pretrain.out").value_or(cfg.work_dir() / "pretrain");
}

fs::path train_dir(const Config& cfg) {
  return cfg.get_path("train.out").value_or(cfg.work_dir() / "train");
}

fs::path model_path(const Config& cfg) {
  return cfg.get_path("eval.model").value_or(train_dir(cfg) / "best.ckpt");
}

void write_json(const fs::path& path, const ordered_json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, j.dump(2) + "\n");
}

void write_rejections(const fs::path& path, const std::vector<Rejection>& rows) {
  std::string text;
  for (const auto& r : rows) {
    ordered_json j;
    j["id"] = r.id;
    j["reason"] = r.reason;
    text += j.dump() + "\n";
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_file_atomic(path, text);
}

std::unique_ptr<TranslationProvider> translation_provider(const Config& cfg) {
  const std::string kind = cfg.get_string("forge.translation_provider", "mock");
  if (kind == "mock") return std::make_unique<MockTranslationProvider>();
  if (kind == "http") {
    return std::make_unique<HttpTranslationProvider>(http_provider_config(cfg, "translation"));
  }
  throw Error(Errc::kConfig, "forge.translation_provider must be mock or http, got '" + kind + "'");
}

std::unique_ptr<TtsProvider> tts_provider(const Config& cfg) {
  const std::string kind = cfg.get_string("forge.tts_provider", "mock");
  if (kind == "mock") return std::make_unique<MockTtsProvider>();
  if (kind == "http") return std::make_unique<HttpTtsProvider>(http_provider_config(cfg, "tts"));
  throw Error(Errc::kConfig, "forge.tts_provider must be mock or http, got '" + kind + "'");
}

std::unique_ptr<Vocoder> vocoder(const Config& cfg) {
  return make_vocoder(cfg.get_string("synthesis.vocoder", "griffin_lim"), synthesis_config(cfg),
                      cfg.get_string("synthesis.vocoder_command"));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

// ---- commands ----------------------------------------------------------------

int cmd_toy_corpus(const std::string& out, const ToyCorpusOptions& opts) {
  write_toy_corpus(out, opts);
  std::cout << "toy-corpus: " << opts.n_train << " train + " << opts.n_dev << " dev pairs -> "
            << out << "\n";
  return 0;
}

int cmd_forge_clean(const Common& common, const std::string& in, const std::string& out,
                    std::string rejections) {
  const Config cfg = load_config(common);
  const CleanResult r = clean_source(read_manifest(in), filter_policy(cfg));
  write_manifest(out, r.kept);
  if (rejections.empty()) rejections = out + ".rejections.jsonl";
  write_rejections(rejections, r.rejected);
  std::cout << "forge-clean: kept " << r.kept.size() << ", rejected " << r.rejected.size()
            << " -> " << out << "\n";
  return 0;
}

int cmd_forge_translate(const Common& common, const std::string& in, const std::string& out) {
  const Config cfg = load_config(common);
  const Manifest src = read_manifest(in);
  std::optional<Manifest> resume;
  if (fs::exists(out)) resume = read_manifest(out);
  auto provider = translation_provider(cfg);
  StageReport rep;
  const Manifest m =
      translate_manifest(src, *provider, resume ? &*resume : nullptr, stage_options(cfg), &rep);
  write_manifest(out, m);
  if (!rep.dropped.empty()) write_rejections(out + ".dropped.jsonl", rep.dropped);
  for (const auto& d : rep.dropped) std::cerr << "dropped " << d.id << ": " << d.reason << "\n";
  std::cout << "forge-translate: " << m.size() << " records, " << rep.provider_calls
            << " provider calls, " << rep.reused << " reused, " << rep.dropped.size()
            << " dropped -> " << out << "\n";
  return 0;
}

int cmd_forge_tts(const Common& common, const std::string& in, const std::string& out,
                  std::string audio_dir) {
  const Config cfg = load_config(common);
  if (audio_dir.empty()) audio_dir = (fs::path(out).parent_path() / "audio").string();
  auto provider = tts_provider(cfg);
  StageReport rep;
  const Manifest m =
      synthesize_manifest(read_manifest(in), *provider, audio_dir, stage_options(cfg), &rep);
  write_manifest(out, m);
  if (!rep.dropped.empty()) write_rejections(out + ".dropped.jsonl", rep.dropped);
  for (const auto& d : rep.dropped) std::cerr << "dropped " << d.id << ": " << d.reason << "\n";
  std::cout << "forge-tts: " << m.size() << " records, " << rep.files_written
            << " files written, " << rep.reused << " reused, " << rep.dropped.size()
            << " dropped -> " << out << "\n";
  return 0;
}

int cmd_forge_merge(const std::string& real, const std::string& synthetic, const std::string& out,
                    std::string stats_path) {
  MergeStats stats;
  const Manifest m = merge_corpora(read_manifest(real), read_manifest(synthetic), &stats);
  write_manifest(out, m);
  if (stats_path.empty()) stats_path = out + ".stats.json";
  ordered_json j;
  j["real_records"] = stats.real_records;
  j["synthetic_records"] = stats.synthetic_records;
  j["real_hours"] = stats.real_hours;
  j["synthetic_hours"] = stats.synthetic_hours;
  j["ratio"] = stats.ratio;
  write_json(stats_path, j);
  std::cout << "forge-merge: " << m.size() << " records, synthetic/real ratio "
            << fmt(stats.ratio) << " -> " << out << "\n";
  return 0;
}

int cmd_quantize(const Common& common) {
  const Config cfg = load_config(common);
  const Manifest m = read_manifest(existing_path(cfg, "data.manifest"));
  std::vector<double> feats;
  std::size_t n = 0;
  for (const auto& r : m.records) {
    if (!r.tgt_audio) continue;
    const MelSpectrogram mel = log_mel(load_audio_16k(*r.tgt_audio));
    feats.insert(feats.end(), mel.frames.begin(), mel.frames.end());
    n += mel.n_frames;
  }
  const KMeansOptions opts = kmeans_options(cfg);
  const KMeansResult km = kmeans_fit(feats, MelConfig{}.n_mels, opts);
  const fs::path out = codebook_path(cfg);
  save_codebook(out, km.codebook);
  ordered_json stats;
  stats["k"] = km.codebook.k;
  stats["frames"] = n;
  stats["iterations"] = km.iterations;
  stats["distortion"] = km.distortion;
  stats["hash"] = io::hex64(km.codebook.hash());
  write_json(out.string() + ".stats.json", stats);
  std::cout << "quantize: K=" << km.codebook.k << " over " << n << " frames, distortion "
            << fmt(km.distortion.back()) << " after " << km.iterations << " iterations -> "
            << out.string() << "\n";
  return 0;
}

int cmd_pretrain(const Common& common) {
  const Config cfg = load_config(common);
  const Manifest m = read_manifest(existing_path(cfg, "data.manifest"));
  std::vector<MelSpectrogram> mels;
  for (const auto& r : m.records) mels.push_back(log_mel(load_audio_16k(r.src_audio)));
  S2stModel model(model_config(cfg), cfg.seed());
  const fs::path out = pretrain_dir(cfg);
  const PretrainConfig pc = pretrain_config(cfg);
  const PretrainResult r = pretrain(model, mels, pc, out);
  std::cout << "pretrain: " << pc.steps << " steps";
  if (!r.losses.empty()) {
    std::cout << ", loss " << fmt(r.losses.front()) << " -> " << fmt(r.losses.back());
  }
  std::cout << " -> " << (out / "encoder.ckpt").string() << "\n";
  return 0;
}

int cmd_train(const Common& common) {
  const Config cfg = load_config(common);
  const fs::path manifest_path = existing_path(cfg, "data.manifest");
  const Manifest m = read_manifest(manifest_path);
  const Codebook cb = load_existing_codebook(cfg);
  ModelConfig mc = model_config(cfg);
  if (mc.decoder.n_units != cb.k) {
    throw Error(Errc::kConfig, "quantizer.k is " + std::to_string(mc.decoder.n_units) +
                                   " but the codebook has " + std::to_string(cb.k) + " units");
  }
  fs::create_directories(cfg.work_dir());
  const auto cache = unit_cache_path(cfg.work_dir() / manifest_path.filename(), cb);
  std::vector<Example> all = prepare_examples(m, cb, cache);

  std::vector<Example> train_set;
  std::vector<Example> dev_set;
  if (auto dev_path = cfg.get_path("data.dev_manifest")) {
    if (!fs::exists(*dev_path)) {
      throw Error(Errc::kConfig, "config key data.dev_manifest: not found: " + dev_path->string());
    }
    train_set = std::move(all);
    dev_set = prepare_examples(read_manifest(*dev_path), cb,
                               unit_cache_path(cfg.work_dir() / dev_path->filename(), cb));
  } else {
    const std::string split = cfg.get_string("data.dev_split", "hash");
    if (split == "train") {
      dev_set = all;
      train_set = std::move(all);
    } else if (split == "hash") {
      for (auto& ex : all) (in_hash_dev_split(ex.id) ? dev_set : train_set).push_back(std::move(ex));
    } else {
      throw Error(Errc::kConfig, "data.dev_split must be hash or train, got '" + split + "'");
    }
  }

  S2stModel model(mc, cfg.seed());
  model.codebook_hash = io::hex64(cb.hash());
  if (auto enc = cfg.get_path("train.init_encoder")) {
    if (!fs::exists(*enc)) {
      throw Error(Errc::kConfig, "config key train.init_encoder: not found: " + enc->string());
    }
    model.load_encoder(*enc);
  }
  const fs::path out = train_dir(cfg);
  const TrainConfig tc = train_config(cfg);
  const TrainResult r = train(model, train_set, dev_set, tc, out);
  std::cout << "train: " << tc.epochs << " epochs on " << train_set.size() << " utterances, "
            << "final loss " << fmt(r.history.back().train_loss) << ", best dev_acc "
            << fmt(r.best_dev_acc) << " at epoch " << r.best_epoch << " -> "
            << (out / "best.ckpt").string() << "\n";
  return 0;
}

int cmd_translate(const Common& common, const std::string& model_arg, const std::string& input,
                  const std::string& output, const std::string& manifest_arg,
                  const std::string& out_dir) {
  const Config cfg = load_config(common);
  const fs::path mp = model_arg.empty() ? model_path(cfg) : fs::path(model_arg);
  if (!fs::exists(mp)) throw Error(Errc::kConfig, "model checkpoint not found: " + mp.string());
  const auto model = S2stModel::load(mp);
  const Codebook cb = load_existing_codebook(cfg);
  const DecodeConfig dc = decode_config(cfg);
  auto voc = vocoder(cfg);

  std::vector<std::pair<std::string, fs::path>> jobs;
  fs::path dir;
  if (!manifest_arg.empty()) {
    if (out_dir.empty()) throw Error(Errc::kConfig, "--manifest needs --out-dir");
    for (const auto& r : read_manifest(manifest_arg).records) jobs.emplace_back(r.id, r.src_audio);
    dir = out_dir;
  } else {
    if (input.empty() || output.empty()) {
      throw Error(Errc::kConfig, "translate needs --input and --output, or --manifest");
    }
    jobs.emplace_back(fs::path(output).stem().string(), input);
  }
  std::string units_text;
  std::size_t empty = 0;
  for (const auto& [id, src] : jobs) {
    SpeakDetail detail;
    const Waveform w = speak(load_audio_16k(src), *model, cb, dc, *voc, &detail);
    if (detail.empty_output) {
      ++empty;
      std::cerr << "warning: " << id << " decoded to an empty unit sequence\n";
    }
    const fs::path wav = dir.empty() ? fs::path(output) : dir / (id + ".wav");
    if (wav.has_parent_path()) fs::create_directories(wav.parent_path());
    io::write_file_atomic(wav, encode_wav(w));
    ordered_json j;
    j["id"] = id;
    j["units"] = detail.units.units;
    j["wav"] = wav.string();
    units_text += j.dump() + "\n";
  }
  const fs::path units_path =
      dir.empty() ? fs::path(output + ".units.jsonl") : dir / "units.jsonl";
  io::write_file_atomic(units_path, units_text);
  std::cout << "translate: " << jobs.size() << " utterances, " << empty << " empty -> "
            << (dir.empty() ? output : dir.string()) << "\n";
  return 0;
}

int cmd_eval(const Common& common, const std::string& manifest_arg, const std::string& model_arg,
             const std::string& report_arg) {
  const Config cfg = load_config(common);
  fs::path manifest_path;
  if (!manifest_arg.empty()) {
    manifest_path = manifest_arg;
  } else if (cfg.has("eval.manifest")) {
    manifest_path = existing_path(cfg, "eval.manifest");
  } else if (cfg.has("data.dev_manifest")) {
    manifest_path = existing_path(cfg, "data.dev_manifest");
  } else {
    manifest_path = existing_path(cfg, "data.manifest");
  }
  const Manifest m = read_manifest(manifest_path);
  const fs::path mp = model_arg.empty() ? model_path(cfg) : fs::path(model_arg);
  if (!fs::exists(mp)) throw Error(Errc::kConfig, "model checkpoint not found: " + mp.string());
  const auto model = S2stModel::load(mp);
  const Codebook cb = load_existing_codebook(cfg);
  auto voc = vocoder(cfg);

  std::unique_ptr<Transcriber> asr;
  const std::string kind = cfg.get_string("eval.transcriber", "oracle");
  if (kind == "oracle") {
    Manifest refs = cfg.has("eval.oracle_manifest")
                        ? read_manifest(existing_path(cfg, "eval.oracle_manifest"))
                        : read_manifest(existing_path(cfg, "data.manifest"));
    for (const auto& r : m.records) {
      if (!refs.find(r.id)) refs.records.push_back(r);
    }
    asr = std::make_unique<OracleTranscriber>(OracleTranscriber::from_manifest(refs, cb));
  } else if (kind == "external") {
    const std::string cmd = cfg.get_string("eval.transcriber_command");
    if (cmd.empty()) throw Error(Errc::kConfig, "config key eval.transcriber_command is required");
    asr = std::make_unique<ExternalTranscriber>(cmd);
  } else {
    throw Error(Errc::kConfig, "eval.transcriber must be oracle or external, got '" + kind + "'");
  }

  const AsrBleuReport rep = asr_bleu(m, *model, cb, decode_config(cfg), *voc, *asr);
  const fs::path report = !report_arg.empty() ? fs::path(report_arg)
                                               : cfg.get_path("eval.report").value_or(
                                                     cfg.work_dir() / "eval" / "report.json");
  write_json(report, rep.to_json());
  std::cout << "eval: corpus_bleu=" << fmt(rep.corpus_bleu);
  if (rep.unit_bleu) std::cout << " unit_bleu=" << fmt(*rep.unit_bleu) << " uer=" << fmt(*rep.uer);
  std::cout << " n_utts=" << rep.n_utts << " n_failed=" << rep.n_failed << " -> "
            << report.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct speech-to-speech translation over discrete units"};
  app.require_subcommand(1);
  Common common;
  std::optional<std::uint64_t> seed;

  auto add_common = [&](CLI::App* sub, bool need_config) {
    auto* opt = sub->add_option("--config", common.config, "INI configuration file");
    if (need_config) opt->required();
    sub->add_option("--seed", seed, "seed for every stochastic component");
  };

  ToyCorpusOptions toy;
  std::string toy_out;
  auto* toy_cmd = app.add_subcommand("toy-corpus", "write the bundled toy corpus");
  toy_cmd->add_option("--out", toy_out, "output directory")->required();
  toy_cmd->add_option("--seed", toy.seed, "sentence sampling seed");
  toy_cmd->add_option("--n-train", toy.n_train, "training pairs");
  toy_cmd->add_option("--n-dev", toy.n_dev, "dev pairs");

  std::string in, out, extra, extra2;
  auto* clean = app.add_subcommand("forge-clean", "filter a source manifest");
  add_common(clean, false);
  clean->add_option("--in", in, "input manifest")->required();
  clean->add_option("--out", out, "cleaned manifest")->required();
  clean->add_option("--rejections", extra, "rejection log (JSON lines)");

  auto* translate_stage = app.add_subcommand("forge-translate", "translate transcripts");
  add_common(translate_stage, false);
  translate_stage->add_option("--in", in, "input manifest")->required();
  translate_stage->add_option("--out", out, "output manifest (also the resume state)")->required();

  auto* tts_stage = app.add_subcommand("forge-tts", "synthesize target speech");
  add_common(tts_stage, false);
  tts_stage->add_option("--in", in, "translated manifest")->required();
  tts_stage->add_option("--out", out, "output manifest")->required();
  tts_stage->add_option("--audio-dir", extra, "directory for synthesized WAVs");

  auto* merge = app.add_subcommand("forge-merge", "merge real and synthetic manifests");
  merge->add_option("--real", in, "real manifest")->required();
  merge->add_option("--synthetic", extra, "synthetic manifest")->required();
  merge->add_option("--out", out, "merged manifest")->required();
  merge->add_option("--stats", extra2, "stats JSON path");

  std::optional<std::size_t> k, steps, epochs, max_frames, beam;
  std::string init_encoder, model, input, output, manifest, out_dir, report;

  auto* quantize = app.add_subcommand("quantize", "fit the unit codebook");
  add_common(quantize, true);
  quantize->add_option("--k", k, "codebook size");
  quantize->add_option("--out", out, "codebook directory");

  auto* pre = app.add_subcommand("pretrain", "contrastive encoder pretraining");
  add_common(pre, true);
  pre->add_option("--steps", steps, "optimizer steps");
  pre->add_option("--out", out, "output directory");

  auto* train_cmd = app.add_subcommand("train", "train the translation model");
  add_common(train_cmd, true);
  train_cmd->add_option("--epochs", epochs, "epochs");
  train_cmd->add_option("--max-frames", max_frames, "frame budget per batch");
  train_cmd->add_option("--init-encoder", init_encoder, "pretrained encoder checkpoint");
  train_cmd->add_option("--out", out, "output directory");

  auto* tr = app.add_subcommand("translate", "translate speech to speech");
  add_common(tr, true);
  tr->add_option("--model", model, "model checkpoint");
  tr->add_option("--input", input, "source WAV");
  tr->add_option("--output", output, "output WAV");
  tr->add_option("--manifest", manifest, "translate every record of a manifest");
  tr->add_option("--out-dir", out_dir, "output directory for --manifest");
  tr->add_option("--beam", beam, "beam size (1 = greedy)");

  auto* ev = app.add_subcommand("eval", "ASR-BLEU evaluation");
  add_common(ev, true);
  ev->add_option("--manifest", manifest, "evaluation manifest");
  ev->add_option("--model", model, "model checkpoint");
  ev->add_option("--report", report, "report JSON path");
  ev->add_option("--beam", beam, "beam size (1 = greedy)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  common.seed = seed;
  try {
    auto& ov = common.overrides;
    if (k) ov.emplace_back("quantizer.k", std::to_string(*k));
    if (steps) ov.emplace_back("pretrain.steps", std::to_string(*steps));
    if (epochs) ov.emplace_back("train.epochs", std::to_string(*epochs));
    if (max_frames) ov.emplace_back("train.max_frames", std::to_string(*max_frames));
    if (!init_encoder.empty()) ov.emplace_back("train.init_encoder", fs::absolute(init_encoder).string());
    if (beam) {
      ov.emplace_back("decode.beam_size", std::to_string(*beam));
      ov.emplace_back("decode.strategy", *beam == 1 ? "greedy" : "beam");
    }
    if (!out.empty()) {
      if (quantize->parsed()) ov.emplace_back("quantizer.codebook", fs::absolute(out).string());
      if (pre->parsed()) ov.emplace_back("pretrain.out", fs::absolute(out).string());
      if (train_cmd->parsed()) ov.emplace_back("train.out", fs::absolute(out).string());
    }

    if (toy_cmd->parsed()) return cmd_toy_corpus(toy_out, toy);
    if (clean->parsed()) return cmd_forge_clean(common, in, out, extra);
    if (translate_stage->parsed()) return cmd_forge_translate(common, in, out);
    if (tts_stage->parsed()) return cmd_forge_tts(common, in, out, extra);
    if (merge->parsed()) return cmd_forge_merge(in, extra, out, extra2);
    if (quantize->parsed()) return cmd_quantize(common);
    if (pre->parsed()) return cmd_pretrain(common);
    if (train_cmd->parsed()) return cmd_train(common);
    if (tr->parsed()) return cmd_translate(common, model, input, output, manifest, out_dir);
    if (ev->parsed()) return cmd_eval(common, manifest, model, report);
  } catch (const Error& e) {
    std::cerr << "error: " << errc_name(e.code()) << ": " << e.what() << "\n";
    return e.code() == Errc::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
