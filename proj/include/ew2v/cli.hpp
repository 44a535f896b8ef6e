// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ew2v/evaluation/experiment.hpp"
#include "ew2v/training/checkpoint.hpp"

namespace ew2v::cli {

namespace fs = std::filesystem;
using training::json;

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "runs";
  std::string run_id;
  std::string data_dir;
};

// Applies "a.b.c=value" overrides; the value is parsed as JSON and falls back
// to a plain string.
inline void apply_override(json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set", "expected key.path=value, got '" + spec + "'");
  const std::string path = spec.substr(0, eq), text = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("--set", "empty key in '" + path + "'");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      break;
    }
    if (!node->contains(key)) (*node)[key] = json::object();
    node = &(*node)[key];
    if (!node->is_object()) throw ConfigError(path.substr(0, dot), "is not an object");
    start = dot + 1;
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config", "cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("config", "'" + path + "' is not valid JSON: " + e.what());
  }
}

// Config file (or `fallback` when none is given), then overrides, then --seed.
inline training::RunConfig resolve_config(const Common& c, const json& fallback = json::object()) {
  json j = c.config.empty() ? fallback : read_json_file(c.config);
  for (const auto& o : c.overrides) apply_override(j, o);
  training::RunConfig cfg = training::parse_config(j);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

inline training::Dataset resolve_data(const Common& c, const training::RunConfig& cfg) {
  if (!c.data_dir.empty()) {
    if (!fs::is_directory(c.data_dir)) throw ConfigError("data", "'" + c.data_dir + "' is not a directory");
    return training::load_dataset(c.data_dir);
  }
  return audio::synth_toy_corpus(cfg.data.corpus);
}

inline fs::path run_dir(const Common& c, const std::string& default_id) {
  const fs::path dir = fs::path(c.out_dir) / (c.run_id.empty() ? default_id : c.run_id);
  evaluation::require_writable_dir(dir);
  return dir;
}

inline void write_resolved(const fs::path& dir, const training::RunConfig& cfg, const json& extra = json::object()) {
  json j = training::to_json(cfg);
  if (!extra.empty()) j["run"] = extra;
  evaluation::write_text(dir / "resolved_config.json", j.dump(2) + "\n");
}

inline void require_arg(const std::string& value, const std::string& field) {
  if (value.empty()) throw ConfigError(field, "required");
}

inline void add_common(CLI::App* sub, Common& c, bool with_data = true) {
  sub->add_option("--config", c.config, "JSON run configuration");
  sub->add_option("--set", c.overrides, "Override a config field, e.g. --set pretrain.total_steps=50");
  sub->add_option("--seed", c.seed, "Override the run seed");
  sub->add_option("--out-dir", c.out_dir, "Output root (default: runs)");
  sub->add_option("--run-id", c.run_id, "Output subdirectory under --out-dir");
  if (with_data) sub->add_option("--data", c.data_dir, "Directory written by synth-data (default: synthesize in memory)");
}

// ---------------------------------------------------------------------------
// Subcommands

inline void cmd_synth(const Common& c, std::ostream& out) {
  const auto cfg = resolve_config(c);
  const fs::path dir = run_dir(c, "synth-data");
  write_resolved(dir, cfg);
  const auto corpus = audio::synth_toy_corpus(cfg.data.corpus);
  const auto written = audio::write_toy_corpus(corpus, dir);
  out << "wrote " << corpus.train.size() << " train and " << corpus.test.size() << " test utterances, "
      << corpus.noise.size() << " noise streams to " << dir.string() << "\n";
  (void)written;
}

inline void cmd_mix(const Common& c, const std::string& split, std::ostream& out) {
  const auto cfg = resolve_config(c);
  const auto data = resolve_data(c, cfg);
  if (split != "train" && split != "test") throw ConfigError("split", "expected train or test");
  const auto& utts = split == "train" ? data.train : data.test;
  if (utts.empty()) throw ConfigError("split", "no " + split + " utterances in the dataset");
  const fs::path dir = run_dir(c, "mix-" + split);
  write_resolved(dir, cfg, {{"split", split}});
  const auto noise = audio::select_noise(data.noise, split);
  const auto pairs = audio::build_noisy_set(utts, noise, cfg.data.snr_set, RngStream(cfg.seed).derive("mix").seed(),
                                            cfg.data.offset_policy);
  fs::create_directories(dir / "noisy");
  std::vector<audio::ManifestEntry> manifest;
  std::size_t clipped = 0;
  for (const auto& p : pairs) {
    const std::string rel = "noisy/" + p.utt_id + ".wav";
    clipped += audio::save_wav(dir / rel, p.noisy);
    manifest.push_back({p.utt_id, rel, p.transcript, p.noisy.size()});
  }
  audio::write_manifest(dir / "manifest.jsonl", manifest);
  evaluation::write_text(dir / "mixing.csv", audio::mixing_csv(pairs));
  out << "mixed " << pairs.size() << " utterances into " << dir.string() << " (" << clipped << " samples clipped on save)\n";
}

inline void save_run_checkpoint(const fs::path& path, const training::RunConfig& cfg, const std::string& kind,
                                const std::string& mode, std::uint64_t step,
                                const std::map<std::string, std::uint64_t>& counters, model::Wav2VecModel<float>& m) {
  training::Checkpoint ck{cfg, kind, mode, step, counters, {}};
  ck.model = m;
  training::save_checkpoint(path, ck);
}

inline void cmd_pretrain(const Common& c, const std::string& mode, std::ostream& out) {
  if (mode != "enhanced" && mode != "baseline" && mode != "none") {
    throw ConfigError("mode", "expected enhanced, baseline or none, got '" + mode + "'");
  }
  const auto cfg = resolve_config(c);
  const auto data = resolve_data(c, cfg);
  const fs::path dir = run_dir(c, "pretrain-" + mode + "-seed" + std::to_string(cfg.seed));
  write_resolved(dir, cfg, {{"mode", mode}});
  model::Wav2VecModel<float> m(cfg.model, cfg.seed);
  if (mode == "none") {
    save_run_checkpoint(dir / "model.ckpt", cfg, "pretrain", mode, 0, {}, m);
    out << "mode none: wrote the untrained initialization to " << (dir / "model.ckpt").string() << "\n";
    return;
  }
  const auto pm = mode == "enhanced" ? training::PretrainMode::enhanced : training::PretrainMode::baseline;
  training::Pretrainer pt(m, cfg, pm, data);
  while (!pt.finished()) {
    const auto r = pt.step();
    if (cfg.pretrain.checkpoint_every && r.step % cfg.pretrain.checkpoint_every == 0 && !pt.finished()) {
      save_run_checkpoint(dir / ("step" + std::to_string(r.step) + ".ckpt"), cfg, "pretrain", mode, r.step,
                          pt.rng_counters(), m);
    }
  }
  save_run_checkpoint(dir / "model.ckpt", cfg, "pretrain", mode, pt.steps_done(), pt.rng_counters(), m);
  evaluation::write_text(dir / "train_log.csv", training::pretrain_log_csv(pt.log()));
  evaluation::write_text(dir / "incidents.csv", training::incidents_csv(pt.log()));
  const auto& last = pt.log().back();
  out << "pretrained " << pt.steps_done() << " steps (" << mode << "), final total loss "
      << evaluation::num(last.loss.total) << "; checkpoint " << (dir / "model.ckpt").string() << "\n";
}

inline void cmd_finetune(const Common& c, const std::string& ckpt_path, const std::string& ft_data, std::ostream& out) {
  require_arg(ckpt_path, "checkpoint");
  auto ck = training::load_checkpoint(ckpt_path);
  if (ck.model.has_head()) throw ConfigError("checkpoint", "'" + ckpt_path + "' is already fine-tuned");
  const json base = training::to_json(ck.config);
  auto cfg = resolve_config(c, base);
  cfg.model = ck.config.model;
  if (!ft_data.empty()) {
    if (ft_data != "noisy" && ft_data != "clean") throw ConfigError("finetune.data", "expected noisy or clean");
    cfg.finetune.data = ft_data == "noisy" ? training::TrainData::noisy : training::TrainData::clean;
  }
  const auto data = resolve_data(c, cfg);
  const fs::path dir = run_dir(c, "finetune-" + ck.mode + "-" + training::train_data_name(cfg.finetune.data) + "-seed" +
                                      std::to_string(cfg.seed));
  write_resolved(dir, cfg, {{"checkpoint", ckpt_path}, {"pretrain_mode", ck.mode}});
  auto m = model::strip_and_head(std::move(ck.model), training::CharVocab::kSize);
  training::Finetuner ft(m, cfg, data);
  while (!ft.finished()) {
    const auto r = ft.step();
    if (cfg.finetune.checkpoint_every && r.step % cfg.finetune.checkpoint_every == 0 && !ft.finished()) {
      save_run_checkpoint(dir / ("step" + std::to_string(r.step) + ".ckpt"), cfg, "finetune", ck.mode, r.step,
                          ft.rng_counters(), m);
    }
  }
  save_run_checkpoint(dir / "model.ckpt", cfg, "finetune", ck.mode, ft.steps_done(), ft.rng_counters(), m);
  evaluation::write_text(dir / "finetune_log.csv", training::finetune_log_csv(ft.log()));
  evaluation::write_text(dir / "incidents.csv", training::incidents_csv({}));
  out << "fine-tuned " << ft.steps_done() << " steps, final CTC " << evaluation::num(ft.log().back().ctc)
      << "; checkpoint " << (dir / "model.ckpt").string() << "\n";
}

inline evaluation::TestGrid grid_for(const training::RunConfig& cfg, const training::Dataset& data) {
  if (data.test.empty()) throw ConfigError("data.n_test_utterances", "the dataset has no test utterances");
  return evaluation::build_test_grid(data.test, data.noise, cfg.eval.snr_set, cfg.data.corpus.seed);
}

inline void cmd_eval(const Common& c, const std::string& ckpt_path, std::ostream& out) {
  require_arg(ckpt_path, "checkpoint");
  auto ck = training::load_checkpoint(ckpt_path);
  if (!ck.model.has_head()) throw ConfigError("checkpoint", "'" + ckpt_path + "' has no output head; fine-tune it first");
  auto cfg = resolve_config(c, training::to_json(ck.config));
  const auto data = resolve_data(c, cfg);
  const auto grid = grid_for(cfg, data);
  const fs::path dir = run_dir(c, "eval");
  write_resolved(dir, cfg, {{"checkpoint", ckpt_path}});
  std::vector<evaluation::Transcription> tr;
  const auto rows = evaluation::evaluate_wer(ck.model, grid, &tr);
  evaluation::write_text(dir / "wer.csv", evaluation::wer_csv(rows));
  evaluation::write_text(dir / "transcripts.csv", evaluation::transcripts_csv(tr));
  if (cfg.eval.plots) evaluation::emit_wer_plots(dir, {{ck.mode, rows}});
  out << "clean WER " << evaluation::num(rows.back().wer) << "; report " << (dir / "wer.csv").string() << "\n";
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline void cmd_analyze(const Common& c, const std::string& models, const std::string& ref_path, const std::string& names,
                        std::ostream& out) {
  require_arg(models, "models");
  require_arg(ref_path, "ref");
  const auto paths = split_list(models);
  auto ids = split_list(names);
  if (!ids.empty() && ids.size() != paths.size()) throw ConfigError("names", "need one name per model");
  if (ids.empty())
    for (const auto& p : paths) ids.push_back(fs::path(p).parent_path().filename().string() + "/" + fs::path(p).stem().string());
  auto ref = training::load_checkpoint(ref_path);
  auto cfg = resolve_config(c, training::to_json(ref.config));
  const auto data = resolve_data(c, cfg);
  const auto grid = grid_for(cfg, data);
  const fs::path dir = run_dir(c, "analyze");
  write_resolved(dir, cfg, {{"models", paths}, {"names", ids}, {"ref", ref_path}});
  std::vector<evaluation::SimilarityRow> rows;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto ck = training::load_checkpoint(paths[i]);
    auto r = evaluation::representation_similarity(ids[i], ck.model, ref.model, grid);
    rows.insert(rows.end(), r.begin(), r.end());
    if (ck.model.has_quantizer()) {
      std::vector<const audio::Waveform*> waves;
      for (const auto& u : grid.clean) waves.push_back(&u.wave);
      const auto usage = evaluation::codebook_usage(ck.model, waves, ck.config.pretrain.gumbel.tau(ck.step));
      evaluation::write_text(dir / ("codebook_" + std::to_string(i) + ".csv"), evaluation::codebook_csv(usage));
    }
  }
  evaluation::write_text(dir / "similarity.csv", evaluation::similarity_csv(rows));
  if (cfg.eval.plots) evaluation::emit_similarity_plots(dir, rows);
  out << "similarity of " << paths.size() << " model(s) over " << grid.cells.size() << " cells; report "
      << (dir / "similarity.csv").string() << "\n";
}

// Exit codes: 0 success, 2 invalid configuration or usage, 1 runtime failure.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"ew2v: noise-robust self-supervised speech pretraining on a desk-scale toy corpus"};
  app.require_subcommand(1);
  Common c;
  std::string mode = "enhanced", checkpoint, ft_data, split = "train", models, ref, names;

  auto* synth = app.add_subcommand("synth-data", "Synthesize the toy corpus and noise bank");
  add_common(synth, c, false);
  auto* mix = app.add_subcommand("mix", "Mix noise into a split at the configured SNRs");
  add_common(mix, c);
  mix->add_option("--split", split, "train or test");
  auto* pre = app.add_subcommand("pretrain", "Self-supervised pretraining");
  add_common(pre, c);
  pre->add_option("--mode", mode, "enhanced | baseline | none");
  auto* fin = app.add_subcommand("finetune", "CTC fine-tuning of a pretrained checkpoint");
  add_common(fin, c);
  fin->add_option("--checkpoint", checkpoint, "Pretrained checkpoint");
  fin->add_option("--finetune-data", ft_data, "noisy | clean (overrides finetune.data)");
  auto* ev = app.add_subcommand("eval", "WER over the noise-type x SNR test grid");
  add_common(ev, c);
  ev->add_option("--checkpoint", checkpoint, "Fine-tuned checkpoint");
  auto* an = app.add_subcommand("analyze", "Representation similarity to a clean reference and codebook usage");
  add_common(an, c);
  an->add_option("--models", models, "Comma-separated checkpoints");
  an->add_option("--ref", ref, "Reference checkpoint");
  an->add_option("--names", names, "Comma-separated model ids for the report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }
  try {
    if (synth->parsed()) cmd_synth(c, out);
    if (mix->parsed()) cmd_mix(c, split, out);
    if (pre->parsed()) cmd_pretrain(c, mode, out);
    if (fin->parsed()) cmd_finetune(c, checkpoint, ft_data, out);
    if (ev->parsed()) cmd_eval(c, checkpoint, out);
    if (an->parsed()) cmd_analyze(c, models, ref, names, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ew2v::cli
