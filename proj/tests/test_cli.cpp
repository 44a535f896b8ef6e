// Copyright 2026 The ew2v Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>

#include "ew2v/cli.hpp"
#include "test_util.hpp"

using namespace ew2v;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out, err;
};

// Runs the installed binary with `args`, capturing stdout and stderr.
Run invoke(const fs::path& work, const std::string& args) {
  const fs::path o = work / "stdout.txt", e = work / "stderr.txt";
  const std::string cmd = std::string("\"") + EW2V_CLI_PATH + "\" " + args + " >\"" + o.string() + "\" 2>\"" + e.string() + "\"";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = test::read_file(o);
  r.err = test::read_file(e);
  return r;
}

fs::path write_config(const fs::path& work) {
  const fs::path p = work / "cfg.json";
  evaluation::write_text(p, R"({
  "seed": 3,
  "data": {"n_utterances": 8, "n_test_utterances": 2},
  "pretrain": {"total_steps": 3, "batch_size": 4},
  "finetune": {"total_steps": 3, "batch_size": 4},
  "eval": {"snr_set": [0, 10]}
})");
  return p;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("override parsing") {
  training::json j = training::json::object();
  cli::apply_override(j, "pretrain.total_steps=50");
  cli::apply_override(j, "pretrain.data=clean");
  cli::apply_override(j, "eval.snr_set=[0,5]");
  CHECK(j["pretrain"]["total_steps"] == 50);
  CHECK(j["pretrain"]["data"] == "clean");
  CHECK(j["eval"]["snr_set"].size() == 2);
  CHECK_THROWS_AS(cli::apply_override(j, "no_equals"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(j, "a..b=1"), ConfigError);
  CHECK_THROWS_AS(cli::apply_override(j, "pretrain.total_steps.x=1"), ConfigError);
}

TEST_CASE("exit codes and diagnostics") {
  const auto work = test::temp_dir("cli_codes");
  const auto cfg = write_config(work);
  const std::string out = " --out-dir \"" + (work / "runs").string() + "\"";

  auto r = invoke(work, "eval --config \"" + cfg.string() + "\"" + out);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("checkpoint"));

  r = invoke(work, "pretrain --config \"" + cfg.string() + "\" --set pretrain.mask.p=1.5" + out);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("pretrain.mask.p"));

  r = invoke(work, "pretrain --config \"" + cfg.string() + "\" --set model.bogus=1" + out);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("model.bogus"));

  r = invoke(work, "pretrain --mode sideways --config \"" + cfg.string() + "\"" + out);
  CHECK(r.code == 2);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("mode"));

  CHECK(invoke(work, "frobnicate").code == 2);
  CHECK(invoke(work, "").code == 2);

  r = invoke(work, "eval --checkpoint \"" + (work / "absent.ckpt").string() + "\"" + out);
  CHECK(r.code == 1);
  CHECK_THAT(r.err, Catch::Matchers::ContainsSubstring("absent.ckpt"));
}

TEST_CASE("pipeline outputs and reruns are bit-identical") {
  const auto work = test::temp_dir("cli_pipeline");
  const auto cfg = write_config(work);
  const std::string c = " --config \"" + cfg.string() + "\" --out-dir \"" + (work / "runs").string() + "\"";
  const fs::path runs = work / "runs";

  for (const std::string id : {"a", "b"}) {
    INFO("run " << id);
    REQUIRE(invoke(work, "pretrain --mode enhanced --run-id pre_" + id + c).code == 0);
    const auto pre = (runs / ("pre_" + id) / "model.ckpt").string();
    REQUIRE(invoke(work, "finetune --checkpoint \"" + pre + "\" --run-id ft_" + id + c).code == 0);
    const auto ft = (runs / ("ft_" + id) / "model.ckpt").string();
    REQUIRE(invoke(work, "eval --checkpoint \"" + ft + "\" --run-id ev_" + id + c).code == 0);
    REQUIRE(invoke(work, "analyze --models \"" + ft + "\",\"" + pre + "\" --names ft,pre --ref \"" + ft + "\" --run-id an_" + id + c)
                .code == 0);
  }
  for (const auto* f : {"pre_%/model.ckpt", "pre_%/train_log.csv", "pre_%/resolved_config.json", "ft_%/model.ckpt",
                        "ft_%/finetune_log.csv", "ev_%/wer.csv", "ev_%/transcripts.csv", "an_%/similarity.csv",
                        "an_%/codebook_1.csv"}) {
    std::string a = f, b = f;
    a.replace(a.find('%'), 1, "a");
    b.replace(b.find('%'), 1, "b");
    INFO(f);
    REQUIRE(fs::exists(runs / a));
    CHECK(test::read_file(runs / a) == test::read_file(runs / b));
  }

  // Noise types x SNRs plus the clean row.
  const auto corpus = audio::synth_toy_corpus(training::parse_config(cli::read_json_file(cfg.string())).data.corpus);
  const auto grid = evaluation::build_test_grid(corpus.test, corpus.noise, {0, 10}, 1);
  const std::string wer = test::read_file(runs / "ev_a" / "wer.csv");
  CHECK(count_lines(wer) == 1 + grid.cells.size() + 1);
  CHECK(wer.rfind("clean,inf,", std::string::npos) != std::string::npos);

  // One row block per model, in --models order.
  const std::string sim = test::read_file(runs / "an_a" / "similarity.csv");
  CHECK(count_lines(sim) == 1 + 2 * grid.cells.size());
  CHECK(sim.find("\nft,") < sim.find("\npre,"));

  const auto resolved = cli::read_json_file((runs / "pre_a" / "resolved_config.json").string());
  CHECK(resolved["seed"] == 3);
  CHECK(resolved["run"]["mode"] == "enhanced");
  CHECK(resolved["pretrain"]["total_steps"] == 3);

  const std::string log = test::read_file(runs / "pre_a" / "train_log.csv");
  CHECK(log.rfind("step,l_m,l_d,l_f,l_c,total,tau,lr,n_masked\n", 0) == 0);
  CHECK(count_lines(log) == 4);
}

TEST_CASE("seed override changes the run and inputs are not mutated") {
  const auto work = test::temp_dir("cli_seed");
  const auto cfg = write_config(work);
  const std::string c = " --config \"" + cfg.string() + "\" --out-dir \"" + (work / "runs").string() + "\"";
  const fs::path runs = work / "runs";
  REQUIRE(invoke(work, "pretrain --mode baseline --seed 7 --run-id s7" + c).code == 0);
  REQUIRE(invoke(work, "pretrain --mode baseline --seed 8 --run-id s8" + c).code == 0);
  CHECK(test::read_file(runs / "s7" / "model.ckpt") != test::read_file(runs / "s8" / "model.ckpt"));

  const auto ck = runs / "s7" / "model.ckpt";
  const std::string before = test::read_file(ck), cfg_before = test::read_file(cfg);
  REQUIRE(invoke(work, "finetune --checkpoint \"" + ck.string() + "\" --finetune-data clean --run-id ft" + c).code == 0);
  CHECK(test::read_file(ck) == before);
  CHECK(test::read_file(cfg) == cfg_before);
  CHECK(cli::read_json_file((runs / "ft" / "resolved_config.json").string())["finetune"]["data"] == "clean");

  // A fine-tuned checkpoint cannot be fine-tuned again, and mode none writes the initialization.
  CHECK(invoke(work, "finetune --checkpoint \"" + (runs / "ft" / "model.ckpt").string() + "\" --run-id ft2" + c).code == 2);
  REQUIRE(invoke(work, "pretrain --mode none --run-id none" + c).code == 0);
  CHECK(fs::exists(runs / "none" / "model.ckpt"));
}

TEST_CASE("synth-data and mix write loadable artifacts") {
  const auto work = test::temp_dir("cli_data");
  const auto cfg = write_config(work);
  const std::string c = " --config \"" + cfg.string() + "\" --out-dir \"" + (work / "runs").string() + "\"";
  const fs::path runs = work / "runs";
  REQUIRE(invoke(work, "synth-data --run-id data" + c).code == 0);
  const auto data = training::load_dataset(runs / "data");
  CHECK(data.train.size() == 8);
  CHECK(data.test.size() == 2);

  REQUIRE(invoke(work, "mix --split train --data \"" + (runs / "data").string() + "\" --run-id m1" + c).code == 0);
  REQUIRE(invoke(work, "mix --split train --data \"" + (runs / "data").string() + "\" --run-id m2" + c).code == 0);
  const std::string mix = test::read_file(runs / "m1" / "mixing.csv");
  CHECK(mix.rfind("utt_id,noise_id,snr_db,gain,clip_count\n", 0) == 0);
  CHECK(count_lines(mix) == 1 + 8);
  CHECK(mix == test::read_file(runs / "m2" / "mixing.csv"));
  CHECK(test::read_file(runs / "m1" / "manifest.jsonl") == test::read_file(runs / "m2" / "manifest.jsonl"));

  CHECK(invoke(work, "mix --split dev" + c).code == 2);
  CHECK(invoke(work, "mix --data \"" + (work / "nowhere").string() + "\"" + c).code == 2);
}
