// Copyright 2026 The urpe-lab Authors
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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "config_file.hpp"
#include "doctest.h"
#include "urpe/errors.hpp"
#include "urpe/experiments.hpp"
#include "urpe/matrix_io.hpp"
#include "urpe/probes.hpp"

using namespace urpe;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "urpe_experiments_test" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::vector<std::string> read_lines(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// Census oracle: sum the sizes of every parameter tensor of a built model.
std::size_t counted(const ModelConfig& c) {
  Model<float> m(c);
  std::size_t total = 0;
  for (auto& p : m.parameters()) total += p.tensor->size();
  return total;
}

RunConfig tiny_run(Task task) {
  RunConfig cfg = desk_config(task);
  cfg.model.d_model = 16;
  cfg.model.d_head = 4;
  cfg.model.d_ff = 16;
  cfg.model.n_max = 8;
  cfg.train.steps = 6;
  cfg.train.warmup_steps = 2;
  cfg.train.batch = 2;
  cfg.train.eval_every = 3;
  cfg.train.eval_size = 8;
  return cfg;
}

}  // namespace

TEST_CASE("config file flattens nested maps") {
  const auto dir = scratch("config");
  write_text(dir / "run.yaml",
             "task: etp\n"
             "model:\n"
             "  heads: 2\n"
             "  pe: urpe\n"
             "train:\n"
             "  steps: 10\n"
             "  warmup_steps: 2\n"
             "  peak_lr: 1e-3\n");
  const auto s = cli::read_config_file(dir / "run.yaml");
  REQUIRE(s.size() == 6);
  CHECK(s[0] == std::pair<std::string, std::string>{"task", "etp"});
  CHECK(s[1] == std::pair<std::string, std::string>{"model.heads", "2"});

  const auto cfg = cli::build_run_config(desk_config(Task::kPi), s, {});
  CHECK(cfg.task == Task::kEtp);
  CHECK(cfg.model.heads == 2);
  CHECK(cfg.model.urpe);
  CHECK(cfg.model.pe_kind == PEKind::kRpeToeplitz);
  CHECK(cfg.train.steps == 10);
  CHECK(cfg.train.peak_lr == doctest::Approx(1e-3));
  // ETP labels: vocab plus the EOS symbol.
  CHECK(cfg.model.vocab_out == 11);
}

TEST_CASE("config errors name the offending key or path") {
  const auto dir = scratch("config_errors");
  write_text(dir / "bad.yaml", "model:\n  colour: red\n");
  try {
    cli::build_run_config(desk_config(Task::kPi), cli::read_config_file(dir / "bad.yaml"), {});
    FAIL("unknown key accepted");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("model.colour") != std::string::npos);
  }
  try {
    cli::read_config_file(dir / "missing.yaml");
    FAIL("missing file accepted");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find("missing.yaml") != std::string::npos);
  }
  write_text(dir / "list.yaml", "model:\n  heads: [1, 2]\n");
  CHECK_THROWS_AS(cli::read_config_file(dir / "list.yaml"), InputError);
  write_text(dir / "empty_value.yaml", "task:\n");
  CHECK_THROWS_AS(cli::read_config_file(dir / "empty_value.yaml"), InputError);
  CHECK_THROWS_AS(cli::build_run_config(desk_config(Task::kPi), {{"train.heads", "2"}}, {}),
                  InputError);
  CHECK_THROWS_AS(cli::build_run_config(desk_config(Task::kPi), {{"seq_len", "65"}}, {}),
                  InputError);
  CHECK_THROWS_AS(cli::build_run_config(desk_config(Task::kPi), {{"task", "sort"}}, {}),
                  InputError);
}

TEST_CASE("overrides beat the file and accept both spellings") {
  const auto o = cli::parse_overrides({"--heads=8", "--task", "etp", "--model.d_head=8"});
  REQUIRE(o.size() == 3);
  CHECK(o[1] == std::pair<std::string, std::string>{"task", "etp"});
  const auto cfg = cli::build_run_config(desk_config(Task::kPi), {{"heads", "2"}, {"task", "pi"}}, o);
  CHECK(cfg.model.heads == 8);
  CHECK(cfg.model.d_head == 8);
  CHECK(cfg.task == Task::kEtp);

  CHECK_THROWS_AS(cli::parse_overrides({"heads=8"}), InputError);
  CHECK_THROWS_AS(cli::parse_overrides({"--heads"}), InputError);
}

TEST_CASE("pe shorthand covers every variant") {
  const std::pair<const char*, const char*> cases[] = {
      {"nope", "nope"}, {"ape", "ape"},   {"rpe", "rpe"},
      {"shaw", "shaw"}, {"urpe", "rpe+urpe"}, {"shaw+urpe", "shaw+urpe"}};
  for (const auto& [value, variant] : cases) {
    RunConfig cfg = desk_config(Task::kPi);
    apply_setting(cfg, "model.urpe", "true");
    apply_setting(cfg, "pe", value);
    if (std::string(value) == "ape") apply_setting(cfg, "urpe", "false");
    CHECK(cfg.model.variant() == variant);
  }
  // Explicit kind names leave the C flag alone.
  RunConfig cfg = desk_config(Task::kPi);
  apply_setting(cfg, "urpe", "true");
  apply_setting(cfg, "pe", "rpe_shaw");
  CHECK(cfg.model.variant() == "shaw+urpe");
}

TEST_CASE("vocab_out follows the task unless set") {
  RunConfig pi = desk_config(Task::kPi);
  finalize(pi);
  CHECK(pi.model.vocab_out == 64);
  RunConfig short_pi = desk_config(Task::kPi);
  apply_setting(short_pi, "seq_len", "16");
  finalize(short_pi);
  CHECK(short_pi.model.vocab_out == 16);
  RunConfig fixed = desk_config(Task::kPi);
  apply_setting(fixed, "vocab_out", "100");
  finalize(fixed);
  CHECK(fixed.model.vocab_out == 100);
}

TEST_CASE("desk config") {
  const auto c = desk_config(Task::kPi);
  CHECK(c.model.layers == 2);
  CHECK(c.model.heads == 4);
  CHECK(c.model.d_model == 64);
  CHECK(c.model.d_head == 16);
  CHECK(c.model.d_ff == 128);
  CHECK(c.model.n_max == 64);
  CHECK(c.model.vocab_in == 10);
  CHECK(c.train.steps == 5000);
  CHECK(c.train.warmup_steps == 500);
  CHECK(c.train.batch == 64);
  CHECK(c.train.peak_lr == doctest::Approx(5e-3));
}

TEST_CASE("default output directory honours the environment") {
  ::setenv("URPE_OUT_DIR", "/tmp/somewhere", 1);
  CHECK(default_out_dir() == std::filesystem::path("/tmp/somewhere"));
  ::unsetenv("URPE_OUT_DIR");
  CHECK(default_out_dir() == std::filesystem::path("urpe_out"));
}

TEST_CASE("parameter census") {
  ModelConfig c;
  c.heads = 10;
  c.n_max = 200;
  auto census = parameter_census(c);
  CHECK(census.delta_formula == 3990);
  CHECK(census.delta_measured() == 3990);

  c.heads = 12;
  c.d_head = 4;
  c.n_max = 128;
  census = parameter_census(c);
  CHECK(census.delta_measured() == 3060);

  for (auto kind : {PEKind::kNone, PEKind::kRpeToeplitz, PEKind::kRpeShaw}) {
    ModelConfig base;
    base.pe_kind = kind;
    base.n_max = 17;
    base.use_norm = true;
    ModelConfig with_c = base;
    with_c.urpe = true;
    const auto cs = parameter_census(with_c);
    CHECK(cs.total == counted(with_c));
    CHECK(cs.rpe_total == counted(base));
    CHECK(cs.delta_measured() == counted(with_c) - counted(base));
    CHECK(cs.delta_measured() == base.heads * (2 * 17 - 1));
  }
}

TEST_CASE("bench emits a well-formed CSV even with one repetition") {
  BenchOptions opts = bench_defaults();
  opts.model.layers = 1;
  opts.model.heads = 2;
  opts.model.d_model = 16;
  opts.model.d_head = 8;
  opts.model.d_ff = 32;
  opts.model.n_max = 16;
  opts.lengths = {4, 16};
  opts.repetitions = 1;
  opts.warmup = 1;
  const auto report = run_bench(opts);
  CHECK(report.guard_ok);
  REQUIRE(report.rows.size() == 4);
  REQUIRE(report.ratios.size() == 2);
  for (const auto& r : report.rows) {
    CHECK(r.forward_ms > 0.0);
    CHECK(r.peak_bytes > 0);
  }
  // Attention scales with n^2, so the longer input needs more scratch.
  CHECK(report.rows[2].peak_bytes > report.rows[0].peak_bytes);

  const auto dir = scratch("bench");
  write_bench_csv(report.rows, dir / "bench.csv");
  const auto lines = read_lines(dir / "bench.csv");
  REQUIRE(lines.size() == 5);
  CHECK(lines[0] == "variant,n,forward_ms,peak_bytes");
  CHECK(lines[1].rfind("rpe,4,", 0) == 0);
  CHECK(lines[2].rfind("urpe,4,", 0) == 0);

  opts.lengths = {32};
  CHECK_THROWS_AS(run_bench(opts), CapacityError);
}

TEST_CASE("export writes B and C per head") {
  ModelConfig c;
  c.heads = 2;
  c.layers = 2;
  c.n_max = 6;
  c.urpe = true;
  auto fresh = Model<double>::create(c, 1);
  const auto dir = scratch("export");
  const auto files = export_positional(fresh, dir);
  CHECK(files.size() == 12);  // (2 layers of B + C) x 2 heads x {csv, pgm}
  for (const char* name : {"B_h0", "B_h1", "B_l1_h0", "C_h0", "C_h1"}) {
    CHECK(std::filesystem::exists(dir / (std::string(name) + ".csv")));
    CHECK(std::filesystem::exists(dir / (std::string(name) + ".pgm")));
  }
  // Fresh C is all ones: a constant image renders as mid-gray everywhere.
  std::ifstream pgm(dir / "C_h1.pgm", std::ios::binary);
  std::string magic;
  std::size_t w = 0, h = 0, maxv = 0;
  pgm >> magic >> w >> h >> maxv;
  pgm.get();
  CHECK(magic == "P5");
  CHECK(maxv == 255);
  std::vector<char> px(w * h);
  pgm.read(px.data(), static_cast<std::streamsize>(px.size()));
  for (char p : px) CHECK(static_cast<unsigned char>(p) == 128);

  // After training, B and C carry different information; each CSV
  // re-parses to exactly the matrix it was written from.
  random_training(fresh, 30, 6, 4, 0.05);
  const auto dir2 = scratch("export_trained");
  export_positional(fresh, dir2);
  const auto b = read_matrix_csv(dir2 / "B_h0.csv");
  const auto cm = read_matrix_csv(dir2 / "C_h0.csv");
  const auto expect_c = materialize_urpe_c(*fresh.urpe, 0, 6);
  CHECK(cm.shape() == expect_c.shape());
  bool same_c = true;
  for (std::size_t i = 0; i < cm.size(); ++i) same_c = same_c && cm[i] == expect_c[i];
  CHECK(same_c);
  std::ifstream bp(dir2 / "B_h0.pgm", std::ios::binary), cp(dir2 / "C_h0.pgm", std::ios::binary);
  const std::string b_bytes((std::istreambuf_iterator<char>(bp)), {});
  const std::string c_bytes((std::istreambuf_iterator<char>(cp)), {});
  CHECK(b_bytes != c_bytes);
  bool same_bc = true;
  for (std::size_t i = 0; i < b.size(); ++i) same_bc = same_bc && b[i] == cm[i];
  CHECK_FALSE(same_bc);
}

TEST_CASE("training run writes its artifacts and summary") {
  auto cfg = tiny_run(Task::kPi);
  apply_setting(cfg, "pe", "urpe");
  cfg.out_dir = scratch("train");
  finalize(cfg);
  const auto out = run_training(cfg);
  CHECK(out.summary.rfind("task=pi variant=rpe+urpe final_acc=", 0) == 0);
  CHECK(std::filesystem::exists(cfg.out_dir / "checkpoint.bin"));
  const auto metrics = read_lines(cfg.out_dir / "metrics.csv");
  REQUIRE(metrics.size() == 4);  // header + steps 0, 3, 6
  CHECK(metrics[0] == "step,loss,accuracy,lr,wall_ms");
  CHECK(read_lines(cfg.out_dir / "summary.txt") == std::vector<std::string>{out.summary});
  // The checkpoint carries the configuration it was trained with.
  CHECK(config_fields(read_checkpoint_config(cfg.out_dir / "checkpoint.bin")) ==
        config_fields(cfg.model));
}

TEST_CASE("depth ablation trains matched twins per depth") {
  auto cfg = tiny_run(Task::kPi);
  cfg.out_dir = scratch("ablate");
  const std::vector<std::size_t> one{1};
  const auto rows = run_depth_ablation(cfg, one);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].layers == 1);
  CHECK(std::filesystem::exists(cfg.out_dir / "L1_rpe" / "metrics.csv"));
  CHECK(std::filesystem::exists(cfg.out_dir / "L1_rpe+urpe" / "metrics.csv"));
  write_ablation_csv(rows, cfg.out_dir / "ablate.csv");
  const auto lines = read_lines(cfg.out_dir / "ablate.csv");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0] == "layers,rpe_acc,urpe_acc,urpe_minus_rpe");

  const std::vector<std::size_t> none;
  CHECK_THROWS_AS(run_depth_ablation(cfg, none), InputError);
}
