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

// urpe: train, probe, bench, export, census and ablate-depth front end.
// Data goes to files (and summary lines to stdout); diagnostics to stderr.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config_file.hpp"
#include "urpe/errors.hpp"
#include "urpe/experiments.hpp"
#include "urpe/kernels.hpp"
#include "urpe/model.hpp"
#include "urpe/probes.hpp"

namespace {

using urpe::cli::Settings;

std::string keys_footer() {
  std::string text = "Overrides: --key=value, keys may be qualified (model.heads, train.steps).\nKeys:";
  for (const auto& k : urpe::setting_keys()) text += " " + k;
  text += "\npe also accepts the shorthands nope | ape | rpe | shaw | urpe | shaw+urpe.";
  text += "\nDefault output directory: $URPE_OUT_DIR, else ./urpe_out.";
  return text;
}

urpe::RunConfig load(const std::string& config_path, const std::vector<std::string>& extras) {
  Settings file;
  if (!config_path.empty()) file = urpe::cli::read_config_file(config_path);
  return urpe::cli::build_run_config(urpe::desk_config(urpe::Task::kPi), file,
                                     urpe::cli::parse_overrides(extras));
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& extras) {
  const auto cfg = load(config_path, extras);
  std::cerr << "training " << cfg.model.variant() << " on " << urpe::task_name(cfg.task)
            << " (n=" << cfg.length() << ", steps=" << cfg.train.steps << ") -> "
            << cfg.out_dir.string() << '\n';
  const auto outcome = urpe::run_training(cfg, [](const urpe::MetricRow& row) {
    std::cerr << "step " << row.step << " loss " << row.loss << " acc " << row.accuracy
              << " lr " << row.lr << '\n';
  });
  std::cout << outcome.summary << '\n';
  return 0;
}

int cmd_probe(std::vector<std::string> names, std::uint64_t seed, std::string report_path) {
  if (names.empty() || (names.size() == 1 && names[0] == "all")) names = urpe::probe_names();
  // Validate every name before running anything.
  for (const auto& name : names) {
    bool known = false;
    for (const auto& valid : urpe::probe_names()) known = known || valid == name;
    if (!known) {
      std::string list;
      for (const auto& valid : urpe::probe_names()) list += " " + valid;
      std::cerr << "error: unknown probe '" << name << "'; valid names: all" << list << '\n';
      return 2;
    }
  }
  if (report_path.empty()) report_path = (urpe::default_out_dir() / "probe_report.txt").string();
  const std::filesystem::path report(report_path);
  if (report.has_parent_path()) std::filesystem::create_directories(report.parent_path());
  std::ofstream out(report);
  if (!out) throw urpe::InputError("cannot write " + report_path);
  bool all_passed = true;
  for (const auto& name : names) {
    const auto r = urpe::run_probe(name, seed);
    out << r.to_line() << '\n';
    std::cout << r.to_line() << '\n';
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

int cmd_bench(const std::vector<std::size_t>& lengths, std::size_t reps, std::size_t warmup,
              std::uint64_t seed, std::string csv, const std::vector<std::string>& extras) {
  auto opts = urpe::bench_defaults();
  urpe::RunConfig holder;
  holder.model = opts.model;
  for (const auto& [k, v] : urpe::cli::parse_overrides(extras)) {
    if (k.rfind("train.", 0) == 0 || k == "task" || k == "seq_len" || k == "out_dir") {
      throw urpe::InputError("bench accepts model keys only, got '" + k + "'");
    }
    urpe::apply_setting(holder, k, v);
  }
  opts.model = holder.model;
  opts.model.validate();
  opts.lengths = lengths;
  opts.repetitions = reps;
  opts.warmup = warmup;
  opts.seed = seed;
  if (reps == 0) throw urpe::InputError("bench: --reps must be at least 1");
  std::cerr << "bench on " << urpe::kernels::isa_name(urpe::kernels::active_isa())
            << " kernels, " << reps << " reps after " << warmup << " warmups\n";
  const auto report = urpe::run_bench(opts, [](const std::string& s) { std::cerr << s << '\n'; });
  if (csv.empty()) csv = (urpe::default_out_dir() / "bench.csv").string();
  urpe::write_bench_csv(report.rows, csv);
  for (std::size_t i = 0; i < report.ratios.size(); ++i) {
    std::cout << "n=" << opts.lengths[i] << " urpe_over_rpe=" << report.ratios[i] << '\n';
  }
  std::cout << "guard=" << (report.guard_ok ? "identical" : "MISMATCH") << '\n';
  return report.guard_ok ? 0 : 1;
}

int cmd_export(const std::string& checkpoint, std::string dir) {
  auto model = urpe::load_checkpoint<double>(checkpoint);
  if (dir.empty()) dir = (urpe::default_out_dir() / "export").string();
  const auto files = urpe::export_positional(model, dir);
  for (const auto& f : files) std::cerr << "wrote " << f.string() << '\n';
  if (files.empty()) std::cerr << "model has no materializable B or C\n";
  return 0;
}

int cmd_census(const std::string& config_path, const std::vector<std::string>& extras) {
  const auto cfg = load(config_path, extras);
  const auto c = urpe::parameter_census(cfg.model);
  std::cout << "variant=" << cfg.model.variant() << " total=" << c.total
            << " rpe_twin=" << c.rpe_total << " urpe_twin=" << c.urpe_total
            << " urpe_delta=" << c.delta_measured() << " H*(2*n_max-1)=" << c.delta_formula
            << '\n';
  return c.delta_measured() == c.delta_formula ? 0 : 1;
}

int cmd_ablate(const std::string& config_path, const std::vector<std::size_t>& depths,
               const std::vector<std::string>& extras) {
  const auto cfg = load(config_path, extras);
  const auto rows = urpe::run_depth_ablation(cfg, depths,
                                             [](const std::string& s) { std::cerr << s << '\n'; });
  const auto csv = cfg.out_dir / "ablate_depth.csv";
  urpe::write_ablation_csv(rows, csv);
  bool ok = true;
  for (const auto& r : rows) {
    std::cout << "layers=" << r.layers << " rpe_acc=" << r.rpe_acc << " urpe_acc=" << r.urpe_acc
              << '\n';
    ok = ok && r.urpe_acc >= r.rpe_acc;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"URPE attention lab: training, probes, benchmarks and exports"};
  app.require_subcommand(1);
  app.footer(keys_footer());

  std::string config_path;
  auto* train = app.add_subcommand("train", "Train one model and print task/variant/final_acc");
  train->add_option("--config", config_path, "YAML config file")->check(CLI::ExistingFile);
  train->allow_extras();

  std::vector<std::string> probe_sel;
  std::uint64_t seed = 0;
  std::string report_path;
  auto* probe = app.add_subcommand("probe", "Run theory probes (all or a list of names)");
  probe->add_option("names", probe_sel, "probe names or 'all'");
  probe->add_option("--seed", seed, "seed for randomized cases");
  probe->add_option("--report", report_path, "report file");

  std::vector<std::size_t> lengths{128, 256, 512};
  std::size_t reps = 5, warmup = 2;
  std::string bench_csv;
  auto* bench = app.add_subcommand("bench", "Time RPE vs URPE forward passes");
  bench->add_option("--n", lengths, "sequence lengths")->delimiter(',');
  bench->add_option("--reps", reps, "timed repetitions (median reported)");
  bench->add_option("--warmup", warmup, "discarded warmup runs");
  bench->add_option("--seed", seed, "weight seed");
  bench->add_option("--csv", bench_csv, "output CSV");
  bench->allow_extras();

  std::string checkpoint, export_dir;
  auto* exp = app.add_subcommand("export", "Dump per-head B and C as CSV and PGM");
  exp->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  exp->add_option("--out", export_dir, "output directory");

  auto* census = app.add_subcommand("census", "Count parameters and the URPE delta");
  census->add_option("--config", config_path, "YAML config file")->check(CLI::ExistingFile);
  census->allow_extras();

  std::vector<std::size_t> depths{1, 2, 3};
  auto* ablate = app.add_subcommand("ablate-depth", "Train RPE/URPE twins at several depths");
  ablate->add_option("--config", config_path, "YAML config file")->check(CLI::ExistingFile);
  ablate->add_option("--depths", depths, "layer counts")->delimiter(',');
  ablate->allow_extras();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config_path, train->remaining());
    if (*probe) return cmd_probe(probe_sel, seed, report_path);
    if (*bench) return cmd_bench(lengths, reps, warmup, seed, bench_csv, bench->remaining());
    if (*exp) return cmd_export(checkpoint, export_dir);
    if (*census) return cmd_census(config_path, census->remaining());
    if (*ablate) return cmd_ablate(config_path, depths, ablate->remaining());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
