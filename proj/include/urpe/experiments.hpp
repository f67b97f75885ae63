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
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "urpe/model.hpp"
#include "urpe/tasks.hpp"
#include "urpe/training.hpp"

namespace urpe {

/// Everything one training run needs. Keys are addressed either bare
/// ("heads") or qualified ("model.heads", "train.steps").
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  Task task = Task::kPi;
  std::size_t seq_len = 0;  // 0: use model.n_max
  bool vocab_out_explicit = false;
  std::filesystem::path out_dir;

  std::size_t length() const { return seq_len == 0 ? model.n_max : seq_len; }
};

/// Small-machine defaults: n=64, vocab 10, L=2, d=64, H=4, d_H=16, r=128,
/// pre-norm and 1/sqrt(d_H) logit scaling on, T5-style RPE without C.
RunConfig desk_config(Task task);

/// Applies one setting. Besides the model/train fields this understands
/// task, seq_len, out_dir and the variant shorthand for pe:
///   nope | ape | rpe | shaw | urpe (= rpe + C) | shaw+urpe
/// Unknown keys and malformed values throw InputError naming the key.
void apply_setting(RunConfig& cfg, const std::string& key,
                   const std::string& value);

/// Derives vocab_out from the task unless it was set explicitly, then
/// validates the whole configuration.
void finalize(RunConfig& cfg);

/// Every settable key, for help output.
std::vector<std::string> setting_keys();

struct RunOutcome {
  TrainResult result;
  std::string variant;
  // task=<t> variant=<v> final_acc=<a>
  std::string summary;
};

/// Trains a fresh model (32-bit). When out_dir is non-empty the metrics
/// CSV, checkpoint and summary are written there.
RunOutcome run_training(const RunConfig& cfg,
                        const std::function<void(const MetricRow&)>& on_eval = {});

struct Census {
  std::size_t total = 0;       // the configured model
  std::size_t rpe_total = 0;   // twin without C
  std::size_t urpe_total = 0;  // twin with C
  std::size_t delta_formula = 0;

  std::size_t delta_measured() const { return urpe_total - rpe_total; }
};

Census parameter_census(const ModelConfig& config);

struct BenchOptions {
  ModelConfig model;  // the RPE twin; URPE is the same plus C
  std::vector<std::size_t> lengths{128, 256, 512};
  std::size_t repetitions = 5;
  std::size_t warmup = 2;
  std::uint64_t seed = 0;
};

/// L=12, H=12, d=768, d_H=64, r=3072, n_max=512, RPE, no norm.
BenchOptions bench_defaults();

struct BenchRow {
  std::string variant;
  std::size_t n = 0;
  double forward_ms = 0.0;   // median over repetitions
  std::size_t peak_bytes = 0;  // transient tensor bytes during one forward
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<double> ratios;  // URPE / RPE median, one per length
  bool guard_ok = true;        // all-ones C outputs bit-identical to RPE
};

/// Times inference forwards of weight-sharing RPE and URPE twins,
/// alternating the two so drift hits both equally.
BenchReport run_bench(const BenchOptions& opts,
                      const std::function<void(const std::string&)>& log = {});

void write_bench_csv(const std::vector<BenchRow>& rows,
                     const std::filesystem::path& path);

struct AblationRow {
  std::size_t layers = 0;
  double rpe_acc = 0.0;
  double urpe_acc = 0.0;
};

/// Trains RPE and URPE twins (same seed, same budget) at every depth.
std::vector<AblationRow> run_depth_ablation(
    const RunConfig& base, std::span<const std::size_t> depths,
    const std::function<void(const std::string&)>& log = {});

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);

/// Writes B_h<k> (first layer; later layers as B_l<l>_h<k>) and C_h<k> as
/// CSV and PGM, materialized at n_max. Returns the files written.
std::vector<std::filesystem::path> export_positional(
    const Model<double>& model, const std::filesystem::path& dir);

/// $URPE_OUT_DIR when set, otherwise ./urpe_out.
std::filesystem::path default_out_dir();

}  // namespace urpe
