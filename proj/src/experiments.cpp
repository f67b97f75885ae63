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
#include "urpe/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include "urpe/errors.hpp"
#include "urpe/matrix_io.hpp"

namespace urpe {

namespace {

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw InputError("config key '" + key + "': expected a non-negative integer, got '" +
                     value + "'");
  }
  return out;
}

bool is_model_key(const std::string& key) {
  for (const auto& [k, v] : config_fields(ModelConfig{})) {
    if (k == key) return true;
  }
  return false;
}

bool is_train_key(const std::string& key) {
  for (const auto& [k, v] : config_fields(TrainConfig{})) {
    if (k == key) return true;
  }
  return false;
}

// Variant shorthand for "pe"; anything else goes to the model parser.
bool apply_pe_shorthand(ModelConfig& m, const std::string& value) {
  if (value == "nope") {
    m.pe_kind = PEKind::kNone;
    m.urpe = false;
  } else if (value == "rpe") {
    m.pe_kind = PEKind::kRpeToeplitz;
    m.urpe = false;
  } else if (value == "shaw") {
    m.pe_kind = PEKind::kRpeShaw;
    m.urpe = false;
  } else if (value == "urpe" || value == "rpe+urpe") {
    m.pe_kind = PEKind::kRpeToeplitz;
    m.urpe = true;
  } else if (value == "shaw+urpe") {
    m.pe_kind = PEKind::kRpeShaw;
    m.urpe = true;
  } else {
    return false;
  }
  return true;
}

void apply_model_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "pe" && apply_pe_shorthand(cfg.model, value)) return;
  set_config_field(cfg.model, key, value);
  if (key == "vocab_out") cfg.vocab_out_explicit = true;
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 == 1 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

}  // namespace

RunConfig desk_config(Task task) {
  RunConfig cfg;
  cfg.task = task;
  cfg.model.layers = 2;
  cfg.model.heads = 4;
  cfg.model.d_model = 64;
  cfg.model.d_head = 16;
  cfg.model.d_ff = 128;
  cfg.model.pe_kind = PEKind::kRpeToeplitz;
  cfg.model.urpe = false;
  cfg.model.use_norm = true;
  cfg.model.scale_qk = true;
  cfg.model.vocab_in = 10;
  cfg.model.n_max = 64;
  // Tuned on ETP, the harder task: at 3e-4 it stalls near 0.6.
  cfg.train.peak_lr = 5e-3;
  return cfg;
}

void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    const std::string section = key.substr(0, dot);
    const std::string field = key.substr(dot + 1);
    if (section == "model" && is_model_key(field)) return apply_model_key(cfg, field, value);
    if (section == "train" && is_train_key(field)) return set_config_field(cfg.train, field, value);
    throw InputError("unknown config key '" + key + "'");
  }
  if (key == "task") {
    cfg.task = parse_task(value);
  } else if (key == "seq_len") {
    cfg.seq_len = parse_count(key, value);
  } else if (key == "out_dir") {
    cfg.out_dir = value;
  } else if (is_model_key(key)) {
    apply_model_key(cfg, key, value);
  } else if (is_train_key(key)) {
    set_config_field(cfg.train, key, value);
  } else {
    throw InputError("unknown config key '" + key + "'");
  }
}

void finalize(RunConfig& cfg) {
  const std::size_t n = cfg.length();
  if (n > cfg.model.n_max) {
    throw InputError("config key 'seq_len': " + std::to_string(n) + " exceeds n_max " +
                     std::to_string(cfg.model.n_max));
  }
  if (!cfg.vocab_out_explicit) cfg.model.vocab_out = label_count(cfg.task, n, cfg.model.vocab_in);
  cfg.model.validate();
  cfg.train.validate();
}

std::vector<std::string> setting_keys() {
  std::vector<std::string> keys{"task", "seq_len", "out_dir"};
  for (const auto& [k, v] : config_fields(ModelConfig{})) keys.push_back(k);
  for (const auto& [k, v] : config_fields(TrainConfig{})) keys.push_back(k);
  return keys;
}

RunOutcome run_training(const RunConfig& cfg,
                        const std::function<void(const MetricRow&)>& on_eval) {
  const std::size_t n = cfg.length();
  auto model = Model<float>::create(cfg.model, cfg.train.seed);
  const auto eval_set = make_eval_set(cfg.task, n, cfg.model.vocab_in, cfg.train);
  TrainHooks hooks;
  hooks.on_eval = on_eval;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    hooks.metrics_csv = cfg.out_dir / "metrics.csv";
    hooks.checkpoint = cfg.out_dir / "checkpoint.bin";
  }
  RunOutcome out;
  out.result = train(model, cfg.task, cfg.train, eval_set, hooks);
  out.variant = cfg.model.variant();
  std::ostringstream line;
  line << "task=" << task_name(cfg.task) << " variant=" << out.variant
       << " final_acc=" << out.result.final_accuracy;
  out.summary = line.str();
  if (!cfg.out_dir.empty()) {
    std::ofstream(cfg.out_dir / "summary.txt") << out.summary << '\n';
  }
  return out;
}

Census parameter_census(const ModelConfig& config) {
  config.validate();
  Census c;
  {
    Model<float> m(config);
    c.total = m.parameter_count();
  }
  ModelConfig twin = config;
  twin.urpe = false;
  c.rpe_total = config.urpe ? Model<float>(twin).parameter_count() : c.total;
  twin.urpe = true;
  c.urpe_total = config.urpe ? c.total : Model<float>(twin).parameter_count();
  c.delta_formula = urpe_param_count(config.heads, config.n_max);
  return c;
}

BenchOptions bench_defaults() {
  BenchOptions opts;
  opts.model.layers = 12;
  opts.model.heads = 12;
  opts.model.d_model = 768;
  opts.model.d_head = 64;
  opts.model.d_ff = 3072;
  opts.model.pe_kind = PEKind::kRpeToeplitz;
  opts.model.urpe = false;
  opts.model.use_norm = false;
  opts.model.scale_qk = true;
  opts.model.vocab_in = 100;
  opts.model.vocab_out = 100;
  opts.model.n_max = 512;
  return opts;
}

BenchReport run_bench(const BenchOptions& opts,
                      const std::function<void(const std::string&)>& log) {
  using Clock = std::chrono::steady_clock;
  ModelConfig rpe_cfg = opts.model;
  rpe_cfg.urpe = false;
  ModelConfig urpe_cfg = opts.model;
  urpe_cfg.urpe = true;
  // Positional carriers draw nothing from the generator: same seed, same
  // weights, and C starts at all ones.
  auto rpe = Model<float>::create(rpe_cfg, opts.seed);
  auto urpe = Model<float>::create(urpe_cfg, opts.seed);

  BenchReport report;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t n : opts.lengths) {
    if (n > opts.model.n_max) {
      throw CapacityError("bench: length " + std::to_string(n) + " exceeds n_max " +
                          std::to_string(opts.model.n_max));
    }
    std::uniform_int_distribution<int> tok(0, static_cast<int>(opts.model.vocab_in) - 1);
    std::vector<int> tokens(n);
    for (int& t : tokens) t = tok(rng);

    std::vector<double> times[2];
    std::size_t peaks[2] = {0, 0};
    Model<float>* models[2] = {&rpe, &urpe};
    for (std::size_t rep = 0; rep < opts.warmup + opts.repetitions; ++rep) {
      Tensor<float> outs[2];
      for (int v = 0; v < 2; ++v) {
        // Alternate which twin goes first so cache warmth is shared fairly.
        const int which = (rep % 2 == 0) ? v : 1 - v;
        const std::size_t base = memory::live_bytes();
        memory::reset_peak();
        const auto t0 = Clock::now();
        outs[which] = models[which]->logits(tokens);
        const auto t1 = Clock::now();
        peaks[which] = std::max(peaks[which], memory::peak_bytes() - base);
        if (rep >= opts.warmup) {
          times[which].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
      }
      const auto a = outs[0].data();
      const auto b = outs[1].data();
      if (!std::equal(a.begin(), a.end(), b.begin(), b.end())) report.guard_ok = false;
    }
    const double rpe_ms = times[0].empty() ? 0.0 : median(times[0]);
    const double urpe_ms = times[1].empty() ? 0.0 : median(times[1]);
    report.rows.push_back({"rpe", n, rpe_ms, peaks[0]});
    report.rows.push_back({"urpe", n, urpe_ms, peaks[1]});
    report.ratios.push_back(rpe_ms > 0.0 ? urpe_ms / rpe_ms : 0.0);
    if (log) {
      std::ostringstream msg;
      msg << "n=" << n << " rpe_ms=" << rpe_ms << " urpe_ms=" << urpe_ms
          << " ratio=" << report.ratios.back();
      log(msg.str());
    }
  }
  return report;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "variant,n,forward_ms,peak_bytes\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.n << ',' << r.forward_ms << ',' << r.peak_bytes << '\n';
  }
}

std::vector<AblationRow> run_depth_ablation(
    const RunConfig& base, std::span<const std::size_t> depths,
    const std::function<void(const std::string&)>& log) {
  if (depths.empty()) throw InputError("ablate-depth: empty depth list");
  std::vector<AblationRow> rows;
  for (std::size_t layers : depths) {
    if (layers == 0) throw InputError("ablate-depth: depth must be positive");
    AblationRow row;
    row.layers = layers;
    for (bool with_c : {false, true}) {
      RunConfig cfg = base;
      cfg.model.layers = layers;
      cfg.model.urpe = with_c;
      if (!base.out_dir.empty()) {
        cfg.out_dir = base.out_dir / ("L" + std::to_string(layers) + "_" + cfg.model.variant());
      }
      finalize(cfg);
      const auto outcome = run_training(cfg);
      (with_c ? row.urpe_acc : row.rpe_acc) = outcome.result.final_accuracy;
      if (log) log("L=" + std::to_string(layers) + " " + outcome.summary);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "layers,rpe_acc,urpe_acc,urpe_minus_rpe\n";
  for (const auto& r : rows) {
    out << r.layers << ',' << r.rpe_acc << ',' << r.urpe_acc << ','
        << (r.urpe_acc - r.rpe_acc) << '\n';
  }
}

std::vector<std::filesystem::path> export_positional(const Model<double>& model,
                                                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const auto emit = [&](const Tensor<double>& m, const std::string& stem) {
    write_matrix_csv(m, dir / (stem + ".csv"));
    write_matrix_pgm(m, dir / (stem + ".pgm"));
    written.push_back(dir / (stem + ".csv"));
    written.push_back(dir / (stem + ".pgm"));
  };
  const std::size_t n = model.config().n_max;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& biases = model.layers[l].rel_bias;
    for (std::size_t h = 0; h < biases.size(); ++h) {
      const std::string prefix = l == 0 ? "B_h" : "B_l" + std::to_string(l) + "_h";
      emit(materialize_toeplitz(biases[h], n, false), prefix + std::to_string(h));
    }
  }
  if (model.urpe) {
    for (std::size_t h = 0; h < model.urpe->heads(); ++h) {
      emit(materialize_urpe_c(*model.urpe, h, n), "C_h" + std::to_string(h));
    }
  }
  return written;
}

std::filesystem::path default_out_dir() {
  if (const char* env = std::getenv("URPE_OUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return "urpe_out";
}

}  // namespace urpe
