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
#include <string>
#include <utility>
#include <vector>

#include "urpe/model.hpp"
#include "urpe/tensor.hpp"

namespace urpe {

/// Outcome of one numerical witness. Equality probes pass when every
/// residual is within tolerance; separation probes when the statistic
/// clears the threshold.
struct ProbeReport {
  std::string name;
  bool passed = false;
  std::vector<std::pair<std::string, double>> residuals;
  double tolerance = 0.0;
  std::string construction;

  double residual(const std::string& key) const;
  // probe=<name> pass=<bool> tol=<t> key=value... construction="..."
  std::string to_line() const;
};

/// Feeds n copies of one token and measures the largest difference between
/// any two logit rows. Models with URPE or absolute positions are outside
/// the claim (ContractError).
template <class T>
ProbeReport collapse_probe(Model<T>& model, int token, std::size_t n);

/// (2M - c)^2 + (n - 1) c^2; n <= 2 is a DomainError.
double lower_bound(double m, long n, double c);
/// 4 M^2 / (1 + 1/(n - 1)), the minimum of lower_bound over c.
double lower_bound_floor(double m, long n);

/// Grid search over c for random (M, n) plus the closed-form minimizer.
ProbeReport lower_bound_probe(std::size_t trials, std::uint64_t seed);

/// W_Q = W_K = u, key bias shifting keys by -c, C = all ones, B = 0,
/// compared with a direct evaluation of softmax(Xu(Xu - c1)^T).
ProbeReport attentive_condition_probe(const Tensor<double>& u, double c,
                                      const Tensor<double>& x);

/// Zero Q/K projections and B, C = upper-triangular ones. Checks
/// A(X) 1 = (1, (n-1)/n, ..., 1/n) and that its entries are distinct.
ProbeReport position_aware_probe(std::size_t n, const Tensor<double>& x);

/// Two heads with W_V = 0, value bias 1/min gap, W_O = ones and the
/// position-aware C: the block must return X + u 1^T with gaps of u > 1.
ProbeReport position_injection_probe(std::size_t n, std::size_t d,
                                     const Tensor<double>& x);

/// A hand-set one-layer URPE model whose constant-input logits depend on
/// position, and its RPE twin for contrast.
ProbeReport separation_probe(std::size_t n, std::size_t vocab);

/// Adam on random tokens and random targets, used to show that collapse is
/// structural rather than a property of the initialization.
template <class T>
void random_training(Model<T>& model, std::size_t steps, std::size_t n,
                     std::uint64_t seed, double lr = 1e-3);

/// Names accepted by run_probe: collapse, lower_bound, attentive,
/// position_aware, position_injection, separation.
const std::vector<std::string>& probe_names();

/// Runs the named probe over its standard sweep and folds the sweep into
/// one report (worst residual, all-pass).
ProbeReport run_probe(const std::string& name, std::uint64_t seed);

}  // namespace urpe
