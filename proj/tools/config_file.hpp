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

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "urpe/experiments.hpp"

namespace urpe::cli {

using Settings = std::vector<std::pair<std::string, std::string>>;

/// Flattens a YAML file of nested maps into dotted key/value pairs, e.g.
///
///   task: pi
///   model:
///     heads: 4
///
/// becomes {"task", "pi"}, {"model.heads", "4"}. Sequences are rejected.
Settings read_config_file(const std::filesystem::path& path);

/// Turns trailing "--key=value" / "--key value" arguments into settings.
Settings parse_overrides(const std::vector<std::string>& args);

/// File settings first, then overrides; out_dir falls back to
/// default_out_dir(). Throws InputError naming the offending key.
RunConfig build_run_config(RunConfig base, const Settings& file,
                           const Settings& overrides);

}  // namespace urpe::cli
