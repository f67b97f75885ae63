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
#include "config_file.hpp"

#include <yaml-cpp/yaml.h>

#include "urpe/errors.hpp"

namespace urpe::cli {

namespace {

void flatten(const YAML::Node& node, const std::string& prefix, Settings& out) {
  switch (node.Type()) {
    case YAML::NodeType::Map:
      for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        flatten(kv.second, prefix.empty() ? key : prefix + "." + key, out);
      }
      break;
    case YAML::NodeType::Scalar:
      out.emplace_back(prefix, node.Scalar());
      break;
    case YAML::NodeType::Null:
      throw InputError("config key '" + prefix + "' has no value");
    default:
      throw InputError("config key '" + prefix + "' must be a scalar or a map");
  }
}

}  // namespace

Settings read_config_file(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) {
    throw InputError("config file not found: " + path.string());
  }
  YAML::Node root;
  try {
    root = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw InputError("cannot parse config " + path.string() + ": " + e.what());
  }
  Settings out;
  if (root.IsNull()) return out;
  if (!root.IsMap()) throw InputError("config " + path.string() + ": top level must be a map");
  flatten(root, "", out);
  return out;
}

Settings parse_overrides(const std::vector<std::string>& args) {
  Settings out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& arg = args[i];
    if (arg.rfind("--", 0) != 0 || arg.size() == 2) {
      throw InputError("unexpected argument '" + arg + "' (overrides look like --key=value)");
    }
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else if (i + 1 < args.size()) {
      out.emplace_back(arg.substr(2), args[++i]);
    } else {
      throw InputError("override '" + arg + "' is missing a value");
    }
  }
  return out;
}

RunConfig build_run_config(RunConfig base, const Settings& file, const Settings& overrides) {
  for (const auto& [k, v] : file) apply_setting(base, k, v);
  for (const auto& [k, v] : overrides) apply_setting(base, k, v);
  if (base.out_dir.empty()) base.out_dir = default_out_dir();
  finalize(base);
  return base;
}

}  // namespace urpe::cli
