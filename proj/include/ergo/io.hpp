// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/batch.hpp"
#include "ergo/chain.hpp"
#include "ergo/hmc.hpp"

namespace ergo::kv {

using Map = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

/// Flat key=value file; '#' starts a comment, blank lines ignored.
inline Map read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Map map;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ": malformed line '" + line + "'");
    }
    map[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return map;
}

inline void write_file(const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>&
                           entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (const auto& [key, value] : entries) out << key << '=' << value << '\n';
}

inline std::string join_doubles(std::span<const double> values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i > 0) s += ',';
    s += csv::format_double(values[i]);
  }
  return s;
}

inline std::vector<double> split_doubles(const std::string& s) {
  std::vector<double> values;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) values.push_back(std::stod(item));
  return values;
}

}  // namespace ergo::kv

namespace ergo {

/// Trained ergodic parameters as stored on disk (target-independent).
struct StoredParams {
  InitialDistParams p0;
  std::vector<HmcStepParams> steps;
  double entropy_floor = -std::numeric_limits<double>::infinity();
};

inline void write_params(const StoredParams& params, const std::string& path) {
  std::vector<std::pair<std::string, std::string>> entries;
  entries.emplace_back("dim", std::to_string(params.p0.dim()));
  entries.emplace_back("chain_length", std::to_string(params.steps.size()));
  entries.emplace_back("entropy_floor",
                       csv::format_double(params.entropy_floor));
  entries.emplace_back("p0.mean", kv::join_doubles(params.p0.mean));
  entries.emplace_back("p0.log_std", kv::join_doubles(params.p0.log_std));
  for (std::size_t t = 0; t < params.steps.size(); ++t) {
    const std::string prefix = "step." + std::to_string(t) + ".";
    entries.emplace_back(prefix + "log_step_size",
                         csv::format_double(params.steps[t].log_step_size));
    entries.emplace_back(prefix + "log_momentum_variance",
                         kv::join_doubles(params.steps[t].log_momentum_variance));
    entries.emplace_back(prefix + "leapfrog_steps",
                         std::to_string(params.steps[t].leapfrog_steps));
  }
  kv::write_file(path, entries);
}

/// Parameter lines for a sample batch's metadata sidecar.
inline std::vector<std::string> params_meta_lines(const StoredParams& params) {
  std::vector<std::string> lines;
  lines.push_back("p0.mean=" + kv::join_doubles(params.p0.mean));
  lines.push_back("p0.log_std=" + kv::join_doubles(params.p0.log_std));
  for (std::size_t t = 0; t < params.steps.size(); ++t) {
    const std::string prefix = "step." + std::to_string(t) + ".";
    lines.push_back(prefix + "log_step_size=" +
                    csv::format_double(params.steps[t].log_step_size));
    lines.push_back(prefix + "log_momentum_variance=" +
                    kv::join_doubles(params.steps[t].log_momentum_variance));
  }
  return lines;
}

inline StoredParams read_params(const std::string& path) {
  const kv::Map map = kv::read_file(path);
  StoredParams params;
  const auto get = [&](const std::string& key) -> const std::string& {
    const auto it = map.find(key);
    if (it == map.end()) {
      throw std::runtime_error(path + ": missing key '" + key + "'");
    }
    return it->second;
  };
  params.p0.mean = kv::split_doubles(get("p0.mean"));
  params.p0.log_std = kv::split_doubles(get("p0.log_std"));
  params.entropy_floor = std::stod(get("entropy_floor"));
  const std::size_t length = std::stoul(get("chain_length"));
  for (std::size_t t = 0; t < length; ++t) {
    const std::string prefix = "step." + std::to_string(t) + ".";
    HmcStepParams step;
    step.log_step_size = std::stod(get(prefix + "log_step_size"));
    step.log_momentum_variance =
        kv::split_doubles(get(prefix + "log_momentum_variance"));
    step.leapfrog_steps = std::stoi(get(prefix + "leapfrog_steps"));
    params.steps.push_back(std::move(step));
  }
  return params;
}

}  // namespace ergo
