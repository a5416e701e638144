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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ergo {

/**
 * A batch of n independent draws in d dimensions (row-major), plus the
 * provenance needed to reproduce it: the seed and the chain length the
 * rows were simulated with (0 for draws taken directly from an initial
 * or exact sampler).
 */
struct SampleBatch {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::vector<double> data;  // n * dim, row-major
  std::uint64_t seed = 0;
  int chain_length = 0;

  SampleBatch() = default;
  SampleBatch(std::size_t n_, std::size_t dim_, std::uint64_t seed_,
              int chain_length_)
      : n(n_), dim(dim_), data(n_ * dim_, 0.0), seed(seed_),
        chain_length(chain_length_) {}

  std::span<double> row(std::size_t i) {
    return {data.data() + i * dim, dim};
  }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * dim, dim};
  }
};

namespace csv {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Writes `x0,x1,...` header plus one row per sample.  A `<path>.meta`
/// sidecar records seed and chain length; callers may append parameter
/// values through `extra` lines (already formatted as key=value).
inline void write_batch(const SampleBatch& batch, const std::string& path,
                        const std::vector<std::string>& extra = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t j = 0; j < batch.dim; ++j) {
    if (j > 0) out << ',';
    out << 'x' << j;
  }
  out << '\n';
  for (std::size_t i = 0; i < batch.n; ++i) {
    const auto r = batch.row(i);
    for (std::size_t j = 0; j < batch.dim; ++j) {
      if (j > 0) out << ',';
      out << format_double(r[j]);
    }
    out << '\n';
  }
  std::ofstream meta(path + ".meta");
  meta << "n=" << batch.n << '\n'
       << "dim=" << batch.dim << '\n'
       << "seed=" << batch.seed << '\n'
       << "chain_length=" << batch.chain_length << '\n';
  for (const auto& line : extra) meta << line << '\n';
}

inline SampleBatch read_batch(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty file " + path);
  std::size_t dim = 1;
  for (char c : line) {
    if (c == ',') ++dim;
  }
  SampleBatch batch;
  batch.dim = dim;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::size_t pos = 0;
    for (std::size_t j = 0; j < dim; ++j) {
      const std::size_t next = line.find(',', pos);
      batch.data.push_back(std::stod(line.substr(pos, next - pos)));
      pos = (next == std::string::npos) ? line.size() : next + 1;
    }
    ++batch.n;
  }
  return batch;
}

}  // namespace csv

}  // namespace ergo
