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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/batch.hpp"
#include "ergo/chain.hpp"
#include "ergo/targets.hpp"

namespace ergo {

struct EstimateResult {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Sample mean of log pi* over a batch with its standard error.
template <TargetModel Target>
EstimateResult expected_log_target(const SampleBatch& batch,
                                   const Target& target) {
  if (batch.n == 0) {
    throw std::invalid_argument("expected_log_target: empty batch");
  }
  if (batch.dim != target.dim()) {
    throw std::invalid_argument("expected_log_target: dimension mismatch");
  }
  double mean = 0.0;
  std::vector<double> values(batch.n);
  for (std::size_t i = 0; i < batch.n; ++i) {
    values[i] = target.log_density(batch.row(i));
    mean += values[i];
  }
  mean /= static_cast<double>(batch.n);
  double s2 = 0.0;
  for (double v : values) s2 += (v - mean) * (v - mean);
  EstimateResult r;
  r.estimate = mean;
  r.std_error = batch.n > 1
      ? std::sqrt(s2 / static_cast<double>(batch.n - 1) /
                  static_cast<double>(batch.n))
      : 0.0;
  return r;
}

struct MmdConfig {
  enum class Bandwidth { kMedianHeuristic, kFixed };
  Bandwidth rule = Bandwidth::kMedianHeuristic;
  double sigma = 1.0;  // used when rule == kFixed
};

namespace detail {

inline double sq_distance(std::span<const double> a,
                          std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

/// Median pairwise distance over the pooled sample (capped subset).
inline double median_heuristic(const SampleBatch& a, const SampleBatch& b) {
  constexpr std::size_t kCap = 2048;
  std::vector<std::span<const double>> rows;
  const std::size_t na = std::min(a.n, kCap);
  const std::size_t nb = std::min(b.n, kCap);
  rows.reserve(na + nb);
  for (std::size_t i = 0; i < na; ++i) rows.push_back(a.row(i));
  for (std::size_t i = 0; i < nb; ++i) rows.push_back(b.row(i));
  std::vector<double> dists;
  dists.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      dists.push_back(std::sqrt(sq_distance(rows[i], rows[j])));
    }
  }
  std::nth_element(dists.begin(), dists.begin() + dists.size() / 2,
                   dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

}  // namespace detail

/// Median-heuristic bandwidth of a reference sample.  Comparisons that
/// must share one kernel scale (e.g. one curve across chain lengths)
/// pin this value through MmdConfig::kFixed.
inline double mmd_median_bandwidth(const SampleBatch& reference) {
  return detail::median_heuristic(reference, reference);
}

/**
 * Unbiased MMD^2 estimate (U-statistic) with a Gaussian kernel
 * exp(-|x-y|^2 / (2 sigma^2)); the bandwidth comes from the median
 * heuristic on the pooled sample unless fixed.  May be slightly
 * negative by construction.  Symmetric in its arguments and invariant
 * under sample reordering.
 */
inline double mmd(const SampleBatch& a, const SampleBatch& b,
                  const MmdConfig& config = {}) {
  if (a.n == 0 || b.n == 0) throw std::invalid_argument("mmd: empty batch");
  if (a.dim != b.dim) throw std::invalid_argument("mmd: dimension mismatch");
  const double sigma = config.rule == MmdConfig::Bandwidth::kMedianHeuristic
      ? detail::median_heuristic(a, b)
      : config.sigma;
  if (!(sigma > 0.0)) throw std::invalid_argument("mmd: bandwidth must be > 0");
  const double gamma = 1.0 / (2.0 * sigma * sigma);
  const double m = static_cast<double>(a.n);
  const double n = static_cast<double>(b.n);
  double kaa = 0.0, kbb = 0.0, kab = 0.0;
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t j = i + 1; j < a.n; ++j) {
      kaa += std::exp(-gamma * detail::sq_distance(a.row(i), a.row(j)));
    }
  }
  for (std::size_t i = 0; i < b.n; ++i) {
    for (std::size_t j = i + 1; j < b.n; ++j) {
      kbb += std::exp(-gamma * detail::sq_distance(b.row(i), b.row(j)));
    }
  }
  for (std::size_t i = 0; i < a.n; ++i) {
    for (std::size_t j = 0; j < b.n; ++j) {
      kab += std::exp(-gamma * detail::sq_distance(a.row(i), b.row(j)));
    }
  }
  return 2.0 * kaa / (m * (m - 1.0)) + 2.0 * kbb / (n * (n - 1.0)) -
         2.0 * kab / (m * n);
}

/// 2D histogram with an explicit overflow tally: points outside the
/// range are counted, never silently dropped.
struct Histogram2D {
  std::vector<double> xedges, yedges;  // bins+1 each
  std::vector<std::int64_t> counts;    // bins x bins, row-major in x
  std::size_t n = 0;
  std::int64_t overflow = 0;

  std::size_t bins() const { return xedges.size() - 1; }
  std::int64_t at(std::size_t ix, std::size_t iy) const {
    return counts[ix * bins() + iy];
  }
};

inline Histogram2D histogram2d(const SampleBatch& batch, std::size_t bins,
                               const Box& range) {
  if (batch.dim != 2 || range.dim() != 2) {
    throw std::invalid_argument("histogram2d: input must be 2D");
  }
  if (bins == 0) throw std::invalid_argument("histogram2d: bins must be > 0");
  Histogram2D h;
  h.n = batch.n;
  h.counts.assign(bins * bins, 0);
  h.xedges.resize(bins + 1);
  h.yedges.resize(bins + 1);
  for (std::size_t k = 0; k <= bins; ++k) {
    const double f = static_cast<double>(k) / static_cast<double>(bins);
    h.xedges[k] = range.lo[0] + f * (range.hi[0] - range.lo[0]);
    h.yedges[k] = range.lo[1] + f * (range.hi[1] - range.lo[1]);
  }
  const double wx = (range.hi[0] - range.lo[0]) / static_cast<double>(bins);
  const double wy = (range.hi[1] - range.lo[1]) / static_cast<double>(bins);
  for (std::size_t i = 0; i < batch.n; ++i) {
    const auto r = batch.row(i);
    const double fx = (r[0] - range.lo[0]) / wx;
    const double fy = (r[1] - range.lo[1]) / wy;
    if (fx < 0.0 || fy < 0.0 || fx >= static_cast<double>(bins) ||
        fy >= static_cast<double>(bins)) {
      ++h.overflow;
      continue;
    }
    const std::size_t ix = static_cast<std::size_t>(fx);
    const std::size_t iy = static_cast<std::size_t>(fy);
    ++h.counts[ix * bins + iy];
  }
  return h;
}

/// TSV block: bin centers and count per row, overflow in a comment.
inline void write_histogram_tsv(const Histogram2D& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "# n=" << h.n << " overflow=" << h.overflow << '\n';
  out << "x\ty\tcount\n";
  for (std::size_t ix = 0; ix < h.bins(); ++ix) {
    for (std::size_t iy = 0; iy < h.bins(); ++iy) {
      const double cx = 0.5 * (h.xedges[ix] + h.xedges[ix + 1]);
      const double cy = 0.5 * (h.yedges[iy] + h.yedges[iy + 1]);
      out << csv::format_double(cx) << '\t' << csv::format_double(cy) << '\t'
          << h.at(ix, iy) << '\n';
    }
  }
}

/// Expected-log-target estimates for every recorded marginal P_0..P_T.
template <TargetModel Target>
std::vector<EstimateResult> convergence_curve(const ChainSpec<Target>& spec,
                                              std::size_t n,
                                              std::uint64_t seed) {
  const auto run = run_chain(spec, n, seed, /*record_intermediate=*/true);
  std::vector<EstimateResult> curve;
  curve.reserve(run.marginals.size());
  for (const auto& batch : run.marginals) {
    curve.push_back(expected_log_target(batch, spec.target));
  }
  return curve;
}

inline void write_curve_tsv(std::span<const EstimateResult> curve,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t\testimate\tstd_error\n";
  for (std::size_t t = 0; t < curve.size(); ++t) {
    out << t << '\t' << csv::format_double(curve[t].estimate) << '\t'
        << csv::format_double(curve[t].std_error) << '\n';
  }
}

}  // namespace ergo
