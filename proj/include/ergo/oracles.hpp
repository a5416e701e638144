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
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/batch.hpp"
#include "ergo/chain.hpp"
#include "ergo/errors.hpp"
#include "ergo/hmc.hpp"
#include "ergo/parallel.hpp"
#include "ergo/rng.hpp"
#include "ergo/targets.hpp"

namespace ergo {

/**
 * Exact draws from a boxed target by plain rejection: propose uniformly
 * inside the sampling box and accept against a grid-searched upper
 * bound on pi* (512 cells per axis, times a 1.2 safety factor).
 * Aborts with a diagnostic when the estimated acceptance rate falls
 * below 1e-4, which indicates a bad box or bound.
 */
template <TargetModel Target>
SampleBatch rejection_sample(const Target& target, std::size_t n,
                             std::uint64_t seed,
                             double* acceptance_rate = nullptr) {
  const auto maybe_box = target.sampling_box();
  if (!maybe_box) {
    throw std::invalid_argument("rejection_sample: target has no sampling box");
  }
  const Box& box = *maybe_box;
  const std::size_t d = target.dim();
  if (d < 1 || d > 2) {
    throw std::invalid_argument(
        "rejection_sample: grid bound search supports dim 1 or 2");
  }

  constexpr std::size_t kGrid = 512;
  double log_max = -std::numeric_limits<double>::infinity();
  double mean_density = 0.0;
  std::vector<double> point(d);
  const std::size_t cells = d == 1 ? kGrid : kGrid * kGrid;
  for (std::size_t c = 0; c < cells; ++c) {
    const std::size_t ix = c % kGrid;
    const std::size_t iy = c / kGrid;
    point[0] = box.lo[0] + (static_cast<double>(ix) + 0.5) / kGrid *
                               (box.hi[0] - box.lo[0]);
    if (d == 2) {
      point[1] = box.lo[1] + (static_cast<double>(iy) + 0.5) / kGrid *
                                 (box.hi[1] - box.lo[1]);
    }
    const double lp = target.log_density(std::span<const double>(point));
    log_max = std::max(log_max, lp);
    mean_density += std::exp(lp);
  }
  mean_density /= static_cast<double>(cells);
  const double log_bound = log_max + std::log(1.2);
  const double est_acceptance = mean_density / std::exp(log_bound);
  if (est_acceptance < 1e-4) {
    throw NumericalError(
        "rejection_sample: estimated acceptance rate " +
            std::to_string(est_acceptance) +
            " below 1e-4; sampling box or bound is unsuitable",
        -1);
  }
  if (acceptance_rate != nullptr) *acceptance_rate = est_acceptance;

  SampleBatch batch(n, d, seed, 0);
  const long max_tries =
      std::max<long>(1000000, static_cast<long>(200.0 / est_acceptance));
  parallel_for(n, [&](std::size_t i) {
    Rng rng(substream_seed(seed, {0x4E, i}));
    auto row = batch.row(i);
    for (long attempt = 0; attempt < max_tries; ++attempt) {
      for (std::size_t j = 0; j < d; ++j) {
        row[j] = box.lo[j] + (box.hi[j] - box.lo[j]) * rng.uniform();
      }
      const double lp = target.log_density(std::span<const double>(row));
      if (std::log(rng.uniform_positive()) < lp - log_bound) return;
    }
    throw NumericalError(
        "rejection_sample: no acceptance within " +
            std::to_string(max_tries) + " proposals for sample " +
            std::to_string(i),
        static_cast<long>(i));
  });
  return batch;
}

/// Samples plus one log importance weight per row.
struct WeightedBatch {
  SampleBatch points;
  std::vector<double> log_weights;
};

/// Importance-weight effective sample size (sum w)^2 / sum w^2 on
/// normalized weights; lies in [1, n].
inline double ess_weights(std::span<const double> log_weights) {
  if (log_weights.empty()) {
    throw std::invalid_argument("ess_weights: empty weights");
  }
  const double lw_max =
      *std::max_element(log_weights.begin(), log_weights.end());
  double s1 = 0.0, s2 = 0.0;
  for (double lw : log_weights) {
    const double w = std::exp(lw - lw_max);
    s1 += w;
    s2 += w * w;
  }
  return s1 * s1 / s2;
}

inline double ess_weights(const WeightedBatch& weighted) {
  return ess_weights(std::span<const double>(weighted.log_weights));
}

struct AisConfig {
  int n_temps = 1000;      // intermediate distributions
  int leapfrog_steps = 5;  // per HMC transition
  int n_chains = 64;
  std::optional<double> step_size;  // nullopt: adapt toward ~70% acceptance
};

namespace detail {

/// Geometric bridge f_beta = p0^(1-beta) * pi*^beta with the normalized
/// initial density, so the accumulated weights estimate log of the
/// target normalizer directly.
template <TargetModel Target>
class BlendedTarget {
 public:
  BlendedTarget(const Target& target, const InitialDistParams& p0, double beta)
      : target_(&target), p0_(&p0), beta_(beta) {
    log_norm_ = -0.5 * static_cast<double>(p0.dim()) *
                std::log(2.0 * std::numbers::pi);
    for (double ls : p0.log_std) log_norm_ -= ls;
  }

  std::size_t dim() const { return p0_->dim(); }

  double log_p0(std::span<const double> x) const {
    double q = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double sigma = std::exp(p0_->log_std[j]);
      const double z = (x[j] - p0_->mean[j]) / sigma;
      q += z * z;
    }
    return log_norm_ - 0.5 * q;
  }

  template <class S>
  S log_density(std::span<const S> x) const {
    S q = S(0.0);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double inv_var = std::exp(-2.0 * p0_->log_std[j]);
      const S z = x[j] - p0_->mean[j];
      q = q + z * z * (0.5 * inv_var);
    }
    const S lp0 = S(log_norm_) - q;
    return lp0 * (1.0 - beta_) + target_->log_density(x) * beta_;
  }

  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    target_->gradient(x, g);
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double inv_var = std::exp(-2.0 * p0_->log_std[j]);
      const S gp0 = (x[j] - p0_->mean[j]) * (-inv_var);
      g[j] = g[j] * beta_ + gp0 * (1.0 - beta_);
    }
  }

  std::optional<GroundTruth> ground_truth() const { return std::nullopt; }
  std::optional<Box> sampling_box() const { return std::nullopt; }

 private:
  const Target* target_;
  const InitialDistParams* p0_;
  double beta_;
  double log_norm_;
};

}  // namespace detail

template <TargetModel Target>
struct AisResult {
  double log_z = 0.0;
  WeightedBatch weighted;
  double ess = 0.0;
  std::vector<double> step_size_trace;  // resolved step size per temperature
};

/**
 * Annealed importance sampling along the geometric path from the
 * initial Gaussian to the target, with one M-H-corrected HMC transition
 * per intermediate distribution and log-weight accumulation
 * sum_j (beta_{j+1} - beta_j) (log pi* - log p0).  log_z estimates
 * log of the target normalizer by log-mean-exp of the weights; the
 * weighted batch supports self-normalized expectations.  In auto mode
 * the step size is shared across chains and nudged multiplicatively
 * toward ~70% acceptance after every temperature.
 */
template <TargetModel Target>
AisResult<Target> ais_estimate(const Target& target,
                               const InitialDistParams& p0,
                               const AisConfig& config, std::uint64_t seed) {
  if (config.n_temps < 2) {
    throw std::invalid_argument("ais_estimate: n_temps must be >= 2");
  }
  if (config.n_chains < 2) {
    throw std::invalid_argument("ais_estimate: n_chains must be >= 2");
  }
  if (p0.dim() != target.dim()) {
    throw std::invalid_argument("ais_estimate: dimension mismatch");
  }
  const std::size_t d = target.dim();
  const std::size_t n = static_cast<std::size_t>(config.n_chains);
  const int n_temps = config.n_temps;

  std::vector<double> states(n * d);
  std::vector<double> log_w(n, 0.0);
  std::vector<Rng> rngs;
  rngs.reserve(n);
  for (std::size_t c = 0; c < n; ++c) {
    rngs.emplace_back(substream_seed(seed, {0xA15, c}));
  }
  parallel_for(n, [&](std::size_t c) {
    for (std::size_t j = 0; j < d; ++j) {
      states[c * d + j] = p0.mean[j] + std::exp(p0.log_std[j]) * rngs[c].normal();
    }
  });

  double step = config.step_size.value_or(0.2);
  AisResult<Target> result;
  result.step_size_trace.reserve(static_cast<std::size_t>(n_temps) - 1);
  std::vector<std::uint8_t> accepted(n, 0);
  const detail::BlendedTarget<Target> scorer(target, p0, 1.0);

  for (int j = 1; j < n_temps; ++j) {
    const double beta_prev =
        static_cast<double>(j - 1) / static_cast<double>(n_temps - 1);
    const double beta =
        static_cast<double>(j) / static_cast<double>(n_temps - 1);
    const double delta_beta = beta - beta_prev;
    const detail::BlendedTarget<Target> bridge(target, p0, beta);
    const HmcStepParams params = HmcStepParams::from_values(
        step, std::vector<double>(d, 1.0), config.leapfrog_steps);
    parallel_for(n, [&](std::size_t c) {
      auto x = std::span<double>(states).subspan(c * d, d);
      log_w[c] += delta_beta *
                  (target.log_density(std::span<const double>(x)) -
                   scorer.log_p0(std::span<const double>(x)));
      const TransitionNoise noise = draw_transition_noise(d, rngs[c]);
      bool acc = false;
      const std::vector<double> next = hmc_transition(
          std::span<const double>(x), bridge, params, noise, &acc);
      std::copy(next.begin(), next.end(), x.begin());
      accepted[c] = acc ? 1 : 0;
    });
    result.step_size_trace.push_back(step);
    if (!config.step_size) {
      double rate = 0.0;
      for (auto a : accepted) rate += a;
      rate /= static_cast<double>(n);
      step = std::clamp(step * std::exp(0.5 * (rate - 0.7)), 1e-5, 100.0);
    }
  }

  double lw_max = *std::max_element(log_w.begin(), log_w.end());
  double sum = 0.0;
  for (double lw : log_w) sum += std::exp(lw - lw_max);
  result.log_z = lw_max + std::log(sum / static_cast<double>(n));

  result.weighted.points = SampleBatch(n, d, seed, n_temps);
  std::copy(states.begin(), states.end(),
            result.weighted.points.data.begin());
  result.weighted.log_weights = std::move(log_w);
  result.ess = ess_weights(result.weighted);
  if (result.ess < 2.0) {
    throw NumericalError(
        "ais_estimate: degenerate weights, effective sample size " +
            std::to_string(result.ess) + " < 2",
        -1);
  }
  return result;
}

/// Self-normalized estimate of E_pi[log pi*] from a weighted batch.
template <TargetModel Target>
double weighted_expected_log_target(const WeightedBatch& weighted,
                                    const Target& target) {
  if (weighted.points.n == 0) {
    throw std::invalid_argument("weighted_expected_log_target: empty batch");
  }
  const double lw_max = *std::max_element(weighted.log_weights.begin(),
                                          weighted.log_weights.end());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < weighted.points.n; ++i) {
    const double w = std::exp(weighted.log_weights[i] - lw_max);
    num += w * target.log_density(weighted.points.row(i));
    den += w;
  }
  return num / den;
}

/// Weighted batches serialize like sample batches plus a log_weight column.
inline void write_weighted_batch(const WeightedBatch& weighted,
                                 const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  for (std::size_t j = 0; j < weighted.points.dim; ++j) out << 'x' << j << ',';
  out << "log_weight\n";
  for (std::size_t i = 0; i < weighted.points.n; ++i) {
    const auto r = weighted.points.row(i);
    for (std::size_t j = 0; j < weighted.points.dim; ++j) {
      out << csv::format_double(r[j]) << ',';
    }
    out << csv::format_double(weighted.log_weights[i]) << '\n';
  }
}

}  // namespace ergo
