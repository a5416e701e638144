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

#include "ergo/oracles.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "ergo/eval.hpp"
#include "test_util.hpp"

using ergo::AisConfig;
using ergo::InitialDistParams;

namespace {

const ergo::CorrelatedGaussian kCorrGauss(2.0, 1.5, 1.6);

// A sliver of mass inside a huge box, for the bad-bound abort path.
struct SliverInHugeBox {
  ergo::DiagonalGaussian base{std::vector<double>{1e-4, 1e-4}};
  std::size_t dim() const { return 2; }
  template <class S>
  S log_density(std::span<const S> x) const {
    return base.log_density(x);
  }
  template <class S>
  void gradient(std::span<const S> x, std::span<S> g) const {
    base.gradient(x, g);
  }
  std::optional<ergo::GroundTruth> ground_truth() const {
    return std::nullopt;
  }
  std::optional<ergo::Box> sampling_box() const {
    return ergo::Box{{-50, -50}, {50, 50}};
  }
};

}  // namespace

TEST(Oracles, RejectionSamplingMatchesExactMoments) {
  double rate = 0.0;
  const auto batch = ergo::rejection_sample(kCorrGauss, 100000, 51, &rate);
  EXPECT_GT(rate, 1e-3);
  const auto m = ergo::test::batch_moments(batch);
  EXPECT_NEAR(m.cov[0][0], 2.0, 0.05);
  EXPECT_NEAR(m.cov[0][1], 1.5, 0.05);
  EXPECT_NEAR(m.cov[1][1], 1.6, 0.05);
  const auto est = ergo::expected_log_target(batch, kCorrGauss);
  EXPECT_NEAR(est.estimate, -1.0, 0.02);
}

TEST(Oracles, RejectionOnUniformTargetAcceptsAtBoundRate) {
  // Proposal equals the target, so only the 1.2 safety factor rejects.
  const ergo::test::UniformBoxTarget flat{ergo::Box{{-2, -1}, {2, 1}}};
  double rate = 0.0;
  const auto batch = ergo::rejection_sample(flat, 5000, 3, &rate);
  EXPECT_NEAR(rate, 1.0 / 1.2, 1e-6);
  EXPECT_EQ(batch.n, 5000u);
  // samples cover the box uniformly
  const auto m = ergo::test::batch_moments(batch);
  EXPECT_NEAR(m.mean[0], 0.0, 0.1);
  EXPECT_NEAR(m.cov[0][0], 4.0 / 3.0, 0.1);
}

TEST(Oracles, RejectionAbortsWhenBoxIsHopeless) {
  // Estimated acceptance < 1e-4 must abort before sampling.
  const SliverInHugeBox target;
  EXPECT_THROW((void)ergo::rejection_sample(target, 10, 1),
               ergo::NumericalError);
}

TEST(Oracles, AisRecoversStandardGaussianNormalizer) {
  const ergo::DiagonalGaussian target({1.0, 1.0});
  AisConfig config;
  config.n_temps = 100;
  config.n_chains = 64;
  const auto result = ergo::ais_estimate(
      target, InitialDistParams::isotropic(2, 4.0), config, 71);
  EXPECT_NEAR(result.log_z, std::log(2.0 * std::numbers::pi), 0.05);
  EXPECT_GE(result.ess, 2.0);
  EXPECT_LE(result.ess, 64.0);
}

TEST(Oracles, TwoTemperatureScheduleIsPlainImportanceSampling) {
  AisConfig config;
  config.n_temps = 2;
  config.n_chains = 128;
  const InitialDistParams p0 = InitialDistParams::isotropic(2, 4.0);
  const std::uint64_t seed = 5;
  const auto result = ergo::ais_estimate(kCorrGauss, p0, config, seed);

  // replicate: one importance-sampling weight per chain on the same
  // substreams, log w = log pi*(x0) - log p0(x0)
  std::vector<double> log_w(128);
  const double log_norm = -std::log(2.0 * std::numbers::pi) -
                          std::log(4.0);  // normalized N(0, 4I) density terms
  for (std::size_t c = 0; c < 128; ++c) {
    ergo::Rng rng(ergo::substream_seed(seed, {0xA15, c}));
    std::vector<double> x{2.0 * rng.normal(), 2.0 * rng.normal()};
    const double lp0 =
        log_norm - 0.5 * (x[0] * x[0] + x[1] * x[1]) / 4.0;
    log_w[c] = kCorrGauss.log_density(std::span<const double>(x)) - lp0;
  }
  double max_lw = *std::max_element(log_w.begin(), log_w.end());
  double sum = 0.0;
  for (double lw : log_w) sum += std::exp(lw - max_lw);
  const double expected_log_z = max_lw + std::log(sum / 128.0);
  EXPECT_NEAR(result.log_z, expected_log_z, 1e-12);
  for (std::size_t c = 0; c < 128; ++c) {
    EXPECT_NEAR(result.weighted.log_weights[c], log_w[c], 1e-12);
  }
}

TEST(Oracles, AisSelfNormalizedExpectationOnCorrGauss) {
  AisConfig config;
  config.n_temps = 200;
  config.n_chains = 2048;
  const auto result = ergo::ais_estimate(
      kCorrGauss, InitialDistParams::isotropic(2, 4.0), config, 11);
  const double est =
      ergo::weighted_expected_log_target(result.weighted, kCorrGauss);
  EXPECT_NEAR(est, -1.0, 0.05);
  // log_z should also match the analytic normalizer of this Gaussian
  EXPECT_NEAR(result.log_z, *kCorrGauss.ground_truth()->log_z, 0.1);
}

TEST(Oracles, MoreTemperaturesReduceLogZVariance) {
  const InitialDistParams p0 = InitialDistParams::isotropic(2, 4.0);
  const auto variance_at = [&](int n_temps) {
    std::vector<double> values;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      AisConfig config;
      config.n_temps = n_temps;
      config.n_chains = 64;
      values.push_back(
          ergo::ais_estimate(kCorrGauss, p0, config, 1000 + rep).log_z);
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= values.size();
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return var / (values.size() - 1);
  };
  EXPECT_GT(variance_at(10), variance_at(200));
}

TEST(Oracles, EssHandValues) {
  EXPECT_DOUBLE_EQ(ergo::ess_weights(std::vector<double>(100, 0.37)), 100.0);

  std::vector<double> one_hot(50, -1e30);
  one_hot[17] = 0.0;
  EXPECT_NEAR(ergo::ess_weights(std::span<const double>(one_hot)), 1.0, 1e-9);

  // weights (2, 1, 1): (sum)^2 / sum of squares = 16 / 6
  const std::vector<double> lw{std::log(2.0), 0.0, 0.0};
  EXPECT_NEAR(ergo::ess_weights(std::span<const double>(lw)), 16.0 / 6.0,
              1e-12);
}

TEST(Oracles, EssStaysInRange) {
  ergo::Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> lw(64);
    for (double& v : lw) v = 2.0 * rng.normal();
    const double ess = ergo::ess_weights(std::span<const double>(lw));
    EXPECT_GE(ess, 1.0);
    EXPECT_LE(ess, 64.0);
  }
}

TEST(Oracles, DegenerateWeightsAbort) {
  // Initial distribution far from the target with a two-step schedule:
  // one weight dominates and the effective sample size collapses.
  InitialDistParams p0;
  p0.mean = {30.0, 30.0};
  p0.log_std = {std::log(0.5), std::log(0.5)};
  AisConfig config;
  config.n_temps = 2;
  config.n_chains = 16;
  EXPECT_THROW((void)ergo::ais_estimate(kCorrGauss, p0, config, 3),
               ergo::NumericalError);
}

TEST(Oracles, LogZEquivariantAndExpectationsInvariantUnderScaling) {
  const double log_c = std::log(9.0);
  const ergo::test::Scaled<ergo::CorrelatedGaussian> scaled{kCorrGauss, log_c};
  const InitialDistParams p0 = InitialDistParams::isotropic(2, 4.0);
  AisConfig config;
  config.n_temps = 50;
  config.n_chains = 64;
  const auto base = ergo::ais_estimate(kCorrGauss, p0, config, 13);
  const auto shifted = ergo::ais_estimate(scaled, p0, config, 13);
  EXPECT_NEAR(shifted.log_z - base.log_z, log_c, 1e-9);

  // normalized weights are identical, so weighted expectations of any
  // fixed function agree exactly; use the first coordinate
  const auto weighted_mean_x = [](const ergo::WeightedBatch& w) {
    double max_lw = *std::max_element(w.log_weights.begin(),
                                      w.log_weights.end());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < w.points.n; ++i) {
      const double wi = std::exp(w.log_weights[i] - max_lw);
      num += wi * w.points.row(i)[0];
      den += wi;
    }
    return num / den;
  };
  EXPECT_NEAR(weighted_mean_x(base.weighted),
              weighted_mean_x(shifted.weighted), 1e-12);
}

TEST(Oracles, StepSizeBehaviour) {
  const ergo::DiagonalGaussian target({1.0, 1.0});
  const InitialDistParams p0 = InitialDistParams::isotropic(2, 4.0);

  AisConfig fixed;
  fixed.n_temps = 20;
  fixed.n_chains = 16;
  fixed.step_size = 0.33;
  const auto rf = ergo::ais_estimate(target, p0, fixed, 2);
  for (double s : rf.step_size_trace) EXPECT_DOUBLE_EQ(s, 0.33);

  AisConfig adaptive;
  adaptive.n_temps = 200;
  adaptive.n_chains = 64;
  const auto ra = ergo::ais_estimate(target, p0, adaptive, 2);
  bool moved = false;
  for (double s : ra.step_size_trace) {
    if (s != ra.step_size_trace.front()) moved = true;
  }
  EXPECT_TRUE(moved);
}

TEST(Oracles, WeightedBatchCsvHasLogWeightColumn) {
  AisConfig config;
  config.n_temps = 10;
  config.n_chains = 8;
  const auto result = ergo::ais_estimate(
      kCorrGauss, InitialDistParams::isotropic(2, 4.0), config, 3);
  const std::string path = ::testing::TempDir() + "/weighted.csv";
  ergo::write_weighted_batch(result.weighted, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "x0,x1,log_weight");
  int rows = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  EXPECT_EQ(rows, 8);
}

TEST(Oracles, ConfigPreconditions) {
  const InitialDistParams p0 = InitialDistParams::isotropic(2, 4.0);
  AisConfig bad;
  bad.n_temps = 1;
  EXPECT_THROW((void)ergo::ais_estimate(kCorrGauss, p0, bad, 1),
               std::invalid_argument);
  bad.n_temps = 10;
  bad.n_chains = 1;
  EXPECT_THROW((void)ergo::ais_estimate(kCorrGauss, p0, bad, 1),
               std::invalid_argument);
  EXPECT_THROW(ergo::ess_weights(std::span<const double>()),
               std::invalid_argument);
}
