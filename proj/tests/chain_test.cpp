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

#include "ergo/chain.hpp"

#include <cmath>
#include <span>
#include <vector>

#include <gtest/gtest.h>

#include "ergo/eval.hpp"
#include "ergo/trainer.hpp"
#include "test_util.hpp"

using ergo::ChainNoise;
using ergo::ChainSpec;
using ergo::InitialDistParams;

namespace {

const ergo::CorrelatedGaussian kCorrGauss(2.0, 1.5, 1.6);

ChainSpec<ergo::CorrelatedGaussian> corr_spec(int length, double p0_var,
                                              double floor,
                                              std::uint64_t seed) {
  return ergo::make_chain_spec(
      kCorrGauss, InitialDistParams::isotropic(2, p0_var),
      ergo::init_hmc_steps(kCorrGauss, length, 5, {0.01, 0.025}, seed), floor);
}

}  // namespace

TEST(Chain, SampleP0StandardMoments) {
  const auto p0 = InitialDistParams::isotropic(2, 1.0);
  const auto batch = ergo::sample_p0(p0, 100000, 21);
  const auto m = ergo::test::batch_moments(batch);
  EXPECT_NEAR(m.mean[0], 0.0, 0.02);
  EXPECT_NEAR(m.mean[1], 0.0, 0.02);
  EXPECT_NEAR(m.cov[0][0], 1.0, 0.02);
  EXPECT_NEAR(m.cov[1][1], 1.0, 0.02);
}

TEST(Chain, SampleP0VarianceThree) {
  const auto p0 = InitialDistParams::isotropic(2, 3.0);
  const auto batch = ergo::sample_p0(p0, 100000, 22);
  const auto m = ergo::test::batch_moments(batch);
  EXPECT_NEAR(m.cov[0][0], 3.0, 0.05);
  EXPECT_NEAR(m.cov[1][1], 3.0, 0.05);
}

TEST(Chain, SampleP0Deterministic) {
  const auto p0 = InitialDistParams::isotropic(2, 2.0);
  const auto a = ergo::sample_p0(p0, 512, 7);
  const auto b = ergo::sample_p0(p0, 512, 7);
  const auto c = ergo::sample_p0(p0, 512, 8);
  EXPECT_EQ(a.data, b.data);
  EXPECT_NE(a.data, c.data);
}

TEST(Chain, EntropyClosedForms) {
  EXPECT_NEAR(ergo::entropy_p0(InitialDistParams::isotropic(2, 1.0)), 2.83788,
              1e-5);
  EXPECT_NEAR(ergo::entropy_p0(InitialDistParams::isotropic(2, 3.0)), 3.93649,
              1e-5);
  EXPECT_NEAR(ergo::entropy_p0(InitialDistParams::isotropic(1, 1.0)), 1.41894,
              1e-5);
  InitialDistParams p1;
  p1.mean = {0.0};
  p1.log_std = {0.7};
  EXPECT_NEAR(ergo::entropy_p0(p1), 0.7 + 1.4189385332046727, 1e-12);
}

TEST(Chain, LengthZeroEqualsInitialSampler) {
  const auto spec = corr_spec(0, 3.0, 2.81223, 3);
  const auto run = ergo::run_chain(spec, 256, 99, false);
  const auto direct = ergo::sample_p0(spec.p0, 256, 99);
  EXPECT_EQ(run.final_states.data, direct.data);
}

TEST(Chain, StationaryWhenP0EqualsTarget) {
  const ergo::DiagonalGaussian target({1.0, 1.0});
  const auto spec = ergo::make_chain_spec(
      target, InitialDistParams::isotropic(2, 1.0),
      ergo::init_hmc_steps(target, 3, 5, {0.05, 0.2}, 17), -10.0);
  const auto run = ergo::run_chain(spec, 40000, 4, false);
  const auto m = ergo::test::batch_moments(run.final_states);
  EXPECT_NEAR(m.mean[0], 0.0, 0.02);
  EXPECT_NEAR(m.cov[0][0], 1.0, 0.03);
  EXPECT_NEAR(m.cov[1][1], 1.0, 0.03);
  EXPECT_NEAR(m.cov[0][1], 0.0, 0.02);
}

TEST(Chain, ExpectedLogTargetNonDecreasingAlongUntrainedChain) {
  // The qualitative shape of the before-training curve: E_{p_t}[log pi*]
  // starts well below -1 and rises monotonically within MC error.
  const auto spec = corr_spec(9, 3.0, 2.81223, 12);
  const auto curve = ergo::convergence_curve(spec, 20000, 5);
  ASSERT_EQ(curve.size(), 10u);
  EXPECT_LT(curve.front().estimate, -1.0);
  for (std::size_t t = 0; t + 1 < curve.size(); ++t) {
    const double slack = 2.0 * std::sqrt(curve[t].std_error * curve[t].std_error +
                                         curve[t + 1].std_error *
                                             curve[t + 1].std_error);
    EXPECT_GE(curve[t + 1].estimate, curve[t].estimate - slack)
        << "between t=" << t << " and t=" << t + 1;
  }
}

TEST(Chain, RunDeterministicBitwise) {
  const auto spec = corr_spec(4, 3.0, 2.81223, 8);
  const auto a = ergo::run_chain(spec, 300, 42, true);
  const auto b = ergo::run_chain(spec, 300, 42, true);
  EXPECT_EQ(a.final_states.data, b.final_states.data);
  for (std::size_t t = 0; t < a.marginals.size(); ++t) {
    EXPECT_EQ(a.marginals[t].data, b.marginals[t].data);
  }
}

TEST(Chain, ParallelMatchesSequentialBitwise) {
  const auto spec = corr_spec(3, 3.0, 2.81223, 8);
  ergo::set_max_threads(1);
  const auto seq = ergo::run_chain(spec, 500, 13, false);
  ergo::set_max_threads(4);
  const auto par = ergo::run_chain(spec, 500, 13, false);
  ergo::set_max_threads(0);
  EXPECT_EQ(seq.final_states.data, par.final_states.data);
}

TEST(Chain, RowsAreIndependent) {
  const auto spec = corr_spec(2, 3.0, 2.81223, 8);
  const auto run = ergo::run_chain(spec, 10000, 31, false);
  const auto& batch = run.final_states;
  // lag-1 correlation across rows, per dimension
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < batch.n; ++i) mean += batch.row(i)[j];
    mean /= static_cast<double>(batch.n);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i + 1 < batch.n; ++i) {
      num += (batch.row(i)[j] - mean) * (batch.row(i + 1)[j] - mean);
    }
    for (std::size_t i = 0; i < batch.n; ++i) {
      den += (batch.row(i)[j] - mean) * (batch.row(i)[j] - mean);
    }
    const double rho = num / den;
    EXPECT_LT(std::abs(rho), 3.0 / std::sqrt(static_cast<double>(batch.n)));
  }
}

TEST(Chain, MarginalRecordingShapes) {
  const auto spec = corr_spec(5, 3.0, 2.81223, 8);
  const auto run = ergo::run_chain(spec, 64, 2, true);
  ASSERT_EQ(run.marginals.size(), 6u);
  for (int t = 0; t <= 5; ++t) {
    EXPECT_EQ(run.marginals[t].chain_length, t);
    EXPECT_EQ(run.marginals[t].n, 64u);
  }
  // last marginal is the final-state batch
  EXPECT_EQ(run.marginals.back().data, run.final_states.data);
}

TEST(Chain, DifferentiableGradientMatchesFiniteDifferences) {
  // Pathwise gradients against central differences with common random
  // numbers, excluding realizations where an accept decision flips.
  for (const int length : {1, 3, 5}) {
    const auto spec = corr_spec(length, 3.0, 2.81223, 100 + length);
    int checked = 0;
    for (std::uint64_t chain_idx = 0; chain_idx < 40 && checked < 12;
         ++chain_idx) {
      ergo::Rng rng(ergo::chain_substream(1000 + length, chain_idx));
      const ChainNoise noise = ergo::draw_chain_noise(2, length, rng);

      ergo::ad::Tape tape;
      ergo::ChainParamVars vars;
      const ergo::ad::Var head =
          ergo::chain_forward_differentiable(tape, spec, noise, false, vars);
      const auto adj = tape.backward(head);
      const auto mask0 = ergo::chain_forward_value(spec, noise).accepted;

      const auto flat = ergo::test::flat_params(spec);
      std::vector<double> ad_grad;
      for (std::size_t j = 0; j < 2; ++j) {
        ad_grad.push_back(ergo::ad::Tape::adjoint(adj, vars.mean[j]));
      }
      for (std::size_t j = 0; j < 2; ++j) {
        ad_grad.push_back(ergo::ad::Tape::adjoint(adj, vars.log_std[j]));
      }
      for (int t = 0; t < length; ++t) {
        for (std::size_t j = 0; j < 2; ++j) {
          ad_grad.push_back(ergo::ad::Tape::adjoint(
              adj, vars.steps[t].log_momentum_variance[j]));
        }
        ad_grad.push_back(
            ergo::ad::Tape::adjoint(adj, vars.steps[t].log_step_size));
      }

      bool flip = false;
      std::vector<double> fd_grad(flat.size());
      const double h = 1e-6;
      for (std::size_t p = 0; p < flat.size() && !flip; ++p) {
        auto hi = flat;
        auto lo = flat;
        hi[p] += h;
        lo[p] -= h;
        const auto spec_hi = ergo::test::with_flat_params(spec, hi);
        const auto spec_lo = ergo::test::with_flat_params(spec, lo);
        const auto [vh, mh] = ergo::test::chain_value_and_mask(spec_hi, noise);
        const auto [vl, ml] = ergo::test::chain_value_and_mask(spec_lo, noise);
        if (mh != mask0 || ml != mask0) {
          flip = true;  // decision flipped inside the stencil: discard
          break;
        }
        fd_grad[p] = (vh - vl) / (2.0 * h);
      }
      if (flip) continue;
      ++checked;
      for (std::size_t p = 0; p < flat.size(); ++p) {
        EXPECT_TRUE(ergo::test::close_rel(ad_grad[p], fd_grad[p], 1e-4))
            << "T=" << length << " chain " << chain_idx << " param " << p
            << ": ad=" << ad_grad[p] << " fd=" << fd_grad[p];
      }
    }
    EXPECT_GE(checked, 8) << "T=" << length;
  }
}

TEST(Chain, LengthZeroGradientIsReparameterizationIntegrand) {
  const auto spec = corr_spec(0, 3.0, 2.81223, 5);
  ergo::Rng rng(ergo::chain_substream(64, 0));
  const ChainNoise noise = ergo::draw_chain_noise(2, 0, rng);

  ergo::ad::Tape tape;
  ergo::ChainParamVars vars;
  const ergo::ad::Var head =
      ergo::chain_forward_differentiable(tape, spec, noise, false, vars);
  const auto adj = tape.backward(head);

  std::vector<double> x0(2);
  for (std::size_t j = 0; j < 2; ++j) {
    x0[j] = spec.p0.mean[j] + std::exp(spec.p0.log_std[j]) * noise.eps[j];
  }
  EXPECT_NEAR(head.value(),
              kCorrGauss.log_density(std::span<const double>(x0)), 1e-14);
  const auto g = ergo::grad_log_density(kCorrGauss, x0);
  for (std::size_t j = 0; j < 2; ++j) {
    EXPECT_NEAR(ergo::ad::Tape::adjoint(adj, vars.mean[j]), g[j], 1e-12);
    EXPECT_NEAR(ergo::ad::Tape::adjoint(adj, vars.log_std[j]),
                g[j] * std::exp(spec.p0.log_std[j]) * noise.eps[j], 1e-12);
  }
}

TEST(Chain, StopGradientCutsUpstreamTransitions) {
  // With detached inputs, only the last transition's parameters can
  // influence log pi*(x_T); earlier steps receive exactly zero, and the
  // last step's gradient equals a single-transition computation started
  // from the realized x_{T-1}.
  const int length = 3;
  const auto spec = corr_spec(length, 3.0, 2.81223, 44);
  ergo::Rng rng(ergo::chain_substream(9, 0));
  const ChainNoise noise = ergo::draw_chain_noise(2, length, rng);

  ergo::ad::Tape tape;
  ergo::ChainParamVars vars;
  const ergo::ad::Var head =
      ergo::chain_forward_differentiable(tape, spec, noise, true, vars);
  const auto adj = tape.backward(head);

  for (int t = 0; t < length - 1; ++t) {
    EXPECT_EQ(ergo::ad::Tape::adjoint(adj, vars.steps[t].log_step_size), 0.0);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(ergo::ad::Tape::adjoint(
                    adj, vars.steps[t].log_momentum_variance[j]),
                0.0);
    }
  }
  EXPECT_EQ(ergo::ad::Tape::adjoint(adj, vars.mean[0]), 0.0);
  EXPECT_EQ(ergo::ad::Tape::adjoint(adj, vars.log_std[0]), 0.0);

  // reference: tape over the last transition only, from realized x_2
  std::vector<double> x(2);
  {
    ChainNoise prefix = noise;
    prefix.eta.resize(length - 1);
    prefix.u.resize(length - 1);
    auto short_spec = spec;
    short_spec.steps.resize(length - 1);
    const auto r = ergo::chain_forward_value(short_spec, prefix);
    x = r.x_final;
  }
  ergo::ad::Tape tape2;
  std::vector<ergo::ad::Var> x_in(x.begin(), x.end());
  std::vector<ergo::ad::Var> log_mom;
  for (std::size_t j = 0; j < 2; ++j) {
    log_mom.push_back(
        tape2.input(spec.steps[length - 1].log_momentum_variance[j]));
  }
  const ergo::ad::Var log_step =
      tape2.input(spec.steps[length - 1].log_step_size);
  const auto step = ergo::mh_transform<ergo::CorrelatedGaussian, ergo::ad::Var>(
      std::span<const ergo::ad::Var>(x_in), log_step,
      std::span<const ergo::ad::Var>(log_mom),
      spec.steps[length - 1].leapfrog_steps, kCorrGauss,
      std::span<const double>(noise.eta[length - 1]), noise.u[length - 1]);
  const ergo::ad::Var head2 = kCorrGauss.log_density(
      std::span<const ergo::ad::Var>(step.position));
  const auto adj2 = tape2.backward(head2);
  EXPECT_NEAR(
      ergo::ad::Tape::adjoint(adj, vars.steps[length - 1].log_step_size),
      ergo::ad::Tape::adjoint(adj2, log_step), 1e-12);
  EXPECT_NEAR(head.value(), head2.value(), 1e-12);
}

TEST(Chain, FailureCarriesChainAndStepContext) {
  auto spec = corr_spec(3, 3.0, 2.81223, 8);
  spec.steps[1].log_step_size = std::log(1e150);
  try {
    (void)ergo::run_chain(spec, 4, 1, false);
    FAIL() << "expected NumericalError";
  } catch (const ergo::NumericalError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("chain"), std::string::npos);
    EXPECT_NE(what.find("step 1"), std::string::npos);
  }
}

TEST(Chain, SpecConstructionValidatesEntropyFloor) {
  EXPECT_THROW(corr_spec(2, 0.25, 2.81223, 3), std::invalid_argument);
  EXPECT_NO_THROW(corr_spec(2, 3.0, 2.81223, 3));
}

TEST(Chain, BatchCsvRoundTrip) {
  const auto spec = corr_spec(1, 3.0, 2.81223, 8);
  const auto run = ergo::run_chain(spec, 32, 5, false);
  const std::string path = ::testing::TempDir() + "/batch.csv";
  ergo::csv::write_batch(run.final_states, path, {"note=test"});
  const auto loaded = ergo::csv::read_batch(path);
  ASSERT_EQ(loaded.n, run.final_states.n);
  ASSERT_EQ(loaded.dim, run.final_states.dim);
  for (std::size_t i = 0; i < loaded.data.size(); ++i) {
    EXPECT_DOUBLE_EQ(loaded.data[i], run.final_states.data[i]);
  }
}
