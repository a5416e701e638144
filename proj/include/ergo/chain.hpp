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
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/autodiff.hpp"
#include "ergo/batch.hpp"
#include "ergo/errors.hpp"
#include "ergo/hmc.hpp"
#include "ergo/parallel.hpp"
#include "ergo/rng.hpp"
#include "ergo/targets.hpp"

namespace ergo {

/// Mean and per-dimension log standard deviations of a diagonal
/// Gaussian initial distribution.
struct InitialDistParams {
  std::vector<double> mean;
  std::vector<double> log_std;

  std::size_t dim() const { return mean.size(); }

  static InitialDistParams isotropic(std::size_t dim, double variance) {
    InitialDistParams p;
    p.mean.assign(dim, 0.0);
    p.log_std.assign(dim, 0.5 * std::log(variance));
    return p;
  }
};

/// Closed-form entropy of the initial distribution, in nats.
inline double entropy_p0(const InitialDistParams& p0) {
  double h = 0.5 * static_cast<double>(p0.dim()) *
             std::log(2.0 * std::numbers::pi * std::numbers::e);
  for (double s : p0.log_std) h += s;
  return h;
}

/**
 * A finite chain: draws from the initial distribution pushed through T
 * M-H-corrected HMC transitions, each with its own hyperparameters.
 * The marginal of the final state is the sampling distribution the
 * trainer tunes.  entropy_floor is the constraint threshold h; use
 * -infinity to disable the constraint.
 */
template <TargetModel Target>
struct ChainSpec {
  Target target;
  InitialDistParams p0;
  std::vector<HmcStepParams> steps;
  double entropy_floor = -std::numeric_limits<double>::infinity();

  std::size_t dim() const { return p0.dim(); }
  int length() const { return static_cast<int>(steps.size()); }
};

template <TargetModel Target>
ChainSpec<Target> make_chain_spec(Target target, InitialDistParams p0,
                                  std::vector<HmcStepParams> steps,
                                  double entropy_floor) {
  if (p0.dim() != target.dim() || p0.log_std.size() != p0.dim()) {
    throw std::invalid_argument("chain spec: dimension mismatch");
  }
  if (!(entropy_p0(p0) > entropy_floor)) {
    throw std::invalid_argument(
        "chain spec: initial entropy " + std::to_string(entropy_p0(p0)) +
        " does not exceed the floor " + std::to_string(entropy_floor));
  }
  for (const auto& s : steps) {
    if (s.log_momentum_variance.size() != p0.dim()) {
      throw std::invalid_argument("chain spec: step parameter dimension");
    }
  }
  ChainSpec<Target> spec{std::move(target), std::move(p0), std::move(steps),
                         entropy_floor};
  return spec;
}

/// All randomness consumed by one chain, materialized so a
/// differentiable or finite-difference pass can replay it exactly.
struct ChainNoise {
  std::vector<double> eps;                // d, initial-state noise
  std::vector<std::vector<double>> eta;   // T x d, momentum noise
  std::vector<double> u;                  // T, accept thresholds
};

/// Noise layout: per chain, first the initial-state draws, then per
/// step the momentum draws followed by the accept threshold.
inline ChainNoise draw_chain_noise(std::size_t dim, int length, Rng& rng) {
  ChainNoise noise;
  noise.eps.resize(dim);
  rng.fill_normal(noise.eps);
  noise.eta.resize(length);
  noise.u.resize(length);
  for (int t = 0; t < length; ++t) {
    noise.eta[t].resize(dim);
    rng.fill_normal(noise.eta[t]);
    noise.u[t] = rng.uniform();
  }
  return noise;
}

inline std::uint64_t chain_substream(std::uint64_t seed, std::size_t chain) {
  return substream_seed(seed, {0x1, chain});
}

/// n independent draws from the initial distribution via the
/// reparameterization x = mean + exp(log_std) * eps.
inline SampleBatch sample_p0(const InitialDistParams& p0, std::size_t n,
                             std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_p0: n must be >= 1");
  const std::size_t d = p0.dim();
  SampleBatch batch(n, d, seed, 0);
  std::vector<double> sigma(d);
  for (std::size_t j = 0; j < d; ++j) sigma[j] = std::exp(p0.log_std[j]);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(chain_substream(seed, i));
    auto row = batch.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = p0.mean[j] + sigma[j] * rng.normal();
    }
  });
  return batch;
}

template <class S>
struct ChainResultT {
  std::vector<S> x_final;
  S log_pi_final{};
  std::vector<bool> accepted;
};

/**
 * Deterministic single-chain forward pass on the supplied noise.  The
 * plain simulation, the differentiable pass, and finite-difference
 * checks all route through this composition, so they see identical
 * arithmetic and identical accept decisions.  `recorder`, when given,
 * receives the position after every step (T+1 states including the
 * initial one).
 */
template <TargetModel Target, class S>
ChainResultT<S> chain_forward(
    const Target& target, std::span<const S> mean, std::span<const S> log_std,
    std::span<const S> step_log_step_size,
    const std::vector<std::vector<S>>& step_log_mom_var,
    std::span<const int> step_leapfrog, const ChainNoise& noise,
    bool stop_gradient_inputs,
    const std::function<void(int, std::span<const S>)>& recorder = nullptr) {
  using std::exp;
  using ergo::ad::exp;
  using ergo::ad::stop_gradient;
  const std::size_t d = mean.size();
  const int length = static_cast<int>(step_log_step_size.size());

  ChainResultT<S> result;
  result.x_final.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    result.x_final[j] = mean[j] + exp(log_std[j]) * noise.eps[j];
  }
  if (recorder) recorder(0, std::span<const S>(result.x_final));

  result.accepted.resize(length);
  for (int t = 0; t < length; ++t) {
    std::vector<S> x_in = result.x_final;
    if (stop_gradient_inputs) {
      for (S& v : x_in) v = stop_gradient(v);
    }
    MhResult<S> step;
    try {
      step = mh_transform<Target, S>(
          std::span<const S>(x_in), step_log_step_size[t],
          std::span<const S>(step_log_mom_var[t]), step_leapfrog[t], target,
          std::span<const double>(noise.eta[t]), noise.u[t]);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(t) + ": " + e.what(),
                           t);
    }
    result.accepted[t] = step.accepted;
    result.x_final = std::move(step.position);
    if (recorder) recorder(t + 1, std::span<const S>(result.x_final));
  }
  result.log_pi_final = target.log_density(std::span<const S>(result.x_final));
  return result;
}

/// Plain-double forward pass for a spec.
template <TargetModel Target>
ChainResultT<double> chain_forward_value(
    const ChainSpec<Target>& spec, const ChainNoise& noise,
    const std::function<void(int, std::span<const double>)>& recorder =
        nullptr) {
  const int length = spec.length();
  std::vector<double> log_steps(length);
  std::vector<std::vector<double>> log_mom(length);
  std::vector<int> m(length);
  for (int t = 0; t < length; ++t) {
    log_steps[t] = spec.steps[t].log_step_size;
    log_mom[t] = spec.steps[t].log_momentum_variance;
    m[t] = spec.steps[t].leapfrog_steps;
  }
  return chain_forward<Target, double>(
      spec.target, spec.p0.mean, spec.p0.log_std, log_steps, log_mom, m,
      noise, /*stop_gradient_inputs=*/false, recorder);
}

template <TargetModel Target>
struct RunResult {
  SampleBatch final_states;
  std::vector<SampleBatch> marginals;  // T+1 batches when recorded
};

/**
 * Simulates n independent chains.  Chains are embarrassingly parallel;
 * every chain derives its noise from (seed, chain index), so the output
 * does not depend on the worker count.  Failures are reported with the
 * chain and step index.
 */
template <TargetModel Target>
RunResult<Target> run_chain(const ChainSpec<Target>& spec, std::size_t n,
                            std::uint64_t seed,
                            bool record_intermediate = false) {
  if (n < 1) throw std::invalid_argument("run_chain: n must be >= 1");
  const std::size_t d = spec.dim();
  const int length = spec.length();
  RunResult<Target> result;
  result.final_states = SampleBatch(n, d, seed, length);
  if (record_intermediate) {
    result.marginals.assign(
        static_cast<std::size_t>(length) + 1, SampleBatch(n, d, seed, 0));
    for (int t = 0; t <= length; ++t) {
      result.marginals[static_cast<std::size_t>(t)].chain_length = t;
    }
  }
  parallel_for(n, [&](std::size_t i) {
    Rng rng(chain_substream(seed, i));
    const ChainNoise noise = draw_chain_noise(d, length, rng);
    std::function<void(int, std::span<const double>)> recorder = nullptr;
    if (record_intermediate) {
      recorder = [&](int t, std::span<const double> x) {
        auto row = result.marginals[static_cast<std::size_t>(t)].row(i);
        std::copy(x.begin(), x.end(), row.begin());
      };
    }
    ChainResultT<double> chain;
    try {
      chain = chain_forward_value(spec, noise, recorder);
    } catch (const NumericalError& e) {
      throw NumericalError(
          "chain " + std::to_string(i) + ", " + e.what(),
          static_cast<long>(i));
    }
    auto row = result.final_states.row(i);
    std::copy(chain.x_final.begin(), chain.x_final.end(), row.begin());
  });
  return result;
}

/// Tracked handles for every ergodic parameter on a tape.
struct ChainParamVars {
  std::vector<ad::Var> mean;
  std::vector<ad::Var> log_std;
  struct StepVars {
    std::vector<ad::Var> log_momentum_variance;
    ad::Var log_step_size;
  };
  std::vector<StepVars> steps;
};

/**
 * Builds the fully differentiable composition log pi*(x_T) on a tape
 * for one chain's noise.  With stop_gradient_inputs, the position
 * entering each transition is detached, cutting every cross-transition
 * adjoint path exactly as the detached training estimator requires.
 * Returns the scalar head; parameter handles come back through `vars`.
 */
template <TargetModel Target>
ad::Var chain_forward_differentiable(ad::Tape& tape,
                                     const ChainSpec<Target>& spec,
                                     const ChainNoise& noise,
                                     bool stop_gradient_inputs,
                                     ChainParamVars& vars) {
  const std::size_t d = spec.dim();
  const int length = spec.length();
  vars.mean.clear();
  vars.log_std.clear();
  vars.steps.clear();
  for (std::size_t j = 0; j < d; ++j) {
    vars.mean.push_back(tape.input(spec.p0.mean[j]));
  }
  for (std::size_t j = 0; j < d; ++j) {
    vars.log_std.push_back(tape.input(spec.p0.log_std[j]));
  }
  std::vector<ad::Var> log_steps;
  std::vector<std::vector<ad::Var>> log_mom(length);
  std::vector<int> m(length);
  for (int t = 0; t < length; ++t) {
    ChainParamVars::StepVars sv;
    for (std::size_t j = 0; j < d; ++j) {
      sv.log_momentum_variance.push_back(
          tape.input(spec.steps[t].log_momentum_variance[j]));
    }
    sv.log_step_size = tape.input(spec.steps[t].log_step_size);
    log_steps.push_back(sv.log_step_size);
    log_mom[t] = sv.log_momentum_variance;
    m[t] = spec.steps[t].leapfrog_steps;
    vars.steps.push_back(std::move(sv));
  }
  ChainResultT<ad::Var> result = chain_forward<Target, ad::Var>(
      spec.target, vars.mean, vars.log_std, log_steps, log_mom, m, noise,
      stop_gradient_inputs);
  return result.log_pi_final;
}

}  // namespace ergo
