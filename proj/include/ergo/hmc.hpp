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

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/autodiff.hpp"
#include "ergo/errors.hpp"
#include "ergo/rng.hpp"
#include "ergo/targets.hpp"

namespace ergo {

/**
 * Per-transition kernel hyperparameters.  Both positive quantities are
 * stored as unconstrained logs for optimization; exp is applied on
 * read.
 */
struct HmcStepParams {
  std::vector<double> log_momentum_variance;  // log of the diagonal of the
                                              // auxiliary Gaussian covariance
  double log_step_size = 0.0;                 // log leapfrog step size
  int leapfrog_steps = 5;

  static HmcStepParams from_values(double step_size,
                                   std::vector<double> momentum_variance,
                                   int leapfrog_steps) {
    if (step_size <= 0.0) {
      throw std::invalid_argument("step size must be positive");
    }
    HmcStepParams p;
    p.log_step_size = std::log(step_size);
    p.log_momentum_variance.reserve(momentum_variance.size());
    for (double v : momentum_variance) {
      if (v <= 0.0) {
        throw std::invalid_argument("momentum variance must be positive");
      }
      p.log_momentum_variance.push_back(std::log(v));
    }
    p.leapfrog_steps = leapfrog_steps;
    return p;
  }

  double step_size() const { return std::exp(log_step_size); }

  std::vector<double> momentum_variance() const {
    std::vector<double> v;
    v.reserve(log_momentum_variance.size());
    for (double lv : log_momentum_variance) v.push_back(std::exp(lv));
    return v;
  }
};

/// Position/momentum pair.
template <class S>
struct PhaseStateT {
  std::vector<S> position;
  std::vector<S> momentum;
};

using PhaseState = PhaseStateT<double>;

/// Fresh randomness for one transition: standard-normal momentum noise
/// (scaled by the momentum std on use) and the accept threshold draw.
struct TransitionNoise {
  std::vector<double> eta;
  double u = 0.0;
};

namespace detail {

template <class S>
void check_finite_state(std::span<const S> x, std::span<const S> r, int iter) {
  using ergo::ad::value_of;
  for (const S& v : x) {
    if (!std::isfinite(value_of(v))) {
      throw NumericalError(
          "non-finite position at leapfrog iteration " + std::to_string(iter),
          iter);
    }
  }
  for (const S& v : r) {
    if (!std::isfinite(value_of(v))) {
      throw NumericalError(
          "non-finite momentum at leapfrog iteration " + std::to_string(iter),
          iter);
    }
  }
}

}  // namespace detail

/**
 * Vanilla leapfrog integration of the Hamiltonian dynamics of
 * U(x) = -log pi*(x): per iteration a half momentum kick, a full
 * position drift scaled elementwise by step/variance, and a second
 * half kick.  Volume-preserving and time-reversible.  Works on plain
 * doubles and on differentiable scalars.
 */
template <TargetModel Target, class S>
PhaseStateT<S> leapfrog(const Target& target, PhaseStateT<S> state,
                        const S& step_size, std::span<const S> momentum_variance,
                        int num_steps) {
  const std::size_t d = state.position.size();
  if (d != target.dim() || state.momentum.size() != d ||
      momentum_variance.size() != d) {
    throw std::invalid_argument("leapfrog: dimension mismatch");
  }
  const S half_step = step_size * 0.5;
  std::vector<S> grad(d);
  auto& x = state.position;
  auto& r = state.momentum;
  for (int it = 1; it <= num_steps; ++it) {
    target.gradient(std::span<const S>(x), std::span<S>(grad));
    for (std::size_t i = 0; i < d; ++i) {
      r[i] = r[i] + half_step * grad[i];  // dU/dx = -grad(log pi*)
    }
    for (std::size_t i = 0; i < d; ++i) {
      x[i] = x[i] + step_size / momentum_variance[i] * r[i];
    }
    target.gradient(std::span<const S>(x), std::span<S>(grad));
    for (std::size_t i = 0; i < d; ++i) {
      r[i] = r[i] + half_step * grad[i];
    }
    detail::check_finite_state(std::span<const S>(x), std::span<const S>(r), it);
  }
  return state;
}

/// Plain-double convenience overload taking stored parameters.
template <TargetModel Target>
PhaseState leapfrog(const Target& target, PhaseState state,
                    const HmcStepParams& params) {
  const std::vector<double> mv = params.momentum_variance();
  return leapfrog(target, std::move(state), params.step_size(),
                  std::span<const double>(mv), params.leapfrog_steps);
}

template <class S>
struct MhResult {
  std::vector<S> position;
  bool accepted = false;
  double log_accept_prob = 0.0;  // log p_MH = min(0, delta), <= 0 always
};

/**
 * The Metropolis-Hastings correction written as a deterministic
 * transformation of (x, momentum noise, u): propose by leapfrog, accept
 * when p_MH = min(1, ratio) exceeds u, otherwise keep the previous
 * position.  Evaluated in log space; the auxiliary-density normalizers
 * cancel because the same momentum variance generates and scores the
 * momentum.  The accept indicator is a gradient-blocking gate: the
 * gradient flows only through the branch that was taken.
 */
template <TargetModel Target, class S>
MhResult<S> mh_transform(std::span<const S> x_prev, const S& log_step_size,
                         std::span<const S> log_momentum_variance,
                         int num_steps, const Target& target,
                         std::span<const double> eta, double u) {
  using std::exp;
  using ergo::ad::exp;
  using ergo::ad::gated_select;
  using ergo::ad::value_of;
  const std::size_t d = x_prev.size();
  if (eta.size() != d || log_momentum_variance.size() != d) {
    throw std::invalid_argument("mh_transform: dimension mismatch");
  }

  const S step_size = exp(log_step_size);
  std::vector<S> mom_var(d);
  PhaseStateT<S> state;
  state.position.assign(x_prev.begin(), x_prev.end());
  state.momentum.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    mom_var[i] = exp(log_momentum_variance[i]);
    state.momentum[i] = exp(log_momentum_variance[i] * 0.5) * eta[i];
  }

  // -log q(r) up to the shared normalizer
  S kinetic_before = S(0.0);
  for (std::size_t i = 0; i < d; ++i) {
    kinetic_before =
        kinetic_before + state.momentum[i] * state.momentum[i] / mom_var[i] * 0.5;
  }
  const S log_pi_before = target.log_density(std::span<const S>(x_prev));

  PhaseStateT<S> prop =
      leapfrog(target, std::move(state), step_size,
               std::span<const S>(mom_var), num_steps);

  S kinetic_after = S(0.0);
  for (std::size_t i = 0; i < d; ++i) {
    kinetic_after =
        kinetic_after + prop.momentum[i] * prop.momentum[i] / mom_var[i] * 0.5;
  }
  const S log_pi_after =
      target.log_density(std::span<const S>(prop.position));

  const S delta =
      (log_pi_after - kinetic_after) - (log_pi_before - kinetic_before);
  const double delta_val = value_of(delta);

  MhResult<S> result;
  result.log_accept_prob = std::min(0.0, delta_val);
  // p_MH > u  <=>  delta > log(u); u = 0 always accepts.
  result.accepted = (u <= 0.0) || (delta_val > std::log(u));
  result.position.reserve(d);
  for (std::size_t i = 0; i < d; ++i) {
    result.position.push_back(
        gated_select(result.accepted, prop.position[i], x_prev[i]));
  }
  return result;
}

/// Plain-double M-H step with stored parameters; returns (x_next, accepted).
template <TargetModel Target>
MhResult<double> mh_transform(std::span<const double> x_prev,
                              const HmcStepParams& params,
                              const Target& target,
                              std::span<const double> eta, double u) {
  return mh_transform<Target, double>(
      x_prev, params.log_step_size,
      std::span<const double>(params.log_momentum_variance),
      params.leapfrog_steps, target, eta, u);
}

/**
 * One full M-H-corrected HMC transition; leaves the target invariant in
 * distribution.  Randomness is supplied explicitly so the same noise
 * can drive the plain and the differentiable evaluation.
 */
template <TargetModel Target>
std::vector<double> hmc_transition(std::span<const double> x,
                                   const Target& target,
                                   const HmcStepParams& params,
                                   const TransitionNoise& noise,
                                   bool* accepted = nullptr) {
  MhResult<double> r =
      mh_transform(x, params, target, std::span<const double>(noise.eta),
                   noise.u);
  if (accepted != nullptr) *accepted = r.accepted;
  return std::move(r.position);
}

/// Draws the (eta, u) pair for one transition from a stream.
inline TransitionNoise draw_transition_noise(std::size_t dim, Rng& rng) {
  TransitionNoise noise;
  noise.eta.resize(dim);
  rng.fill_normal(noise.eta);
  noise.u = rng.uniform();
  return noise;
}

}  // namespace ergo
