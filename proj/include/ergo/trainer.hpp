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
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ergo/autodiff.hpp"
#include "ergo/chain.hpp"
#include "ergo/errors.hpp"
#include "ergo/parallel.hpp"
#include "ergo/rng.hpp"

namespace ergo {

struct AdamSettings {
  double learning_rate = 0.013;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int batch_size = 128;
  int iterations = 50;
  AdamSettings adam;
  std::optional<double> entropy_floor;  // overrides the spec's floor when set
  bool stop_gradient = false;
  bool train_momentum_variance = true;  // tune phi1 alongside the step sizes
  std::uint64_t seed = 1;
  std::array<double, 2> step_size_init_range{0.01, 0.025};
};

struct TrainRecord {
  int iteration = 0;
  double emlbo = 0.0;
  double e_logpi_t = 0.0;
  double elbo_p0 = 0.0;
  double entropy_p0 = 0.0;
  bool guard_triggered = false;
  std::vector<double> step_sizes;
  double wall_ms = 0.0;
};

struct TrainReport {
  std::vector<TrainRecord> rows;

  int guard_events() const {
    int k = 0;
    for (const auto& r : rows) k += r.guard_triggered ? 1 : 0;
    return k;
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path);
    const std::size_t T = rows.empty() ? 0 : rows.front().step_sizes.size();
    out << "iteration,emlbo,e_logpi_t,elbo_p0,entropy_p0,guard_triggered,"
           "wall_ms";
    for (std::size_t t = 0; t < T; ++t) out << ",step_size_" << t;
    out << '\n';
    for (const auto& r : rows) {
      out << r.iteration << ',' << csv::format_double(r.emlbo) << ','
          << csv::format_double(r.e_logpi_t) << ','
          << csv::format_double(r.elbo_p0) << ','
          << csv::format_double(r.entropy_p0) << ','
          << (r.guard_triggered ? 1 : 0) << ','
          << csv::format_double(r.wall_ms);
      for (double s : r.step_sizes) out << ',' << csv::format_double(s);
      out << '\n';
    }
  }
};

/// Fresh chain hyperparameters: step sizes drawn uniformly from the
/// init range, unit momentum variance.
template <TargetModel Target>
std::vector<HmcStepParams> init_hmc_steps(const Target& target, int length,
                                          int leapfrog_steps,
                                          std::array<double, 2> range,
                                          std::uint64_t seed) {
  Rng rng(substream_seed(seed, {0x57EB}));
  std::vector<HmcStepParams> steps;
  steps.reserve(static_cast<std::size_t>(length));
  for (int t = 0; t < length; ++t) {
    const double s = range[0] + (range[1] - range[0]) * rng.uniform();
    steps.push_back(HmcStepParams::from_values(
        s, std::vector<double>(target.dim(), 1.0), leapfrog_steps));
  }
  return steps;
}

struct EmlboEstimate {
  double total = 0.0;
  double e_logpi_t = 0.0;
  double elbo_p0 = 0.0;
  double se_e_logpi = 0.0;
  double se_elbo_p0 = 0.0;
};

namespace detail {

inline void mean_and_se(std::span<const double> values, double& mean,
                        double& se) {
  const double n = static_cast<double>(values.size());
  double m = 0.0;
  for (double v : values) m += v;
  m /= n;
  double s2 = 0.0;
  for (double v : values) s2 += (v - m) * (v - m);
  mean = m;
  se = values.size() > 1 ? std::sqrt(s2 / (n - 1.0) / n) : 0.0;
}

}  // namespace detail

/**
 * Monte Carlo estimate of the training objective: the expected final
 * log target plus the initial-distribution lower bound, sharing the
 * same N chains.  The entropy term is analytic.
 */
template <TargetModel Target>
EmlboEstimate emlbo_estimate(const ChainSpec<Target>& spec, std::size_t n,
                             std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("emlbo_estimate: n must be >= 2");
  const std::size_t d = spec.dim();
  const int length = spec.length();
  std::vector<double> logpi_final(n), logpi_init(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(chain_substream(seed, i));
    const ChainNoise noise = draw_chain_noise(d, length, rng);
    std::vector<double> x0(d);
    for (std::size_t j = 0; j < d; ++j) {
      x0[j] = spec.p0.mean[j] + std::exp(spec.p0.log_std[j]) * noise.eps[j];
    }
    logpi_init[i] = spec.target.log_density(std::span<const double>(x0));
    const auto chain = chain_forward_value(spec, noise);
    logpi_final[i] = chain.log_pi_final;
  });
  EmlboEstimate est;
  detail::mean_and_se(logpi_final, est.e_logpi_t, est.se_e_logpi);
  double init_mean = 0.0;
  detail::mean_and_se(logpi_init, init_mean, est.se_elbo_p0);
  est.elbo_p0 = init_mean + entropy_p0(spec.p0);
  est.total = est.e_logpi_t + est.elbo_p0;
  return est;
}

/// Gradient of the initial-distribution bound with respect to phi0.
struct Phi0Gradient {
  std::vector<double> d_mean;
  std::vector<double> d_log_std;
  double elbo_p0 = 0.0;
  double se = 0.0;
};

/**
 * Reparameterization gradient of ELBO(P0): the pathwise Monte Carlo
 * average of d/dphi0 log pi*(mean + exp(log_std) * eps) plus the
 * analytic entropy gradient, which is exactly one per log_std
 * coordinate and zero for the means.
 */
template <TargetModel Target>
Phi0Gradient grad_elbo_p0(const ChainSpec<Target>& spec, std::size_t n,
                          std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("grad_elbo_p0: n must be >= 2");
  const std::size_t d = spec.dim();
  std::vector<double> per_chain_grad(n * 2 * d);
  std::vector<double> values(n);
  parallel_for(n, [&](std::size_t i) {
    Rng rng(chain_substream(seed, i));
    std::vector<double> eps(d);
    rng.fill_normal(eps);
    ad::Tape tape;
    std::vector<ad::Var> mean_v, log_std_v, x0(d);
    for (std::size_t j = 0; j < d; ++j) mean_v.push_back(tape.input(spec.p0.mean[j]));
    for (std::size_t j = 0; j < d; ++j) {
      log_std_v.push_back(tape.input(spec.p0.log_std[j]));
    }
    for (std::size_t j = 0; j < d; ++j) {
      x0[j] = mean_v[j] + ad::exp(log_std_v[j]) * eps[j];
    }
    const ad::Var head = spec.target.log_density(std::span<const ad::Var>(x0));
    const auto adj = tape.backward(head);
    values[i] = head.value();
    for (std::size_t j = 0; j < d; ++j) {
      per_chain_grad[i * 2 * d + j] = ad::Tape::adjoint(adj, mean_v[j]);
      per_chain_grad[i * 2 * d + d + j] = ad::Tape::adjoint(adj, log_std_v[j]);
    }
  });
  Phi0Gradient g;
  g.d_mean.assign(d, 0.0);
  g.d_log_std.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      g.d_mean[j] += per_chain_grad[i * 2 * d + j];
      g.d_log_std[j] += per_chain_grad[i * 2 * d + d + j];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < d; ++j) {
    g.d_mean[j] *= inv_n;
    g.d_log_std[j] = g.d_log_std[j] * inv_n + 1.0;  // analytic dH/dlog_std
  }
  double mean_v = 0.0;
  detail::mean_and_se(values, mean_v, g.se);
  g.elbo_p0 = mean_v + entropy_p0(spec.p0);
  return g;
}

/// Pathwise gradient of the expected final log target with respect to
/// every transition's hyperparameters (and, on the full-backpropagation
/// path, phi0 through the chain).
struct ChainGradient {
  std::vector<double> d_mean;
  std::vector<double> d_log_std;
  struct StepGradient {
    std::vector<double> d_log_momentum_variance;
    double d_log_step_size = 0.0;
  };
  std::vector<StepGradient> steps;
  double e_logpi = 0.0;
  double se = 0.0;
};

namespace detail {

template <std::size_t K, TargetModel Target>
void sg_gradient_one_chain(const ChainSpec<Target>& spec,
                           const ChainNoise& noise,
                           std::span<double> step_grad_slot,
                           double& logpi_out) {
  using D = ad::Dual<K>;
  const std::size_t d = spec.dim();
  const int length = spec.length();
  std::vector<double> x(d);
  for (std::size_t j = 0; j < d; ++j) {
    x[j] = spec.p0.mean[j] + std::exp(spec.p0.log_std[j]) * noise.eps[j];
  }
  if (length == 0) {
    logpi_out = spec.target.log_density(std::span<const double>(x));
    return;
  }
  std::vector<D> x_in(d), log_mom(d);
  for (int t = 0; t < length; ++t) {
    for (std::size_t j = 0; j < d; ++j) x_in[j] = D(x[j]);
    for (std::size_t j = 0; j < d; ++j) {
      log_mom[j] = D::seeded(spec.steps[t].log_momentum_variance[j], j);
    }
    const D log_step = D::seeded(spec.steps[t].log_step_size, d);
    MhResult<D> step;
    try {
      step = mh_transform<Target, D>(
          std::span<const D>(x_in), log_step, std::span<const D>(log_mom),
          spec.steps[t].leapfrog_steps, spec.target,
          std::span<const double>(noise.eta[t]), noise.u[t]);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(t) + ": " + e.what(), t);
    }
    const D head = spec.target.log_density(std::span<const D>(step.position));
    auto slot = step_grad_slot.subspan(static_cast<std::size_t>(t) * (d + 1),
                                       d + 1);
    for (std::size_t j = 0; j < d; ++j) slot[j] = head.d[j];
    slot[d] = head.d[d];
    for (std::size_t j = 0; j < d; ++j) x[j] = step.position[j].v;
    if (t == length - 1) logpi_out = head.v;
  }
}

/// Tape-based fallback for dimensions beyond the dual-tangent budget:
/// one small record per transition, inputs detached.
template <TargetModel Target>
void sg_gradient_one_chain_tape(const ChainSpec<Target>& spec,
                                const ChainNoise& noise,
                                std::span<double> step_grad_slot,
                                double& logpi_out) {
  const std::size_t d = spec.dim();
  const int length = spec.length();
  std::vector<double> x(d);
  for (std::size_t j = 0; j < d; ++j) {
    x[j] = spec.p0.mean[j] + std::exp(spec.p0.log_std[j]) * noise.eps[j];
  }
  if (length == 0) {
    logpi_out = spec.target.log_density(std::span<const double>(x));
    return;
  }
  ad::Tape tape;
  for (int t = 0; t < length; ++t) {
    tape.clear();
    std::vector<ad::Var> x_in(x.begin(), x.end());  // constants: detached
    std::vector<ad::Var> log_mom;
    for (std::size_t j = 0; j < d; ++j) {
      log_mom.push_back(tape.input(spec.steps[t].log_momentum_variance[j]));
    }
    const ad::Var log_step = tape.input(spec.steps[t].log_step_size);
    MhResult<ad::Var> step;
    try {
      step = mh_transform<Target, ad::Var>(
          std::span<const ad::Var>(x_in), log_step,
          std::span<const ad::Var>(log_mom), spec.steps[t].leapfrog_steps,
          spec.target, std::span<const double>(noise.eta[t]), noise.u[t]);
    } catch (const NumericalError& e) {
      throw NumericalError("step " + std::to_string(t) + ": " + e.what(), t);
    }
    const ad::Var head =
        spec.target.log_density(std::span<const ad::Var>(step.position));
    const auto adj = tape.backward(head);
    auto slot = step_grad_slot.subspan(static_cast<std::size_t>(t) * (d + 1),
                                       d + 1);
    for (std::size_t j = 0; j < d; ++j) {
      slot[j] = ad::Tape::adjoint(adj, log_mom[j]);
    }
    slot[d] = ad::Tape::adjoint(adj, log_step);
    for (std::size_t j = 0; j < d; ++j) x[j] = step.position[j].value();
    if (t == length - 1) logpi_out = head.value();
  }
}

template <TargetModel Target>
void sg_gradient_dispatch(const ChainSpec<Target>& spec,
                          const ChainNoise& noise,
                          std::span<double> step_grad_slot,
                          double& logpi_out) {
  switch (spec.dim()) {
    case 1:
      sg_gradient_one_chain<2>(spec, noise, step_grad_slot, logpi_out);
      return;
    case 2:
      sg_gradient_one_chain<3>(spec, noise, step_grad_slot, logpi_out);
      return;
    case 3:
      sg_gradient_one_chain<4>(spec, noise, step_grad_slot, logpi_out);
      return;
    case 4:
      sg_gradient_one_chain<5>(spec, noise, step_grad_slot, logpi_out);
      return;
    default:
      sg_gradient_one_chain_tape(spec, noise, step_grad_slot, logpi_out);
      return;
  }
}

}  // namespace detail

/**
 * Monte Carlo gradient of E[log pi*(x_T)] over N chains at fixed noise.
 *
 * With stop_gradient = false this differentiates the whole composition
 * by one reverse sweep per chain; the returned d_mean/d_log_std are the
 * through-chain phi0 path.  With stop_gradient = true the position
 * entering each transition is detached, so each transition's parameters
 * receive the gradient of that transition's own output log target;
 * the cost per step is then constant in T (forward-mode tangents, no
 * record), and phi0 receives nothing.
 */
template <TargetModel Target>
ChainGradient grad_chain_params(const ChainSpec<Target>& spec, std::size_t n,
                                std::uint64_t seed, bool stop_gradient) {
  if (n < 2) throw std::invalid_argument("grad_chain_params: n must be >= 2");
  const std::size_t d = spec.dim();
  const int length = spec.length();
  const std::size_t per_step = d + 1;
  const std::size_t step_params = static_cast<std::size_t>(length) * per_step;

  std::vector<double> slots(n * step_params, 0.0);
  std::vector<double> phi0_slots;
  if (!stop_gradient) phi0_slots.assign(n * 2 * d, 0.0);
  std::vector<double> logpi(n, 0.0);

  parallel_for(n, [&](std::size_t i) {
    Rng rng(chain_substream(seed, i));
    const ChainNoise noise = draw_chain_noise(d, length, rng);
    auto slot = std::span<double>(slots).subspan(i * step_params, step_params);
    try {
      if (stop_gradient) {
        detail::sg_gradient_dispatch(spec, noise, slot, logpi[i]);
      } else {
        static thread_local ad::Tape tape;
        tape.clear();
        ChainParamVars vars;
        const ad::Var head =
            chain_forward_differentiable(tape, spec, noise, false, vars);
        const auto adj = tape.backward(head);
        logpi[i] = head.value();
        for (int t = 0; t < length; ++t) {
          auto s = slot.subspan(static_cast<std::size_t>(t) * per_step,
                                per_step);
          for (std::size_t j = 0; j < d; ++j) {
            s[j] = ad::Tape::adjoint(adj, vars.steps[t].log_momentum_variance[j]);
          }
          s[d] = ad::Tape::adjoint(adj, vars.steps[t].log_step_size);
        }
        for (std::size_t j = 0; j < d; ++j) {
          phi0_slots[i * 2 * d + j] = ad::Tape::adjoint(adj, vars.mean[j]);
          phi0_slots[i * 2 * d + d + j] =
              ad::Tape::adjoint(adj, vars.log_std[j]);
        }
      }
    } catch (const NumericalError& e) {
      throw NumericalError("chain " + std::to_string(i) + ", " + e.what(),
                           static_cast<long>(i));
    }
  });

  ChainGradient g;
  g.d_mean.assign(d, 0.0);
  g.d_log_std.assign(d, 0.0);
  g.steps.resize(length);
  for (int t = 0; t < length; ++t) {
    g.steps[t].d_log_momentum_variance.assign(d, 0.0);
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int t = 0; t < length; ++t) {
      const std::size_t base = i * step_params +
                               static_cast<std::size_t>(t) * per_step;
      for (std::size_t j = 0; j < d; ++j) {
        g.steps[t].d_log_momentum_variance[j] += slots[base + j];
      }
      g.steps[t].d_log_step_size += slots[base + d];
    }
    if (!stop_gradient) {
      for (std::size_t j = 0; j < d; ++j) {
        g.d_mean[j] += phi0_slots[i * 2 * d + j];
        g.d_log_std[j] += phi0_slots[i * 2 * d + d + j];
      }
    }
  }
  for (int t = 0; t < length; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      g.steps[t].d_log_momentum_variance[j] *= inv_n;
    }
    g.steps[t].d_log_step_size *= inv_n;
  }
  for (std::size_t j = 0; j < d; ++j) {
    g.d_mean[j] *= inv_n;
    g.d_log_std[j] *= inv_n;
  }
  detail::mean_and_se(logpi, g.e_logpi, g.se);
  return g;
}

/// Median wall-clock of one gradient evaluation, for the detached
/// versus full-backpropagation cost comparison.
template <TargetModel Target>
double grad_walltime_ms(const ChainSpec<Target>& spec, std::size_t n,
                        std::uint64_t seed, bool stop_gradient, int repeats) {
  std::vector<double> times;
  for (int k = 0; k < repeats; ++k) {
    const auto start = std::chrono::steady_clock::now();
    (void)grad_chain_params(spec, n, seed + static_cast<std::uint64_t>(k),
                            stop_gradient);
    const auto stop = std::chrono::steady_clock::now();
    times.push_back(
        std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

namespace detail {

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
  explicit AdamState(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
};

/// One ascent step; updates moments in place.
inline void adam_ascend(const AdamSettings& s, AdamState& state,
                        std::span<double> params,
                        std::span<const double> grad) {
  ++state.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = s.beta1 * state.m[i] + (1.0 - s.beta1) * grad[i];
    state.v[i] = s.beta2 * state.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] += s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
  }
}

template <TargetModel Target>
std::vector<double> flatten_params(const ChainSpec<Target>& spec) {
  std::vector<double> flat;
  flat.insert(flat.end(), spec.p0.mean.begin(), spec.p0.mean.end());
  flat.insert(flat.end(), spec.p0.log_std.begin(), spec.p0.log_std.end());
  for (const auto& s : spec.steps) {
    flat.insert(flat.end(), s.log_momentum_variance.begin(),
                s.log_momentum_variance.end());
    flat.push_back(s.log_step_size);
  }
  return flat;
}

template <TargetModel Target>
void apply_flat_params(ChainSpec<Target>& spec,
                       std::span<const double> flat) {
  const std::size_t d = spec.dim();
  std::size_t k = 0;
  for (std::size_t j = 0; j < d; ++j) spec.p0.mean[j] = flat[k++];
  for (std::size_t j = 0; j < d; ++j) spec.p0.log_std[j] = flat[k++];
  for (auto& s : spec.steps) {
    for (std::size_t j = 0; j < d; ++j) s.log_momentum_variance[j] = flat[k++];
    s.log_step_size = flat[k++];
  }
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace detail

template <TargetModel Target>
struct TrainResult {
  ChainSpec<Target> spec;
  TrainReport report;
};

/**
 * Constrained stochastic ascent of the training objective.  Each
 * iteration estimates the phi0 gradient by reparameterization and the
 * chain-parameter gradient pathwise (detached or full), then applies
 * one Adam step.  Before committing the phi0 update the would-be
 * initial entropy is checked against the floor h; if it would not stay
 * above h the whole phi0 block (parameters and optimizer moments) is
 * left unchanged and the event recorded, while chain parameters update
 * regardless.  Non-finite gradients are retried with a fresh seed at
 * most three times; persistent failure aborts with the iteration index.
 */
template <TargetModel Target>
TrainResult<Target> train(const ChainSpec<Target>& initial,
                          const TrainConfig& config) {
  if (config.batch_size < 2) {
    throw std::invalid_argument("train: batch_size must be >= 2");
  }
  if (config.iterations < 0) {
    throw std::invalid_argument("train: iterations must be >= 0");
  }
  if (config.adam.beta1 <= 0.0 || config.adam.beta1 >= 1.0 ||
      config.adam.beta2 <= 0.0 || config.adam.beta2 >= 1.0) {
    throw std::invalid_argument("train: Adam betas must lie in (0, 1)");
  }
  if (config.adam.learning_rate < 0.0) {
    throw std::invalid_argument("train: learning rate must be >= 0");
  }
  const double floor = config.entropy_floor.value_or(initial.entropy_floor);
  if (!(entropy_p0(initial.p0) > floor)) {
    throw std::invalid_argument(
        "train: initial entropy " + std::to_string(entropy_p0(initial.p0)) +
        " must exceed the floor " + std::to_string(floor));
  }

  TrainResult<Target> result{initial, {}};
  ChainSpec<Target>& spec = result.spec;
  spec.entropy_floor = floor;
  const std::size_t d = spec.dim();
  const std::size_t n_params = 2 * d +
      static_cast<std::size_t>(spec.length()) * (d + 1);
  detail::AdamState adam(n_params);
  const std::size_t n = static_cast<std::size_t>(config.batch_size);

  for (int iter = 0; iter < config.iterations; ++iter) {
    const auto t_start = std::chrono::steady_clock::now();
    Phi0Gradient g0;
    ChainGradient gc;
    std::vector<double> grad(n_params, 0.0);
    bool ok = false;
    for (int attempt = 0; attempt <= 3 && !ok; ++attempt) {
      const std::uint64_t it_seed = substream_seed(
          config.seed,
          {0x7EA1, static_cast<std::uint64_t>(iter),
           static_cast<std::uint64_t>(attempt)});
      try {
        g0 = grad_elbo_p0(spec, n, it_seed);
        gc = grad_chain_params(spec, n, it_seed, config.stop_gradient);
      } catch (const NumericalError&) {
        continue;
      }
      std::size_t k = 0;
      for (std::size_t j = 0; j < d; ++j) grad[k++] = g0.d_mean[j];
      for (std::size_t j = 0; j < d; ++j) grad[k++] = g0.d_log_std[j];
      for (const auto& s : gc.steps) {
        for (std::size_t j = 0; j < d; ++j) {
          grad[k++] = config.train_momentum_variance
              ? s.d_log_momentum_variance[j]
              : 0.0;
        }
        grad[k++] = s.d_log_step_size;
      }
      ok = detail::all_finite(grad);
    }
    if (!ok) {
      throw NumericalError(
          "training aborted at iteration " + std::to_string(iter) +
          ": non-finite gradient after 3 retries", iter);
    }

    TrainRecord row;
    row.iteration = iter;
    row.e_logpi_t = gc.e_logpi;
    row.elbo_p0 = g0.elbo_p0;
    row.emlbo = gc.e_logpi + g0.elbo_p0;
    row.entropy_p0 = entropy_p0(spec.p0);

    std::vector<double> flat = detail::flatten_params(spec);
    const std::vector<double> phi0_params(flat.begin(), flat.begin() + 2 * d);
    const std::vector<double> phi0_m(adam.m.begin(), adam.m.begin() + 2 * d);
    const std::vector<double> phi0_v(adam.v.begin(), adam.v.begin() + 2 * d);
    detail::adam_ascend(config.adam, adam, flat, grad);

    double candidate_entropy = 0.5 * static_cast<double>(d) *
        std::log(2.0 * std::numbers::pi * std::numbers::e);
    for (std::size_t j = 0; j < d; ++j) candidate_entropy += flat[d + j];
    if (!(candidate_entropy > floor)) {
      std::copy(phi0_params.begin(), phi0_params.end(), flat.begin());
      std::copy(phi0_m.begin(), phi0_m.end(), adam.m.begin());
      std::copy(phi0_v.begin(), phi0_v.end(), adam.v.begin());
      row.guard_triggered = true;
    }
    detail::apply_flat_params(spec, flat);

    for (const auto& s : spec.steps) row.step_sizes.push_back(s.step_size());
    row.wall_ms = std::chrono::duration<double, std::milli>(
        std::chrono::steady_clock::now() - t_start).count();
    result.report.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace ergo
