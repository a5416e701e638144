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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "ergo/chain.hpp"
#include "ergo/eval.hpp"
#include "ergo/io.hpp"
#include "ergo/oracles.hpp"
#include "ergo/parallel.hpp"
#include "ergo/targets.hpp"
#include "ergo/trainer.hpp"

namespace ergo {

/**
 * Resolved experiment settings.  Values come from built-in defaults,
 * then a flat key=value config file, then command-line flag overrides,
 * in that order.
 */
struct ExperimentConfig {
  std::string target = "corr-gauss";
  int chain_length = 10;  // T
  int leapfrog_steps = 5;
  int batch = 128;
  int iters = 50;
  std::string h = "auto";  // "auto" | "none" | a value in nats
  std::uint64_t seed = 1;
  std::string out = "out";
  bool stop_gradient = false;
  int eval_samples = 100000;
  int curve_samples = 10000;
  int mmd_samples = 2000;
  int hist_bins = 50;
  double lr = 0.013;
  double p0_var = 0.0;  // 0: derive from the entropy floor
  int threads = 0;      // 0: hardware concurrency
  int ais_temps = 1000;
  int ais_chains = 64;
  std::string params_file;  // evaluate: defaults to <out>/params.txt
  std::string bench_targets =
      "corr-gauss,bench-a,bench-b,bench-c,bench-d,bench-e,bench-f";

  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

struct ConfigReader {
  const kv::Map& map;
  std::vector<std::string>& errors;
  std::vector<std::string> seen;

  const std::string* find(const std::string& key) {
    seen.push_back(key);
    const auto it = map.find(key);
    return it == map.end() ? nullptr : &it->second;
  }

  void read(const std::string& key, std::string& out) {
    if (const auto* v = find(key)) out = *v;
  }

  void read(const std::string& key, bool& out) {
    if (const auto* v = find(key)) {
      if (*v == "true" || *v == "1") {
        out = true;
      } else if (*v == "false" || *v == "0") {
        out = false;
      } else {
        errors.push_back(key + ": expected true/false, got '" + *v + "'");
      }
    }
  }

  void read(const std::string& key, int& out) {
    if (const auto* v = find(key)) {
      try {
        out = std::stoi(*v);
      } catch (const std::exception&) {
        errors.push_back(key + ": expected integer, got '" + *v + "'");
      }
    }
  }

  void read(const std::string& key, std::uint64_t& out) {
    if (const auto* v = find(key)) {
      try {
        out = std::stoull(*v);
      } catch (const std::exception&) {
        errors.push_back(key + ": expected unsigned integer, got '" + *v + "'");
      }
    }
  }

  void read(const std::string& key, double& out) {
    if (const auto* v = find(key)) {
      try {
        out = std::stod(*v);
      } catch (const std::exception&) {
        errors.push_back(key + ": expected number, got '" + *v + "'");
      }
    }
  }
};

}  // namespace detail

/// Parses a config map, collecting one message per offending field.
inline ExperimentConfig config_from_map(const kv::Map& map,
                                        std::vector<std::string>& errors) {
  ExperimentConfig c;
  detail::ConfigReader r{map, errors, {}};
  r.read("target", c.target);
  r.read("T", c.chain_length);
  r.read("leapfrog_steps", c.leapfrog_steps);
  r.read("batch", c.batch);
  r.read("iters", c.iters);
  r.read("h", c.h);
  r.read("seed", c.seed);
  r.read("out", c.out);
  r.read("stop_gradient", c.stop_gradient);
  r.read("eval_samples", c.eval_samples);
  r.read("curve_samples", c.curve_samples);
  r.read("mmd_samples", c.mmd_samples);
  r.read("hist_bins", c.hist_bins);
  r.read("lr", c.lr);
  r.read("p0_var", c.p0_var);
  r.read("threads", c.threads);
  r.read("ais_temps", c.ais_temps);
  r.read("ais_chains", c.ais_chains);
  r.read("params_file", c.params_file);
  r.read("bench_targets", c.bench_targets);
  for (const auto& [key, value] : map) {
    bool known = false;
    for (const auto& s : r.seen) {
      if (s == key) {
        known = true;
        break;
      }
    }
    if (!known) errors.push_back(key + ": unknown config key");
  }
  return c;
}

inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> errors;
  try {
    (void)make_target(c.target);
  } catch (const std::exception& e) {
    errors.push_back(std::string("target: ") + e.what());
  }
  if (c.chain_length < 0) errors.push_back("T: must be >= 0");
  if (c.leapfrog_steps < 1) errors.push_back("leapfrog_steps: must be >= 1");
  if (c.batch < 2) errors.push_back("batch: must be >= 2");
  if (c.iters < 0) errors.push_back("iters: must be >= 0");
  if (c.eval_samples < 2) errors.push_back("eval_samples: must be >= 2");
  if (c.curve_samples < 2) errors.push_back("curve_samples: must be >= 2");
  if (c.mmd_samples < 2) errors.push_back("mmd_samples: must be >= 2");
  if (c.hist_bins < 1) errors.push_back("hist_bins: must be >= 1");
  if (c.lr < 0.0) errors.push_back("lr: must be >= 0");
  if (c.p0_var < 0.0) errors.push_back("p0_var: must be >= 0");
  if (c.threads < 0) errors.push_back("threads: must be >= 0");
  if (c.ais_temps < 2) errors.push_back("ais_temps: must be >= 2");
  if (c.ais_chains < 2) errors.push_back("ais_chains: must be >= 2");
  if (c.h != "auto" && c.h != "none") {
    try {
      (void)std::stod(c.h);
    } catch (const std::exception&) {
      errors.push_back("h: expected 'auto', 'none' or a number, got '" + c.h +
                       "'");
    }
  }
  return errors;
}

inline std::vector<std::pair<std::string, std::string>> config_to_entries(
    const ExperimentConfig& c) {
  std::vector<std::pair<std::string, std::string>> e;
  e.emplace_back("target", c.target);
  e.emplace_back("T", std::to_string(c.chain_length));
  e.emplace_back("leapfrog_steps", std::to_string(c.leapfrog_steps));
  e.emplace_back("batch", std::to_string(c.batch));
  e.emplace_back("iters", std::to_string(c.iters));
  e.emplace_back("h", c.h);
  e.emplace_back("seed", std::to_string(c.seed));
  e.emplace_back("out", c.out);
  e.emplace_back("stop_gradient", c.stop_gradient ? "true" : "false");
  e.emplace_back("eval_samples", std::to_string(c.eval_samples));
  e.emplace_back("curve_samples", std::to_string(c.curve_samples));
  e.emplace_back("mmd_samples", std::to_string(c.mmd_samples));
  e.emplace_back("hist_bins", std::to_string(c.hist_bins));
  e.emplace_back("lr", csv::format_double(c.lr));
  e.emplace_back("p0_var", csv::format_double(c.p0_var));
  e.emplace_back("threads", std::to_string(c.threads));
  e.emplace_back("ais_temps", std::to_string(c.ais_temps));
  e.emplace_back("ais_chains", std::to_string(c.ais_chains));
  e.emplace_back("params_file", c.params_file);
  e.emplace_back("bench_targets", c.bench_targets);
  return e;
}

inline void write_config(const ExperimentConfig& c, const std::string& path) {
  kv::write_file(path, config_to_entries(c));
}

inline ExperimentConfig read_config(const std::string& path,
                                    std::vector<std::string>& errors) {
  return config_from_map(kv::read_file(path), errors);
}

/// Entropy floor in nats: analytic for "auto", disabled for "none".
/// Throws EntropyUnavailable when "auto" has no closed form.
inline double resolve_entropy_floor(const ExperimentConfig& c) {
  if (c.h == "none") return -std::numeric_limits<double>::infinity();
  if (c.h == "auto") return target_entropy_reference(c.target);
  return std::stod(c.h);
}

/// Initial distribution: explicit isotropic variance when given, else
/// one nat of entropy headroom above the floor, split evenly.
inline InitialDistParams resolve_p0(const ExperimentConfig& c, std::size_t dim,
                                    double floor) {
  if (c.p0_var > 0.0) {
    return InitialDistParams::isotropic(dim, c.p0_var);
  }
  if (!std::isfinite(floor)) {
    throw std::invalid_argument(
        "p0_var: required when the entropy floor is disabled");
  }
  const double d = static_cast<double>(dim);
  const double log_std =
      (floor + 1.0 - 0.5 * d * std::log(2.0 * std::numbers::pi *
                                        std::numbers::e)) / d;
  InitialDistParams p0;
  p0.mean.assign(dim, 0.0);
  p0.log_std.assign(dim, log_std);
  return p0;
}

template <class F>
auto with_target(const std::string& id, F&& fn) {
  AnyTarget target = make_target(id);
  return std::visit(std::forward<F>(fn), target);
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - start).count();
}

inline void report_config_errors(const std::vector<std::string>& errors) {
  for (const auto& e : errors) std::cerr << "config error: " << e << '\n';
}

template <TargetModel Target>
StoredParams stored_from_spec(const ChainSpec<Target>& spec) {
  return StoredParams{spec.p0, spec.steps, spec.entropy_floor};
}

/// Oracle sample cache under <out>/oracle_samples.csv; computing it on a
/// miss logs the runtime.
template <TargetModel Target>
SampleBatch oracle_samples(const Target& target, const ExperimentConfig& c) {
  const std::string path = c.out + "/oracle_samples.csv";
  if (std::filesystem::exists(path)) {
    SampleBatch batch = csv::read_batch(path);
    if (batch.n >= static_cast<std::size_t>(c.eval_samples) &&
        batch.dim == target.dim()) {
      return batch;
    }
  }
  const auto start = std::chrono::steady_clock::now();
  SampleBatch batch = rejection_sample(
      target, static_cast<std::size_t>(c.eval_samples),
      substream_seed(c.seed, {0x0AC1E}));
  std::cerr << "oracle cache miss: rejection sampling " << c.eval_samples
            << " draws took " << elapsed_ms(start) << " ms\n";
  csv::write_batch(batch, path);
  return batch;
}

inline SampleBatch batch_head(const SampleBatch& batch, std::size_t n) {
  SampleBatch head(std::min(n, batch.n), batch.dim, batch.seed,
                   batch.chain_length);
  std::copy(batch.data.begin(),
            batch.data.begin() +
                static_cast<std::ptrdiff_t>(head.n * head.dim),
            head.data.begin());
  return head;
}

}  // namespace detail

/**
 * Trains the chain for the configured target and writes params.txt,
 * train_report.csv and the resolved config.txt to the output directory.
 * Returns 0 on success, 2 on configuration errors, 3 on numerical
 * failure.
 */
inline int cmd_train(const ExperimentConfig& config) {
  auto errors = validate_config(config);
  double floor = 0.0;
  if (errors.empty()) {
    try {
      floor = resolve_entropy_floor(config);
    } catch (const EntropyUnavailable& e) {
      errors.push_back(std::string("h: ") + e.what() +
                       " (pass an explicit value)");
    }
  }
  if (!errors.empty()) {
    detail::report_config_errors(errors);
    return 2;
  }
  set_max_threads(config.threads);
  std::filesystem::create_directories(config.out);
  try {
    return with_target(config.target, [&](const auto& target) -> int {
      auto p0 = resolve_p0(config, target.dim(), floor);
      auto steps = init_hmc_steps(target, config.chain_length,
                                  config.leapfrog_steps, {0.01, 0.025},
                                  config.seed);
      auto spec = make_chain_spec(target, std::move(p0), std::move(steps),
                                  floor);
      TrainConfig tc;
      tc.batch_size = config.batch;
      tc.iterations = config.iters;
      tc.adam.learning_rate = config.lr;
      tc.stop_gradient = config.stop_gradient;
      tc.seed = config.seed;
      auto result = train(spec, tc);
      write_params(detail::stored_from_spec(result.spec),
                   config.out + "/params.txt");
      result.report.write_csv(config.out + "/train_report.csv");
      write_config(config, config.out + "/config.txt");
      return 0;
    });
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
}

/**
 * Evaluates trained parameters: the per-step convergence curve, MMD
 * against the rejection oracle for trained and untrained parameters on
 * paired seeds, and 2D histograms of the final marginal and the oracle.
 */
inline int cmd_evaluate(const ExperimentConfig& config) {
  auto errors = validate_config(config);
  if (!errors.empty()) {
    detail::report_config_errors(errors);
    return 2;
  }
  const std::string params_path = config.params_file.empty()
      ? config.out + "/params.txt"
      : config.params_file;
  if (!std::filesystem::exists(params_path)) {
    std::cerr << "config error: trained parameter file '" << params_path
              << "' does not exist\n";
    return 2;
  }
  set_max_threads(config.threads);
  std::filesystem::create_directories(config.out);
  try {
    return with_target(config.target, [&](const auto& target) -> int {
      const StoredParams stored = read_params(params_path);
      auto spec = make_chain_spec(target, stored.p0, stored.steps,
                                  stored.entropy_floor);

      // Untrained reference: the same construction cmd_train starts from.
      auto untrained_p0 =
          resolve_p0(config, target.dim(), stored.entropy_floor);
      auto untrained_steps = init_hmc_steps(
          target, spec.length(), config.leapfrog_steps, {0.01, 0.025},
          config.seed);
      auto untrained = make_chain_spec(target, std::move(untrained_p0),
                                       std::move(untrained_steps),
                                       stored.entropy_floor);

      const auto curve = convergence_curve(
          spec, static_cast<std::size_t>(config.curve_samples),
          substream_seed(config.seed, {0xC0E}));
      write_curve_tsv(curve, config.out + "/convergence.tsv");

      const SampleBatch oracle = detail::oracle_samples(target, config);
      const SampleBatch oracle_mmd =
          detail::batch_head(oracle, static_cast<std::size_t>(config.mmd_samples));

      const std::uint64_t mmd_seed = substream_seed(config.seed, {0xD});
      const auto trained_run = run_chain(
          spec, static_cast<std::size_t>(config.mmd_samples), mmd_seed, true);
      const auto untrained_run = run_chain(
          untrained, static_cast<std::size_t>(config.mmd_samples), mmd_seed,
          true);
      {
        // one kernel scale for the whole curve, anchored on the oracle
        MmdConfig mmd_config;
        mmd_config.rule = MmdConfig::Bandwidth::kFixed;
        mmd_config.sigma = mmd_median_bandwidth(oracle_mmd);
        std::ofstream out(config.out + "/mmd.tsv");
        out << "t\tmmd2_trained\tmmd2_untrained\n";
        for (int t = 1; t <= spec.length(); ++t) {
          const double m_tr =
              mmd(trained_run.marginals[t], oracle_mmd, mmd_config);
          const double m_un =
              mmd(untrained_run.marginals[t], oracle_mmd, mmd_config);
          out << t << '\t' << csv::format_double(m_tr) << '\t'
              << csv::format_double(m_un) << '\n';
        }
      }

      const auto final_run = run_chain(
          spec, static_cast<std::size_t>(config.eval_samples),
          substream_seed(config.seed, {0xF1A}), false);
      csv::write_batch(final_run.final_states, config.out + "/samples.csv",
                       params_meta_lines(stored));
      const Box box = *target.sampling_box();
      write_histogram_tsv(
          histogram2d(final_run.final_states, config.hist_bins, box),
          config.out + "/hist_pT.tsv");
      write_histogram_tsv(histogram2d(oracle, config.hist_bins, box),
                          config.out + "/hist_oracle.tsv");

      const auto est = expected_log_target(final_run.final_states, target);
      const auto est_oracle = expected_log_target(oracle, target);

      // independent annealed estimate as a second oracle
      AisConfig ais_config;
      ais_config.n_temps = config.ais_temps;
      ais_config.n_chains = config.ais_chains;
      const auto ais = ais_estimate(
          target, InitialDistParams::isotropic(target.dim(), 4.0), ais_config,
          substream_seed(config.seed, {0xA15E}));
      write_weighted_batch(ais.weighted, config.out + "/ais_samples.csv");
      const double e_ais = weighted_expected_log_target(ais.weighted, target);

      std::ofstream metrics(config.out + "/metrics.csv");
      metrics << "quantity,value,std_error\n"
              << "e_logpi_final," << csv::format_double(est.estimate) << ','
              << csv::format_double(est.std_error) << '\n'
              << "e_logpi_oracle," << csv::format_double(est_oracle.estimate)
              << ',' << csv::format_double(est_oracle.std_error) << '\n'
              << "e_logpi_ais," << csv::format_double(e_ais) << ",nan\n"
              << "ais_log_z," << csv::format_double(ais.log_z) << ",nan\n"
              << "ais_ess," << csv::format_double(ais.ess) << ",nan\n";
      return 0;
    });
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

/**
 * Benchmark protocol: for every listed target, one row per method
 * (trained chain, untrained chain, rejection oracle) with the negative
 * expected log target over eval_samples draws, the sampling wall-clock,
 * and the training wall-clock normalized to 100 iterations.  The
 * initial distribution is held fixed at an isotropic Gaussian
 * (p0_var, default variance 3) by setting the floor right below its
 * entropy, so only the transition parameters train.  Per-target
 * failures leave nan values in the row and the run continues.
 */
inline int cmd_bench(const ExperimentConfig& config) {
  auto errors = validate_config(config);
  if (!errors.empty()) {
    detail::report_config_errors(errors);
    return 2;
  }
  set_max_threads(config.threads);
  std::filesystem::create_directories(config.out);
  std::ofstream out(config.out + "/bench.csv");
  out << "target,method,neg_e_logpi,stderr,sample_seconds,"
         "train_seconds_per_100\n";
  const double nan = std::numeric_limits<double>::quiet_NaN();

  std::vector<std::string> ids;
  {
    std::stringstream ss(config.bench_targets);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) ids.push_back(item);
    }
  }
  for (const auto& id : ids) {
    const auto emit = [&](const std::string& method, double neg_e, double se,
                          double sample_s, double train_s) {
      out << id << ',' << method << ',' << csv::format_double(neg_e) << ','
          << csv::format_double(se) << ',' << csv::format_double(sample_s)
          << ',' << csv::format_double(train_s) << '\n';
    };
    try {
      with_target(id, [&](const auto& target) {
        const std::size_t n_eval =
            static_cast<std::size_t>(config.eval_samples);
        auto p0 = InitialDistParams::isotropic(
            target.dim(), config.p0_var > 0.0 ? config.p0_var : 3.0);
        const double floor = entropy_p0(p0) - 1e-9;
        auto steps = init_hmc_steps(target, config.chain_length,
                                    config.leapfrog_steps, {0.01, 0.025},
                                    config.seed);
        auto untrained = make_chain_spec(target, p0, steps, floor);

        TrainConfig tc;
        tc.batch_size = config.batch;
        tc.iterations = config.iters;
        tc.adam.learning_rate = config.lr;
        tc.stop_gradient = config.stop_gradient;
        tc.seed = config.seed;
        auto t0 = std::chrono::steady_clock::now();
        auto trained = train(untrained, tc);
        const double train_s = detail::elapsed_ms(t0) / 1000.0 /
                               std::max(1, config.iters) * 100.0;

        t0 = std::chrono::steady_clock::now();
        const auto run = run_chain(trained.spec, n_eval,
                                   substream_seed(config.seed, {0xBE}), false);
        const double sample_s = detail::elapsed_ms(t0) / 1000.0;
        const auto est = expected_log_target(run.final_states, target);
        emit("HEI", -est.estimate, est.std_error, sample_s, train_s);

        t0 = std::chrono::steady_clock::now();
        const auto run_un = run_chain(untrained, n_eval,
                                      substream_seed(config.seed, {0xBE}),
                                      false);
        const double sample_un_s = detail::elapsed_ms(t0) / 1000.0;
        const auto est_un = expected_log_target(run_un.final_states, target);
        emit("HEI-untrained", -est_un.estimate, est_un.std_error, sample_un_s,
             0.0);

        t0 = std::chrono::steady_clock::now();
        const auto oracle = rejection_sample(
            target, n_eval, substream_seed(config.seed, {0x0AC1E}));
        const double oracle_s = detail::elapsed_ms(t0) / 1000.0;
        const auto est_or = expected_log_target(oracle, target);
        emit("oracle", -est_or.estimate, est_or.std_error, oracle_s, nan);
      });
    } catch (const std::exception& e) {
      std::cerr << "bench target '" << id << "' failed: " << e.what() << '\n';
      emit("HEI", nan, nan, nan, nan);
    }
  }
  write_config(config, config.out + "/config.txt");
  return 0;
}

/**
 * The constraint demonstration: trains the correlated-Gaussian chain
 * (T = 9) once from a valid high-entropy start with the guard active,
 * and once from a low-entropy start with the constraint disabled, then
 * emits per-case convergence curves before/after training plus target
 * and marginal histograms.
 */
inline int cmd_demo_constraint(const ExperimentConfig& config) {
  auto errors = validate_config(config);
  if (!errors.empty()) {
    detail::report_config_errors(errors);
    return 2;
  }
  set_max_threads(config.threads);
  const std::string base = config.out;
  std::filesystem::create_directories(base + "/valid");
  std::filesystem::create_directories(base + "/invalid");
  try {
    const CorrelatedGaussian target(2.0, 1.5, 1.6);
    const double h = *target.ground_truth()->entropy;
    const int length = 9;
    const double inf = std::numeric_limits<double>::infinity();

    const SampleBatch oracle = rejection_sample(
        target, static_cast<std::size_t>(config.eval_samples),
        substream_seed(config.seed, {0x0AC1E}));
    const Box box = *target.sampling_box();
    write_histogram_tsv(histogram2d(oracle, config.hist_bins, box),
                        base + "/hist_target.tsv");

    const auto run_case = [&](const std::string& dir, double variance,
                              double floor) {
      auto p0 = InitialDistParams::isotropic(2, variance);
      auto steps = init_hmc_steps(target, length, config.leapfrog_steps,
                                  {0.01, 0.025}, config.seed);
      auto before = make_chain_spec(target, std::move(p0), std::move(steps),
                                    floor);
      const auto curve_before = convergence_curve(
          before, static_cast<std::size_t>(config.curve_samples),
          substream_seed(config.seed, {0xCE}));
      write_curve_tsv(curve_before, dir + "/curve_before.tsv");

      TrainConfig tc;
      tc.batch_size = config.batch;
      tc.iterations = config.iters;
      tc.adam.learning_rate = config.lr;
      tc.stop_gradient = config.stop_gradient;
      tc.seed = config.seed;
      auto result = train(before, tc);
      result.report.write_csv(dir + "/train_report.csv");
      write_params(detail::stored_from_spec(result.spec), dir + "/params.txt");

      const auto curve_after = convergence_curve(
          result.spec, static_cast<std::size_t>(config.curve_samples),
          substream_seed(config.seed, {0xCE}));
      write_curve_tsv(curve_after, dir + "/curve_after.tsv");

      const auto before_run = run_chain(
          before, static_cast<std::size_t>(config.eval_samples),
          substream_seed(config.seed, {0xF2}), false);
      write_histogram_tsv(
          histogram2d(before_run.final_states, config.hist_bins, box),
          dir + "/hist_before.tsv");
      const auto after_run = run_chain(
          result.spec, static_cast<std::size_t>(config.eval_samples),
          substream_seed(config.seed, {0xF2}), false);
      write_histogram_tsv(
          histogram2d(after_run.final_states, config.hist_bins, box),
          dir + "/hist_after.tsv");
    };

    run_case(base + "/valid", 3.0, h);
    run_case(base + "/invalid", 0.25, -inf);
    write_config(config, base + "/config.txt");
    return 0;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace ergo
