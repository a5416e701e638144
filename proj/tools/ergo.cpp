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

#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "ergo/cli.hpp"

namespace {

// Flags override config-file values, which override defaults.
void add_common_flags(CLI::App* cmd, ergo::ExperimentConfig& config,
                      std::string& config_path) {
  // --h is an entropy value, so help must not claim the short form
  cmd->set_help_flag("--help", "print help");
  cmd->add_option("--config", config_path, "flat key=value config file");
  cmd->add_option("--target", config.target, "target density id");
  cmd->add_option("--T", config.chain_length, "number of HMC transitions");
  cmd->add_option("--leapfrog-steps", config.leapfrog_steps,
                  "leapfrog steps per transition");
  cmd->add_option("--iters", config.iters, "training iterations");
  cmd->add_option("--batch", config.batch, "Monte Carlo batch per iteration");
  cmd->add_option("--h", config.h,
                  "entropy floor in nats, or 'auto' / 'none'");
  cmd->add_option("--seed", config.seed, "master seed");
  cmd->add_flag("--stop-gradient", config.stop_gradient,
                "detach transition inputs during training");
  cmd->add_option("--out", config.out, "output directory");
  cmd->add_option("--threads", config.threads, "worker cap (0 = hardware)");
  cmd->add_option("--lr", config.lr, "Adam learning rate");
  cmd->add_option("--eval-samples", config.eval_samples,
                  "samples for estimates and histograms");
  cmd->add_option("--curve-samples", config.curve_samples,
                  "samples per convergence-curve point");
  cmd->add_option("--mmd-samples", config.mmd_samples,
                  "samples per side of the MMD estimate");
  cmd->add_option("--hist-bins", config.hist_bins, "histogram bins per axis");
  cmd->add_option("--p0-var", config.p0_var,
                  "isotropic initial variance (0 = derive from h)");
  cmd->add_option("--ais-temps", config.ais_temps,
                  "AIS intermediate distributions");
  cmd->add_option("--ais-chains", config.ais_chains, "AIS chains");
  cmd->add_option("--params", config.params_file,
                  "trained parameter file (evaluate)");
  cmd->add_option("--bench-targets", config.bench_targets,
                  "comma-separated target list (bench)");
}

// Re-parse so that config-file values land under flag values.
int resolve_config(CLI::App* cmd, ergo::ExperimentConfig& config,
                   const std::string& config_path) {
  if (config_path.empty()) return 0;
  std::vector<std::string> errors;
  ergo::ExperimentConfig from_file;
  try {
    from_file = ergo::read_config(config_path, errors);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  }
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "config error: " << e << '\n';
    return 2;
  }
  // Start from the file values, then lay explicitly passed flags on top.
  ergo::ExperimentConfig merged = from_file;
  const auto keep = [&](const std::string& flag, auto member) {
    if (cmd->count(flag) > 0) merged.*member = config.*member;
  };
  keep("--target", &ergo::ExperimentConfig::target);
  keep("--T", &ergo::ExperimentConfig::chain_length);
  keep("--leapfrog-steps", &ergo::ExperimentConfig::leapfrog_steps);
  keep("--iters", &ergo::ExperimentConfig::iters);
  keep("--batch", &ergo::ExperimentConfig::batch);
  keep("--h", &ergo::ExperimentConfig::h);
  keep("--seed", &ergo::ExperimentConfig::seed);
  keep("--stop-gradient", &ergo::ExperimentConfig::stop_gradient);
  keep("--out", &ergo::ExperimentConfig::out);
  keep("--threads", &ergo::ExperimentConfig::threads);
  keep("--lr", &ergo::ExperimentConfig::lr);
  keep("--eval-samples", &ergo::ExperimentConfig::eval_samples);
  keep("--curve-samples", &ergo::ExperimentConfig::curve_samples);
  keep("--mmd-samples", &ergo::ExperimentConfig::mmd_samples);
  keep("--hist-bins", &ergo::ExperimentConfig::hist_bins);
  keep("--p0-var", &ergo::ExperimentConfig::p0_var);
  keep("--ais-temps", &ergo::ExperimentConfig::ais_temps);
  keep("--ais-chains", &ergo::ExperimentConfig::ais_chains);
  keep("--params", &ergo::ExperimentConfig::params_file);
  keep("--bench-targets", &ergo::ExperimentConfig::bench_targets);
  config = merged;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Gradient-tuned finite HMC chains: train chain hyperparameters, "
      "evaluate sampling bias against oracles, and emit figure data."};
  app.require_subcommand(1);

  ergo::ExperimentConfig config;
  std::string config_path;

  CLI::App* train = app.add_subcommand(
      "train", "tune chain hyperparameters and write them to disk");
  add_common_flags(train, config, config_path);
  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "convergence curve, MMD against the oracle, histograms");
  add_common_flags(evaluate, config, config_path);
  CLI::App* bench = app.add_subcommand(
      "bench", "per-target estimate and timing table");
  add_common_flags(bench, config, config_path);
  CLI::App* demo = app.add_subcommand(
      "demo-constraint",
      "valid and low-entropy initial distributions side by side (T = 9)");
  add_common_flags(demo, config, config_path);

  CLI11_PARSE(app, argc, argv);

  CLI::App* active = app.get_subcommands().front();
  if (const int rc = resolve_config(active, config, config_path); rc != 0) {
    return rc;
  }
  if (active == train) return ergo::cmd_train(config);
  if (active == evaluate) return ergo::cmd_evaluate(config);
  if (active == bench) return ergo::cmd_bench(config);
  return ergo::cmd_demo_constraint(config);
}
