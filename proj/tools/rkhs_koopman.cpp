#include "rkhs/config.hpp"
#include "rkhs/log.hpp"
#include "rkhs/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-based spectral analysis and forecasting of the Koopman generator"};
  app.require_subcommand(1);
  std::string log_level;
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Fit, sweep tau, export eigenfunctions and forecasts");
  run->add_option("config", config_path, "experiment YAML")->required();
  auto* sweep = app.add_subcommand("sweep-tau", "Combined spectrum CSV across the tau grid");
  sweep->add_option("config", config_path, "experiment YAML")->required();
  auto* forecast = app.add_subcommand("forecast", "Forecast error and trajectory CSVs");
  forecast->add_option("config", config_path, "experiment YAML")->required();

  rkhs::EvalRequest req;
  std::string points, out;
  auto* eval = app.add_subcommand("eval", "Evaluate eigenfunctions and predictors at user-supplied states");
  eval->add_option("config", config_path, "experiment YAML")->required();
  eval->add_option("--at", points, "CSV of states (one per row)")->required();
  eval->add_option("--out", out, "output CSV")->default_val("eval.csv");
  eval->add_option("--tau", req.tau, "regularization parameter (default: generator.eigenfunction_tau)");
  eval->add_option("--modes", req.ranks, "Dirichlet ranks to evaluate")->delimiter(',');
  eval->add_option("--lead-times", req.lead_times, "also evaluate predictors at these lead times")->delimiter(',');
  eval->add_flag("--data-space", req.data_space, "points are already in data space");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kValidation;
  }

  if (!log_level.empty()) rkhs::log()->set_level(spdlog::level::from_str(log_level));
  rkhs::configure_threads();

  try {
    const rkhs::ExperimentConfig cfg = rkhs::load_config(config_path);
    if (*run) rkhs::run_experiment(cfg);
    else if (*sweep) rkhs::run_sweep(cfg);
    else if (*forecast) rkhs::run_forecast(cfg);
    else if (*eval) {
      req.points = points;
      req.out = out;
      rkhs::run_eval(cfg, req);
    }
  } catch (const rkhs::ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kValidation;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntime;
  }
  return kOk;
}
