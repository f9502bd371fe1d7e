#pragma once

#include "rkhs/config.hpp"
#include "rkhs/forecast.hpp"
#include "rkhs/generator.hpp"
#include "rkhs/io.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace rkhs {

/// Stage timings and diagnostics collected for the manifest.
struct RunRecord {
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json diagnostics = nlohmann::json::object();
  nlohmann::json failures = nlohmann::json::array();
  std::vector<std::string> artifacts;
  bool cache_hit = false;
  std::string cache_key;
};

/// Error raised by a pipeline stage; the message is prefixed with the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

/// Observation-map values and data-space points of one trajectory.
struct Dataset {
  Eigen::MatrixXd data;      // delay-embedded
  Eigen::MatrixXd features;  // observation values aligned with data rows
};

/// Training (`verification` = false) or verification trajectory for the config, either
/// generated or read from the configured CSV.
Dataset make_dataset(const ExperimentConfig& cfg, bool verification);

/// Distances, bandwidth, kernel and eigenbasis; loaded from the cache when possible.
FitArtifact fit_model(const ExperimentConfig& cfg, RunRecord& rec);

/// Spectrum for one τ.
GeneratorSpectrum spectrum_at(const FitArtifact& fit, const ExperimentConfig& cfg, double tau);

struct ForecastSummary {
  std::string observable;
  std::vector<double> lead_times;
  Eigen::VectorXd epsilon;
};

std::vector<ForecastSummary> run_forecasts(const FitArtifact& fit, const ExperimentConfig& cfg, RunRecord& rec,
                                           bool write_files = true);

/// `run`: fit, per-τ spectra, eigenfunctions, forecasts (if enabled), manifest.
void run_experiment(const ExperimentConfig& cfg);
/// `sweep-tau`: fit and combined spectrum CSV across the τ-grid.
void run_sweep(const ExperimentConfig& cfg);
/// `forecast`: fit and forecast CSVs only.
void run_forecast(const ExperimentConfig& cfg);

struct EvalRequest {
  std::filesystem::path points;
  std::filesystem::path out;
  bool data_space = false;        // points are already in data space
  double tau = 0.0;               // <= 0 uses cfg.eigenfunction_tau
  std::vector<int> ranks;         // Dirichlet ranks; empty = cfg.eigenfunction_ranks or {0..4}
  std::vector<double> lead_times; // non-empty: also evaluate predictors of cfg.observables
};

/// `eval`: out-of-sample eigenfunction and predictor values at user points.
void run_eval(const ExperimentConfig& cfg, const EvalRequest& req);

}  // namespace rkhs
