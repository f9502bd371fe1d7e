#pragma once

#include "rkhs/basis.hpp"
#include "rkhs/dynamics.hpp"
#include "rkhs/kernel.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace rkhs {

/// Configuration or input validation failure. Messages name the offending field.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Observable built from components of the observation map: "F<k>" (1-based) or
/// "exp(F<a>+F<b>+...)".
struct Observable {
  std::string name;
  std::vector<int> components;  // 0-based
  bool exponential = false;

  static Observable parse(const std::string& text);
  Eigen::VectorXd evaluate(const Eigen::MatrixXd& observed) const;
};

struct TauGrid {
  double min = 1e-5;
  double max = 1.0;
  int count = 20;
  std::vector<double> values;  // explicit list; overrides min/max/count when non-empty

  std::vector<double> resolve() const;
};

struct ExperimentConfig {
  // flow
  FlowSpec flow = TorusFlow{};

  // trajectory
  TrajectoryConfig trajectory;
  bool x0_given = false;
  std::uint64_t seed = 1;
  std::string trajectory_input;    // optional CSV of training states
  std::string verification_input;  // optional CSV of verification states

  // observation
  ObservationMap observation;
  int delays = 1;

  // kernel
  Eigen::Index knn = 0;  // 0 = default_knn(N)
  BandwidthOverrides bandwidth;
  AutotuneOptions autotune;

  // basis
  Eigen::Index modes = 300;
  SvdBackend backend = SvdBackend::automatic;
  double lanczos_tol = 1e-12;

  // generator
  TauGrid tau;
  bool decouple_constant_mode = true;
  std::vector<int> eigenfunction_ranks;  // Dirichlet ranks to export
  double eigenfunction_tau = 1e-5;

  // forecast
  bool forecast_enabled = false;
  std::vector<Observable> observables;
  double forecast_tau = 1e-5;
  Eigen::Index l_prime = 0;  // 0 = modes
  int max_lead_steps = 0;
  int lead_stride = 1;
  int verification_samples = 0;  // 0 = N
  int seed_stride = 1;
  std::vector<int> export_seeds{0};

  // output
  std::filesystem::path output_dir = "out";
  bool cache = true;
  std::filesystem::path cache_dir;  // empty = <output_dir>/cache

  std::filesystem::path resolved_cache_dir() const;
  Eigen::Index resolved_l_prime() const { return l_prime > 0 ? l_prime : modes; }
};

/// Parses and validates a YAML experiment file. Relative paths inside the file are
/// resolved against the file's directory. Throws ValidationError.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir = ".");
void validate(const ExperimentConfig& cfg);

/// Resolved parameters as JSON (manifest content).
nlohmann::json to_json(const ExperimentConfig& cfg);

/// JSON of the configuration subset that determines the training data, kernel and basis.
nlohmann::json upstream_json(const ExperimentConfig& cfg);

}  // namespace rkhs
