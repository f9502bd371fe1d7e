#pragma once

#include <Eigen/Dense>

#include <string>
#include <variant>
#include <vector>

namespace rkhs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Linear rotation on the 2-torus, angles in radians.
struct TorusFlow {
  double alpha1 = 1.0;
  double alpha2 = 5.477225575051661;  // sqrt(30)
};

struct Lorenz63Flow {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 8.0 / 3.0;
};

struct RosslerFlow {
  double a = 0.1;
  double b = 0.1;
  double c = 14.0;
};

/// One of the three benchmark flows. Construct through make_flow() or validate()
/// to enforce parameter invariants.
using FlowSpec = std::variant<TorusFlow, Lorenz63Flow, RosslerFlow>;

std::string flow_name(const FlowSpec& flow);
int state_dimension(const FlowSpec& flow);

/// Throws std::invalid_argument on non-finite parameters or non-positive torus frequencies.
void validate(const FlowSpec& flow);

struct TrajectoryConfig {
  Vector x0;
  int samples = 0;             // N
  double dt = 0.0;             // sampling interval
  int spinup_samples = -1;     // < 0 means "same as samples"
  int integrator_substeps = 10;

  int resolved_spinup() const { return spinup_samples < 0 ? samples : spinup_samples; }
};

void validate(const TrajectoryConfig& cfg);

/// Sampled states of a flow, one row per sample.
struct Trajectory {
  Matrix states;
  double dt = 0.0;

  Eigen::Index size() const { return states.rows(); }
  Eigen::Index dimension() const { return states.cols(); }
};

/// Observation-map values, one row per sample (data space R^m).
struct ObservedSeries {
  Matrix values;

  Eigen::Index size() const { return values.rows(); }
  Eigen::Index dimension() const { return values.cols(); }
};

/// Vector field of the Lorenz 63 or Rossler system. Torus flows are rejected.
Vector vector_field(const FlowSpec& flow, const Eigen::Ref<const Vector>& state);

/// Fixed-step classical RK4 with cfg.integrator_substeps steps per sampling interval,
/// after discarding cfg.resolved_spinup() sampling intervals. Throws std::runtime_error
/// with the failing step index if the state becomes non-finite.
Trajectory integrate(const FlowSpec& flow, const TrajectoryConfig& cfg);

/// Closed-form torus rotation; angles are wrapped into [0, 2*pi) after every increment.
Trajectory torus_trajectory(const FlowSpec& flow, const TrajectoryConfig& cfg);

/// Dispatches to torus_trajectory or integrate.
Trajectory generate_trajectory(const FlowSpec& flow, const TrajectoryConfig& cfg);

enum class TorusEmbeddingVariant {
  /// ((1+R cos t1) cos t1, (1+R cos t2) sin t1, sin t2)
  printed,
  /// ((1+R cos t2) cos t1, (1+R cos t2) sin t1, sin t2)
  standard,
};

struct ObservationMap {
  enum class Kind { identity, torus_embedding } kind = Kind::identity;
  double radius = 0.5;
  TorusEmbeddingVariant variant = TorusEmbeddingVariant::printed;

  static ObservationMap identity() { return {}; }
  static ObservationMap torus(double radius = 0.5,
                              TorusEmbeddingVariant variant = TorusEmbeddingVariant::printed) {
    return {Kind::torus_embedding, radius, variant};
  }
};

ObservedSeries observe(const ObservationMap& map, const Trajectory& traj);
ObservedSeries observe(const ObservationMap& map, const Matrix& states);

/// Delay-coordinate map: row r holds (y_{r+Q-1}, y_{r+Q-2}, ..., y_r), newest first.
ObservedSeries delay_embed(const ObservedSeries& series, int delays);

}  // namespace rkhs
