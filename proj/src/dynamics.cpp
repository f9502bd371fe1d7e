#include "rkhs/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace rkhs {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double wrap_angle(double theta) {
  double w = std::fmod(theta, kTwoPi);
  if (w < 0.0) w += kTwoPi;
  // fmod of a value just below a multiple of 2pi can round up to 2pi after the shift
  if (w >= kTwoPi) w -= kTwoPi;
  return w;
}

void rk4_step(const FlowSpec& flow, Vector& x, double h, Vector& k1, Vector& k2, Vector& k3,
              Vector& k4, Vector& tmp) {
  k1 = vector_field(flow, x);
  tmp = x + 0.5 * h * k1;
  k2 = vector_field(flow, tmp);
  tmp = x + 0.5 * h * k2;
  k3 = vector_field(flow, tmp);
  tmp = x + h * k3;
  k4 = vector_field(flow, tmp);
  x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

std::string flow_name(const FlowSpec& flow) {
  return std::visit(overloaded{[](const TorusFlow&) { return std::string("torus"); },
                               [](const Lorenz63Flow&) { return std::string("lorenz63"); },
                               [](const RosslerFlow&) { return std::string("rossler"); }},
                    flow);
}

int state_dimension(const FlowSpec& flow) {
  return std::holds_alternative<TorusFlow>(flow) ? 2 : 3;
}

void validate(const FlowSpec& flow) {
  std::visit(overloaded{
                 [](const TorusFlow& f) {
                   if (!std::isfinite(f.alpha1) || !std::isfinite(f.alpha2))
                     throw std::invalid_argument("torus frequencies must be finite");
                   if (f.alpha1 <= 0.0 || f.alpha2 <= 0.0)
                     throw std::invalid_argument("torus frequencies must be strictly positive");
                 },
                 [](const Lorenz63Flow& f) {
                   if (!std::isfinite(f.sigma) || !std::isfinite(f.rho) || !std::isfinite(f.beta))
                     throw std::invalid_argument("lorenz63 parameters must be finite");
                 },
                 [](const RosslerFlow& f) {
                   if (!std::isfinite(f.a) || !std::isfinite(f.b) || !std::isfinite(f.c))
                     throw std::invalid_argument("rossler parameters must be finite");
                 }},
             flow);
}

void validate(const TrajectoryConfig& cfg) {
  if (cfg.samples < 2) throw std::invalid_argument("trajectory needs at least 2 samples");
  if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt))
    throw std::invalid_argument("sampling interval must be positive and finite");
  if (cfg.integrator_substeps < 1)
    throw std::invalid_argument("integrator_substeps must be at least 1");
  if (!cfg.x0.allFinite()) throw std::invalid_argument("initial state must be finite");
}

Vector vector_field(const FlowSpec& flow, const Eigen::Ref<const Vector>& state) {
  if (std::holds_alternative<TorusFlow>(flow))
    throw std::invalid_argument("vector_field: torus flow is advanced analytically, use torus_trajectory");
  if (state.size() != 3)
    throw std::invalid_argument("vector_field: expected a 3-dimensional state");
  const double x = state[0], y = state[1], z = state[2];
  Vector v(3);
  if (const auto* l = std::get_if<Lorenz63Flow>(&flow)) {
    v << l->sigma * (y - x), x * (l->rho - z) - y, x * y - l->beta * z;
  } else {
    const auto& r = std::get<RosslerFlow>(flow);
    v << -y - z, x + r.a * y, r.b + z * (x - r.c);
  }
  return v;
}

Trajectory integrate(const FlowSpec& flow, const TrajectoryConfig& cfg) {
  validate(flow);
  validate(cfg);
  if (std::holds_alternative<TorusFlow>(flow))
    throw std::invalid_argument("integrate: torus flow is advanced analytically, use torus_trajectory");
  if (cfg.x0.size() != 3) throw std::invalid_argument("integrate: x0 must be 3-dimensional");

  const double h = cfg.dt / cfg.integrator_substeps;
  Vector x = cfg.x0;
  Vector k1(3), k2(3), k3(3), k4(3), tmp(3);
  long long step = 0;
  auto advance = [&] {
    for (int s = 0; s < cfg.integrator_substeps; ++s, ++step) {
      rk4_step(flow, x, h, k1, k2, k3, k4, tmp);
      if (!x.allFinite())
        throw std::runtime_error("integrate: state became non-finite at integrator step " +
                                 std::to_string(step));
    }
  };

  for (int n = 0; n < cfg.resolved_spinup(); ++n) advance();

  Trajectory traj;
  traj.dt = cfg.dt;
  traj.states.resize(cfg.samples, 3);
  traj.states.row(0) = x.transpose();
  for (int n = 1; n < cfg.samples; ++n) {
    advance();
    traj.states.row(n) = x.transpose();
  }
  return traj;
}

Trajectory torus_trajectory(const FlowSpec& flow, const TrajectoryConfig& cfg) {
  validate(flow);
  validate(cfg);
  const auto* torus = std::get_if<TorusFlow>(&flow);
  if (!torus) throw std::invalid_argument("torus_trajectory: flow is not a torus rotation");
  if (cfg.x0.size() != 2) throw std::invalid_argument("torus_trajectory: x0 must be 2-dimensional");

  const double d1 = wrap_angle(torus->alpha1 * cfg.dt);
  const double d2 = wrap_angle(torus->alpha2 * cfg.dt);
  Trajectory traj;
  traj.dt = cfg.dt;
  traj.states.resize(cfg.samples, 2);
  double t1 = wrap_angle(cfg.x0[0]);
  double t2 = wrap_angle(cfg.x0[1]);
  for (int n = 0; n < cfg.samples; ++n) {
    traj.states(n, 0) = t1;
    traj.states(n, 1) = t2;
    t1 = wrap_angle(t1 + d1);
    t2 = wrap_angle(t2 + d2);
  }
  return traj;
}

Trajectory generate_trajectory(const FlowSpec& flow, const TrajectoryConfig& cfg) {
  return std::holds_alternative<TorusFlow>(flow) ? torus_trajectory(flow, cfg) : integrate(flow, cfg);
}

ObservedSeries observe(const ObservationMap& map, const Matrix& states) {
  ObservedSeries out;
  if (map.kind == ObservationMap::Kind::identity) {
    out.values = states;
    return out;
  }
  if (states.cols() != 2)
    throw std::invalid_argument("observe: torus embedding expects 2 angle coordinates, got " +
                                std::to_string(states.cols()));
  const double R = map.radius;
  out.values.resize(states.rows(), 3);
  for (Eigen::Index n = 0; n < states.rows(); ++n) {
    const double t1 = states(n, 0), t2 = states(n, 1);
    const double radial1 =
        1.0 + R * std::cos(map.variant == TorusEmbeddingVariant::printed ? t1 : t2);
    const double radial2 = 1.0 + R * std::cos(t2);
    out.values(n, 0) = radial1 * std::cos(t1);
    out.values(n, 1) = radial2 * std::sin(t1);
    out.values(n, 2) = std::sin(t2);
  }
  return out;
}

ObservedSeries observe(const ObservationMap& map, const Trajectory& traj) {
  return observe(map, traj.states);
}

ObservedSeries delay_embed(const ObservedSeries& series, int delays) {
  const Eigen::Index n = series.size();
  if (delays < 1 || delays > n)
    throw std::invalid_argument("delay_embed: Q must satisfy 1 <= Q <= N (got Q=" +
                                std::to_string(delays) + ", N=" + std::to_string(n) + ")");
  const Eigen::Index m = series.dimension();
  ObservedSeries out;
  out.values.resize(n - delays + 1, m * delays);
  for (Eigen::Index r = 0; r < out.values.rows(); ++r)
    for (int q = 0; q < delays; ++q)
      out.values.block(r, q * m, 1, m) = series.values.row(r + delays - 1 - q);
  return out;
}

}  // namespace rkhs
