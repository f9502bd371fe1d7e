#include "rkhs/config.hpp"

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <regex>
#include <set>
#include <sstream>

namespace rkhs {

namespace {

using nlohmann::json;

std::string join_key(const std::string& table, const std::string& key) { return table + "." + key; }

void check_keys(const YAML::Node& node, const std::string& table, const std::set<std::string>& allowed) {
  if (!node.IsMap()) throw ValidationError(table + ": expected a table");
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ValidationError(join_key(table, key) + ": unknown key");
  }
}

template <class T>
void read(const YAML::Node& node, const std::string& table, const std::string& key, T& out) {
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ValidationError(join_key(table, key) + ": invalid value '" + YAML::Dump(v) + "'");
  }
}

std::filesystem::path resolve_path(const std::string& p, const std::filesystem::path& base) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

Observable Observable::parse(const std::string& text) {
  static const std::regex single(R"(\s*F(\d+)\s*)");
  static const std::regex expo(R"(\s*exp\((.*)\)\s*)");
  Observable o;
  o.name = text;
  std::smatch m;
  std::string body = text;
  if (std::regex_match(text, m, expo)) {
    o.exponential = true;
    body = m[1].str();
  }
  std::stringstream ss(body);
  std::string term;
  while (std::getline(ss, term, '+')) {
    std::smatch t;
    if (!std::regex_match(term, t, single)) throw ValidationError("observable '" + text + "': cannot parse '" + term + "'");
    const int k = std::stoi(t[1].str());
    if (k < 1) throw ValidationError("observable '" + text + "': components are numbered from 1");
    o.components.push_back(k - 1);
  }
  if (o.components.empty()) throw ValidationError("observable '" + text + "': empty expression");
  if (!o.exponential && o.components.size() > 1)
    throw ValidationError("observable '" + text + "': sums are only supported inside exp()");
  return o;
}

Eigen::VectorXd Observable::evaluate(const Eigen::MatrixXd& observed) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(observed.rows());
  for (int c : components) {
    if (c >= observed.cols())
      throw ValidationError("observable '" + name + "' uses component F" + std::to_string(c + 1) +
                            " but the observation map has " + std::to_string(observed.cols()));
    v += observed.col(c);
  }
  if (exponential) v = v.array().exp().matrix();
  return v;
}

std::vector<double> TauGrid::resolve() const {
  if (!values.empty()) return values;
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = min;
    return out;
  }
  const double a = std::log(min), b = std::log(max);
  for (int i = 0; i < count; ++i) out[i] = std::exp(a + (b - a) * i / (count - 1));
  out.front() = min;
  out.back() = max;
  return out;
}

std::filesystem::path ExperimentConfig::resolved_cache_dir() const {
  return cache_dir.empty() ? output_dir / "cache" : cache_dir;
}

ExperimentConfig parse_config(const std::string& yaml_text, const std::filesystem::path& base_dir) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ValidationError(std::string("config: YAML parse error: ") + e.what());
  }
  if (!root.IsMap()) throw ValidationError("config: top level must be a table");
  check_keys(root, "config", {"flow", "trajectory", "observation", "kernel", "basis", "generator", "forecast", "output"});

  ExperimentConfig cfg;

  // flow
  const YAML::Node flow = root["flow"];
  if (!flow) throw ValidationError("flow: missing table");
  check_keys(flow, "flow", {"kind", "alpha1", "alpha2", "sigma", "rho", "beta", "a", "b", "c"});
  std::string kind;
  read(flow, "flow", "kind", kind);
  if (kind == "torus") {
    TorusFlow f;
    read(flow, "flow", "alpha1", f.alpha1);
    read(flow, "flow", "alpha2", f.alpha2);
    cfg.flow = f;
  } else if (kind == "lorenz63") {
    Lorenz63Flow f;
    read(flow, "flow", "sigma", f.sigma);
    read(flow, "flow", "rho", f.rho);
    read(flow, "flow", "beta", f.beta);
    cfg.flow = f;
  } else if (kind == "rossler") {
    RosslerFlow f;
    read(flow, "flow", "a", f.a);
    read(flow, "flow", "b", f.b);
    read(flow, "flow", "c", f.c);
    cfg.flow = f;
  } else {
    throw ValidationError("flow.kind: expected torus, lorenz63 or rossler (got '" + kind + "')");
  }

  // trajectory
  cfg.trajectory.samples = 16000;
  if (std::holds_alternative<TorusFlow>(cfg.flow)) cfg.trajectory.dt = 2 * std::numbers::pi / 500;
  else if (std::holds_alternative<Lorenz63Flow>(cfg.flow)) cfg.trajectory.dt = 0.01;
  else cfg.trajectory.dt = 0.04;
  if (const YAML::Node t = root["trajectory"]) {
    check_keys(t, "trajectory", {"samples", "dt", "spinup_samples", "integrator_substeps", "x0", "seed", "input",
                                 "verification_input"});
    read(t, "trajectory", "samples", cfg.trajectory.samples);
    read(t, "trajectory", "dt", cfg.trajectory.dt);
    read(t, "trajectory", "spinup_samples", cfg.trajectory.spinup_samples);
    read(t, "trajectory", "integrator_substeps", cfg.trajectory.integrator_substeps);
    read(t, "trajectory", "seed", cfg.seed);
    if (t["x0"]) {
      std::vector<double> x0;
      read(t, "trajectory", "x0", x0);
      cfg.trajectory.x0 = Eigen::Map<Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size()));
      cfg.x0_given = true;
    }
    std::string in, vin;
    read(t, "trajectory", "input", in);
    read(t, "trajectory", "verification_input", vin);
    cfg.trajectory_input = resolve_path(in, base_dir).string();
    cfg.verification_input = resolve_path(vin, base_dir).string();
  }

  // observation
  if (std::holds_alternative<TorusFlow>(cfg.flow)) cfg.observation = ObservationMap::torus();
  if (const YAML::Node o = root["observation"]) {
    check_keys(o, "observation", {"map", "radius", "variant", "delays"});
    std::string map;
    read(o, "observation", "map", map);
    if (map == "identity") cfg.observation = ObservationMap::identity();
    else if (map == "torus_embedding") cfg.observation = ObservationMap::torus();
    else if (!map.empty()) throw ValidationError("observation.map: expected identity or torus_embedding");
    read(o, "observation", "radius", cfg.observation.radius);
    std::string variant;
    read(o, "observation", "variant", variant);
    if (variant == "standard") cfg.observation.variant = TorusEmbeddingVariant::standard;
    else if (variant == "printed" || variant.empty()) cfg.observation.variant = TorusEmbeddingVariant::printed;
    else throw ValidationError("observation.variant: expected printed or standard");
    read(o, "observation", "delays", cfg.delays);
  }

  // kernel
  if (const YAML::Node k = root["kernel"]) {
    check_keys(k, "kernel", {"knn", "epsilon", "density_epsilon", "dimension", "autotune_grid_points",
                             "autotune_max_rows"});
    read(k, "kernel", "knn", cfg.knn);
    read(k, "kernel", "epsilon", cfg.bandwidth.epsilon);
    read(k, "kernel", "density_epsilon", cfg.bandwidth.density_epsilon);
    read(k, "kernel", "dimension", cfg.bandwidth.dimension);
    read(k, "kernel", "autotune_grid_points", cfg.autotune.grid_points);
    read(k, "kernel", "autotune_max_rows", cfg.autotune.max_rows);
  }

  // basis
  if (const YAML::Node b = root["basis"]) {
    check_keys(b, "basis", {"modes", "backend", "lanczos_tol"});
    read(b, "basis", "modes", cfg.modes);
    std::string backend;
    read(b, "basis", "backend", backend);
    if (backend == "lanczos") cfg.backend = SvdBackend::lanczos;
    else if (backend == "dense") cfg.backend = SvdBackend::dense;
    else if (backend == "automatic" || backend.empty()) cfg.backend = SvdBackend::automatic;
    else throw ValidationError("basis.backend: expected automatic, lanczos or dense");
    read(b, "basis", "lanczos_tol", cfg.lanczos_tol);
  }

  // generator
  if (const YAML::Node g = root["generator"]) {
    check_keys(g, "generator", {"tau", "tau_min", "tau_max", "tau_count", "decouple_constant_mode",
                                "eigenfunctions", "eigenfunction_tau"});
    if (g["tau"]) {
      if (g["tau"].IsSequence()) read(g, "generator", "tau", cfg.tau.values);
      else {
        double v = 0;
        read(g, "generator", "tau", v);
        cfg.tau.values = {v};
      }
    }
    read(g, "generator", "tau_min", cfg.tau.min);
    read(g, "generator", "tau_max", cfg.tau.max);
    read(g, "generator", "tau_count", cfg.tau.count);
    read(g, "generator", "decouple_constant_mode", cfg.decouple_constant_mode);
    read(g, "generator", "eigenfunctions", cfg.eigenfunction_ranks);
    read(g, "generator", "eigenfunction_tau", cfg.eigenfunction_tau);
  }

  // forecast
  if (const YAML::Node f = root["forecast"]) {
    check_keys(f, "forecast", {"enabled", "observables", "tau", "l_prime", "max_lead_steps", "lead_stride",
                               "verification_samples", "seed_stride", "export_seeds"});
    cfg.forecast_enabled = true;
    read(f, "forecast", "enabled", cfg.forecast_enabled);
    std::vector<std::string> names;
    read(f, "forecast", "observables", names);
    for (const auto& n : names) cfg.observables.push_back(Observable::parse(n));
    read(f, "forecast", "tau", cfg.forecast_tau);
    read(f, "forecast", "l_prime", cfg.l_prime);
    read(f, "forecast", "max_lead_steps", cfg.max_lead_steps);
    read(f, "forecast", "lead_stride", cfg.lead_stride);
    read(f, "forecast", "verification_samples", cfg.verification_samples);
    read(f, "forecast", "seed_stride", cfg.seed_stride);
    read(f, "forecast", "export_seeds", cfg.export_seeds);
  }

  // output
  if (const YAML::Node o = root["output"]) {
    check_keys(o, "output", {"directory", "cache", "cache_dir"});
    std::string dir, cdir;
    read(o, "output", "directory", dir);
    read(o, "output", "cache", cfg.cache);
    read(o, "output", "cache_dir", cdir);
    if (!dir.empty()) cfg.output_dir = resolve_path(dir, base_dir);
    if (!cdir.empty()) cfg.cache_dir = resolve_path(cdir, base_dir);
  }

  validate(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

void validate(const ExperimentConfig& cfg) {
  try {
    validate(cfg.flow);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("flow: ") + e.what());
  }
  const auto& t = cfg.trajectory;
  const bool external = !cfg.trajectory_input.empty();
  if (!external && t.samples < 3)
    throw ValidationError("trajectory.samples: need at least 3 samples for finite differences (got " +
                          std::to_string(t.samples) + ")");
  if (!(t.dt > 0.0) || !std::isfinite(t.dt)) throw ValidationError("trajectory.dt: must be positive");
  if (t.integrator_substeps < 1) throw ValidationError("trajectory.integrator_substeps: must be >= 1");
  if (cfg.x0_given && t.x0.size() != state_dimension(cfg.flow))
    throw ValidationError("trajectory.x0: expected " + std::to_string(state_dimension(cfg.flow)) + " entries");
  if (cfg.observation.kind == ObservationMap::Kind::torus_embedding && !std::holds_alternative<TorusFlow>(cfg.flow))
    throw ValidationError("observation.map: torus_embedding requires a torus flow");
  if (!(cfg.observation.radius > 0.0)) throw ValidationError("observation.radius: must be positive");
  if (cfg.delays < 1) throw ValidationError("observation.delays: must be >= 1");
  if (!external && cfg.delays > t.samples - 2)
    throw ValidationError("observation.delays: leaves fewer than 3 delay-embedded samples");
  if (cfg.knn < 0) throw ValidationError("kernel.knn: must be >= 0");
  if (cfg.bandwidth.epsilon < 0 || cfg.bandwidth.density_epsilon < 0 || cfg.bandwidth.dimension < 0)
    throw ValidationError("kernel: bandwidth overrides must be >= 0 (0 = autotune)");
  if (cfg.autotune.grid_points < 3) throw ValidationError("kernel.autotune_grid_points: must be >= 3");
  if (cfg.modes < 1) throw ValidationError("basis.modes: must be >= 1");
  if (!external && cfg.modes > t.samples - cfg.delays + 1)
    throw ValidationError("basis.modes: exceeds the number of samples");
  if (!(cfg.lanczos_tol > 0.0)) throw ValidationError("basis.lanczos_tol: must be positive");

  const auto taus = cfg.tau.resolve();
  if (taus.empty()) throw ValidationError("generator.tau: grid is empty");
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (!(taus[i] > 0.0) || !std::isfinite(taus[i])) throw ValidationError("generator.tau: values must be positive");
    if (i > 0 && !(taus[i] > taus[i - 1])) throw ValidationError("generator.tau: values must be strictly increasing");
  }
  if (cfg.tau.values.empty() && (cfg.tau.count < 1 || !(cfg.tau.min > 0.0) || !(cfg.tau.max >= cfg.tau.min)))
    throw ValidationError("generator.tau_min/tau_max/tau_count: invalid geometric grid");
  for (int r : cfg.eigenfunction_ranks)
    if (r < 0 || r >= cfg.modes) throw ValidationError("generator.eigenfunctions: rank out of range");
  if (!(cfg.eigenfunction_tau > 0.0)) throw ValidationError("generator.eigenfunction_tau: must be positive");

  if (cfg.forecast_enabled) {
    if (cfg.observables.empty()) throw ValidationError("forecast.observables: at least one observable required");
    if (!(cfg.forecast_tau > 0.0)) throw ValidationError("forecast.tau: must be positive");
    if (cfg.l_prime < 0 || cfg.l_prime > cfg.modes) throw ValidationError("forecast.l_prime: need 0 <= L' <= modes");
    if (cfg.max_lead_steps < 0) throw ValidationError("forecast.max_lead_steps: must be >= 0");
    if (cfg.lead_stride < 1) throw ValidationError("forecast.lead_stride: must be >= 1");
    if (cfg.verification_samples < 0) throw ValidationError("forecast.verification_samples: must be >= 0");
    if (cfg.seed_stride < 1) throw ValidationError("forecast.seed_stride: must be >= 1");
    for (int s : cfg.export_seeds)
      if (s < 0) throw ValidationError("forecast.export_seeds: must be >= 0");
  }
}

namespace {

json flow_json(const FlowSpec& flow) {
  return std::visit(
      [](const auto& f) -> json {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, TorusFlow>) return {{"kind", "torus"}, {"alpha1", f.alpha1}, {"alpha2", f.alpha2}};
        else if constexpr (std::is_same_v<T, Lorenz63Flow>)
          return {{"kind", "lorenz63"}, {"sigma", f.sigma}, {"rho", f.rho}, {"beta", f.beta}};
        else return {{"kind", "rossler"}, {"a", f.a}, {"b", f.b}, {"c", f.c}};
      },
      flow);
}

const char* backend_name(SvdBackend b) {
  switch (b) {
    case SvdBackend::lanczos: return "lanczos";
    case SvdBackend::dense: return "dense";
    default: return "automatic";
  }
}

}  // namespace

json upstream_json(const ExperimentConfig& cfg) {
  json j;
  j["flow"] = flow_json(cfg.flow);
  j["trajectory"] = {{"samples", cfg.trajectory.samples},
                     {"dt", cfg.trajectory.dt},
                     {"spinup_samples", cfg.trajectory.resolved_spinup()},
                     {"integrator_substeps", cfg.trajectory.integrator_substeps},
                     {"x0", cfg.x0_given ? std::vector<double>(cfg.trajectory.x0.data(),
                                                               cfg.trajectory.x0.data() + cfg.trajectory.x0.size())
                                         : std::vector<double>{}},
                     {"seed", cfg.seed},
                     {"input", cfg.trajectory_input}};
  j["observation"] = {{"map", cfg.observation.kind == ObservationMap::Kind::identity ? "identity" : "torus_embedding"},
                      {"radius", cfg.observation.radius},
                      {"variant", cfg.observation.variant == TorusEmbeddingVariant::printed ? "printed" : "standard"},
                      {"delays", cfg.delays}};
  j["kernel"] = {{"knn", cfg.knn},
                 {"epsilon", cfg.bandwidth.epsilon},
                 {"density_epsilon", cfg.bandwidth.density_epsilon},
                 {"dimension", cfg.bandwidth.dimension},
                 {"autotune_grid_points", cfg.autotune.grid_points},
                 {"autotune_max_rows", cfg.autotune.max_rows}};
  j["basis"] = {{"modes", cfg.modes}, {"backend", backend_name(cfg.backend)}, {"lanczos_tol", cfg.lanczos_tol}};
  return j;
}

json to_json(const ExperimentConfig& cfg) {
  json j = upstream_json(cfg);
  j["trajectory"]["verification_input"] = cfg.verification_input;
  j["generator"] = {{"tau", cfg.tau.resolve()},
                    {"decouple_constant_mode", cfg.decouple_constant_mode},
                    {"eigenfunctions", cfg.eigenfunction_ranks},
                    {"eigenfunction_tau", cfg.eigenfunction_tau}};
  std::vector<std::string> names;
  for (const auto& o : cfg.observables) names.push_back(o.name);
  j["forecast"] = {{"enabled", cfg.forecast_enabled},
                   {"observables", names},
                   {"tau", cfg.forecast_tau},
                   {"l_prime", cfg.resolved_l_prime()},
                   {"max_lead_steps", cfg.max_lead_steps},
                   {"lead_stride", cfg.lead_stride},
                   {"verification_samples", cfg.verification_samples},
                   {"seed_stride", cfg.seed_stride},
                   {"export_seeds", cfg.export_seeds}};
  j["output"] = {{"directory", cfg.output_dir.string()},
                 {"cache", cfg.cache},
                 {"cache_dir", cfg.resolved_cache_dir().string()}};
  return j;
}

}  // namespace rkhs
