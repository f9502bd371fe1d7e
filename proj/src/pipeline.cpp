#include "rkhs/pipeline.hpp"

#include "rkhs/log.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

namespace rkhs {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

template <class F>
auto timed(const char* name, RunRecord& rec, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  auto finish = [&] {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.timings[name] = rec.timings.value(name, 0.0) + s;
    log()->info("{}: {:.2f} s", name, s);
  };
  try {
    if constexpr (std::is_void_v<decltype(fn())>) {
      fn();
      finish();
    } else {
      auto r = fn();
      finish();
      return r;
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

Eigen::VectorXd draw_initial_state(const FlowSpec& flow, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::VectorXd x(state_dimension(flow));
  if (std::holds_alternative<TorusFlow>(flow)) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = 2.0 * std::numbers::pi * u(rng);
  } else if (std::holds_alternative<Lorenz63Flow>(flow)) {
    x << 1.0 + u(rng), 1.0 + u(rng), 1.0 + u(rng);
  } else {
    x << 1.0 + u(rng), 1.0 + u(rng), u(rng);
  }
  return x;
}

std::string sanitize(const std::string& name) {
  std::string s;
  for (char c : name) s += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

std::string relative_artifact(const ExperimentConfig& cfg, const fs::path& p) {
  return fs::relative(p, cfg.output_dir).generic_string();
}

void write_manifest(const ExperimentConfig& cfg, const std::string& command, const FitArtifact* fit,
                    const RunRecord& rec) {
  json m;
  m["command"] = command;
  m["config"] = to_json(cfg);
  if (fit) {
    m["resolved"] = {{"samples", fit->data.rows()},
                     {"data_dimension", fit->data.cols()},
                     {"knn", fit->knn},
                     {"epsilon", fit->bandwidth.epsilon},
                     {"density_epsilon", fit->bandwidth.density_epsilon},
                     {"dimension", fit->bandwidth.dimension},
                     {"modes", fit->basis.rank()},
                     {"lambda_min", fit->basis.lambda.minCoeff()},
                     {"markov_defect", fit->markov_defect}};
  }
  m["cache"] = {{"key", rec.cache_key}, {"hit", rec.cache_hit}};
  m["timings"] = rec.timings;
  m["diagnostics"] = rec.diagnostics;
  m["failures"] = rec.failures;
  m["artifacts"] = rec.artifacts;
  write_text(cfg.output_dir / "manifest.json", m.dump(2) + "\n");
}

std::vector<int> lead_steps(const ExperimentConfig& cfg) {
  std::vector<int> k;
  for (int s = 0; s <= cfg.max_lead_steps; s += cfg.lead_stride) k.push_back(s);
  return k;
}

}  // namespace

Dataset make_dataset(const ExperimentConfig& cfg, bool verification) {
  const std::string& input = verification ? cfg.verification_input : cfg.trajectory_input;
  Trajectory traj;
  traj.dt = cfg.trajectory.dt;
  if (!input.empty()) {
    traj.states = read_csv(input);
    if (traj.states.cols() != state_dimension(cfg.flow) && cfg.observation.kind != ObservationMap::Kind::identity)
      throw ValidationError("trajectory input " + input + ": expected " + std::to_string(state_dimension(cfg.flow)) +
                            " columns");
    if (!traj.states.allFinite()) throw ValidationError("trajectory input " + input + ": non-finite values");
  } else {
    std::mt19937_64 rng(cfg.seed);
    Eigen::VectorXd x0 = draw_initial_state(cfg.flow, rng);
    Eigen::VectorXd x1 = draw_initial_state(cfg.flow, rng);
    TrajectoryConfig tc = cfg.trajectory;
    if (verification) {
      tc.x0 = x1;
      if (cfg.verification_samples > 0) tc.samples = cfg.verification_samples;
    } else {
      tc.x0 = cfg.x0_given ? cfg.trajectory.x0 : x0;
    }
    traj = generate_trajectory(cfg.flow, tc);
  }
  const ObservedSeries obs = observe(cfg.observation, traj);
  if (obs.size() < cfg.delays + 2)
    throw ValidationError("trajectory: " + std::to_string(obs.size()) + " samples are too few for " +
                          std::to_string(cfg.delays) + " delays");
  Dataset ds;
  ds.data = delay_embed(obs, cfg.delays).values;
  ds.features = obs.values.bottomRows(ds.data.rows());
  return ds;
}

FitArtifact fit_model(const ExperimentConfig& cfg, RunRecord& rec) {
  std::string key_src = upstream_json(cfg).dump();
  if (!cfg.trajectory_input.empty()) key_src += sha256_file(cfg.trajectory_input);
  rec.cache_key = sha256_hex(key_src);
  const fs::path cache_file = cfg.resolved_cache_dir() / (rec.cache_key + ".fit");

  if (cfg.cache && fs::exists(cache_file)) {
    try {
      FitArtifact fit = timed("cache_load", rec, [&] { return load_fit(cache_file); });
      rec.cache_hit = true;
      log()->info("fit: loaded cached basis {}", cache_file.string());
      return fit;
    } catch (const std::exception& e) {
      log()->warn("fit: ignoring unreadable cache file {}: {}", cache_file.string(), e.what());
    }
  }

  FitArtifact fit;
  Dataset ds = timed("trajectory", rec, [&] { return make_dataset(cfg, false); });
  const Eigen::Index n = ds.data.rows();
  if (n < 3) throw ValidationError("trajectory: need at least 3 samples");
  if (cfg.modes > n) throw ValidationError("basis.modes: exceeds the number of samples (" + std::to_string(n) + ")");
  fit.data = std::move(ds.data);
  fit.features = std::move(ds.features);
  fit.knn = cfg.knn > 0 ? std::min<Eigen::Index>(cfg.knn, n) : default_knn(n);

  const SparseDistances dists = timed("distances", rec, [&] { return pairwise_knn(fit.data, fit.knn); });
  fit.bandwidth = timed("bandwidth", rec, [&] { return fit_bandwidth(dists, cfg.bandwidth, cfg.autotune); });
  log()->info("bandwidth: epsilon={:.6g} density_epsilon={:.6g} dimension={:.4f}", fit.bandwidth.epsilon,
              fit.bandwidth.density_epsilon, fit.bandwidth.dimension);
  KernelFactor kf = timed("kernel", rec, [&] { return bistochastic_normalize(vb_kernel(dists, fit.bandwidth)); });
  fit.d = kf.d;
  fit.markov_defect = markov_defect(kf);
  log()->info("kernel: {} nonzeros, Markov defect {:.3e}", kf.normalized.nonZeros(), fit.markov_defect);
  rec.diagnostics["kernel_nonzeros"] = kf.normalized.nonZeros();

  EigenbasisOptions bo;
  bo.backend = cfg.backend;
  bo.lanczos.tol = cfg.lanczos_tol;
  fit.basis = timed("eigenbasis", rec, [&] { return eigenbasis(kf, cfg.modes, bo); });

  if (cfg.cache) timed("cache_store", rec, [&] { save_fit(cache_file, fit); });
  return fit;
}

GeneratorSpectrum spectrum_at(const FitArtifact& fit, const ExperimentConfig& cfg, double tau) {
  const RkhsScaling scaling = rkhs_scaling(fit.basis.lambda, tau);
  const FiniteDifferenceOp fd = fd_matrix(fit.basis.samples(), cfg.trajectory.dt);
  GeneratorOptions go;
  go.decouple_constant_mode = cfg.decouple_constant_mode;
  return generator_spectrum(fit.basis, scaling, fd, go);
}

std::vector<ForecastSummary> run_forecasts(const FitArtifact& fit, const ExperimentConfig& cfg, RunRecord& rec,
                                           bool write_files) {
  std::vector<ForecastSummary> out;
  if (!cfg.forecast_enabled) return out;

  const Dataset ver = timed("verification_trajectory", rec, [&] { return make_dataset(cfg, true); });
  const std::vector<int> steps = lead_steps(cfg);
  const int horizon = steps.back();
  const Eigen::Index nv = ver.data.rows();
  std::vector<Eigen::Index> seeds;
  for (Eigen::Index s = 0; s + horizon < nv; s += cfg.seed_stride) seeds.push_back(s);
  if (seeds.empty())
    throw ValidationError("forecast.max_lead_steps: verification trajectory of " + std::to_string(nv) +
                          " samples is shorter than the forecast horizon");
  const auto ns = static_cast<Eigen::Index>(seeds.size());

  Eigen::MatrixXd seed_points(ns, ver.data.cols());
  for (Eigen::Index i = 0; i < ns; ++i) seed_points.row(i) = ver.data.row(seeds[i]);

  const GeneratorSpectrum spec = timed("forecast_spectrum", rec, [&] { return spectrum_at(fit, cfg, cfg.forecast_tau); });
  const RkhsScaling scaling = rkhs_scaling(fit.basis.lambda, cfg.forecast_tau);
  const Eigen::MatrixXcd Z = timed("nystrom", rec, [&] {
    const Eigen::MatrixXd psi = nystrom_eval(seed_points, fit.data, fit.basis, fit.bandwidth, fit.knn);
    return eigenfunction_eval(scaled_basis_values(psi, fit.basis, scaling), spec.xi);
  });

  std::vector<double> lead_times;
  for (int k : steps) lead_times.push_back(k * cfg.trajectory.dt);
  const auto T = static_cast<Eigen::Index>(steps.size());

  for (const Observable& obs : cfg.observables) {
    timed("forecast", rec, [&] {
      const Eigen::VectorXd f_train = obs.evaluate(fit.features);
      const Eigen::VectorXd f_ver = obs.evaluate(ver.features);
      const Eigen::VectorXd c = project_observable(f_train, fit.basis, cfg.resolved_l_prime());
      const ForecastModel model = make_forecast_model(c, cfg.resolved_l_prime(), fit.basis, scaling, spec);

      Eigen::MatrixXd truth(T, ns), pred(T, ns);
      double worst_imag = 0.0;
      constexpr Eigen::Index chunk = 64;
      for (Eigen::Index k0 = 0; k0 < T; k0 += chunk) {
        const Eigen::Index kn = std::min(chunk, T - k0);
        std::vector<double> lt(lead_times.begin() + k0, lead_times.begin() + k0 + kn);
        double imag = 0.0;
        pred.middleRows(k0, kn) = predict_many(model, Z, lt, &imag).transpose();
        worst_imag = std::max(worst_imag, imag);
      }
      for (Eigen::Index k = 0; k < T; ++k)
        for (Eigen::Index i = 0; i < ns; ++i) truth(k, i) = f_ver[seeds[i] + steps[k]];

      ForecastSummary summary{obs.name, lead_times, error_metric(truth, pred)};
      rec.diagnostics["forecast_max_imag_" + sanitize(obs.name)] = worst_imag;
      log()->info("forecast {}: epsilon(t_max={:.4g}) = {:.4g}, max relative imaginary part {:.2e}", obs.name,
                  lead_times.back(), summary.epsilon[T - 1], worst_imag);

      if (write_files) {
        const fs::path err_path = cfg.output_dir / ("forecast_" + sanitize(obs.name) + ".csv");
        CsvWriter w(err_path, {"lead_time", "epsilon"});
        for (Eigen::Index k = 0; k < T; ++k) w.row({lead_times[k], summary.epsilon[k]});
        w.close();
        rec.artifacts.push_back(relative_artifact(cfg, err_path));

        const fs::path traj_path = cfg.output_dir / ("forecast_" + sanitize(obs.name) + "_trajectories.csv");
        CsvWriter tw(traj_path, {"seed_index", "lead_time", "truth", "prediction"});
        for (int s : cfg.export_seeds) {
          auto it = std::find(seeds.begin(), seeds.end(), static_cast<Eigen::Index>(s));
          if (it == seeds.end()) {
            log()->warn("forecast: export seed {} is not a forecast initial condition; skipped", s);
            continue;
          }
          const Eigen::Index col = it - seeds.begin();
          for (Eigen::Index k = 0; k < T; ++k) tw.row({double(s), lead_times[k], truth(k, col), pred(k, col)});
        }
        tw.close();
        rec.artifacts.push_back(relative_artifact(cfg, traj_path));
      }
      out.push_back(std::move(summary));
    });
  }
  return out;
}

namespace {

void write_spectrum(const fs::path& path, const GeneratorSpectrum& sp) {
  CsvWriter w(path, {"j", "omega", "dirichlet", "tau"});
  for (Eigen::Index r = 0; r < sp.size(); ++r) w.row({double(r), sp.omega_ranked(r), sp.dirichlet_ranked(r), sp.tau});
  w.close();
}

void sweep(const FitArtifact& fit, const ExperimentConfig& cfg, RunRecord& rec, bool per_tau_files) {
  const auto taus = cfg.tau.resolve();
  const fs::path sweep_path = cfg.output_dir / "tau_sweep.csv";
  CsvWriter sw(sweep_path, {"tau", "j", "omega", "dirichlet"});
  timed("spectra", rec, [&] {
    for (std::size_t i = 0; i < taus.size(); ++i) {
      try {
        const GeneratorSpectrum sp = spectrum_at(fit, cfg, taus[i]);
        for (Eigen::Index r = 0; r < sp.size(); ++r) sw.row({taus[i], double(r), sp.omega_ranked(r), sp.dirichlet_ranked(r)});
        if (per_tau_files) {
          const fs::path p = cfg.output_dir / fmt::format("spectrum_tau{:02d}.csv", i);
          write_spectrum(p, sp);
          rec.artifacts.push_back(relative_artifact(cfg, p));
        }
      } catch (const std::exception& e) {
        log()->error("tau={:.6g}: {}", taus[i], e.what());
        rec.failures.push_back({{"stage", "spectrum"}, {"tau", taus[i]}, {"error", e.what()}});
      }
    }
  });
  sw.close();
  rec.artifacts.push_back(relative_artifact(cfg, sweep_path));
}

void write_eigenfunctions(const FitArtifact& fit, const ExperimentConfig& cfg, RunRecord& rec) {
  if (cfg.eigenfunction_ranks.empty()) return;
  timed("eigenfunctions", rec, [&] {
    const GeneratorSpectrum sp = spectrum_at(fit, cfg, cfg.eigenfunction_tau);
    const RkhsScaling scaling = rkhs_scaling(fit.basis.lambda, cfg.eigenfunction_tau);
    const Eigen::MatrixXd psi_tau = scaled_basis_values(training_basis_values(fit.basis), fit.basis, scaling);
    json modes = json::array();
    for (int r : cfg.eigenfunction_ranks) {
      if (r >= sp.size()) continue;
      const Eigen::Index j = sp.ordering[r];
      const Eigen::VectorXcd z = psi_tau.cast<std::complex<double>>() * sp.xi.col(j);
      const fs::path p = cfg.output_dir / fmt::format("eigenfunction_rank{:03d}.csv", r);
      CsvWriter w(p, {"sample_index", "t", "re_zeta", "im_zeta"});
      for (Eigen::Index n = 0; n < z.size(); ++n)
        w.row({double(n), n * cfg.trajectory.dt, z[n].real(), z[n].imag()});
      w.close();
      rec.artifacts.push_back(relative_artifact(cfg, p));
      modes.push_back({{"rank", r}, {"omega", sp.omega[j]}, {"dirichlet", sp.dirichlet[j]}});
    }
    rec.diagnostics["eigenfunctions"] = {{"tau", cfg.eigenfunction_tau}, {"modes", modes}};
  });
}

template <class F>
void with_manifest(const ExperimentConfig& cfg, const std::string& command, F&& body) {
  fs::create_directories(cfg.output_dir);
  RunRecord rec;
  FitArtifact fit = fit_model(cfg, rec);
  body(fit, rec);
  write_manifest(cfg, command, &fit, rec);
}

}  // namespace

void run_experiment(const ExperimentConfig& cfg) {
  with_manifest(cfg, "run", [&](const FitArtifact& fit, RunRecord& rec) {
    sweep(fit, cfg, rec, true);
    write_eigenfunctions(fit, cfg, rec);
    run_forecasts(fit, cfg, rec);
  });
}

void run_sweep(const ExperimentConfig& cfg) {
  with_manifest(cfg, "sweep-tau", [&](const FitArtifact& fit, RunRecord& rec) { sweep(fit, cfg, rec, false); });
}

void run_forecast(const ExperimentConfig& cfg) {
  if (!cfg.forecast_enabled) throw ValidationError("forecast: no [forecast] table or forecast.enabled is false");
  with_manifest(cfg, "forecast", [&](const FitArtifact& fit, RunRecord& rec) { run_forecasts(fit, cfg, rec); });
}

void run_eval(const ExperimentConfig& cfg, const EvalRequest& req) {
  RunRecord rec;
  const Eigen::MatrixXd raw = read_csv(req.points);
  const FitArtifact fit = fit_model(cfg, rec);
  Eigen::MatrixXd points;
  if (req.data_space) {
    points = raw;
  } else {
    if (cfg.delays != 1)
      throw ValidationError("eval: delay-embedded models need data-space points (--data-space)");
    points = observe(cfg.observation, raw).values;
  }
  if (points.cols() != fit.data.cols())
    throw ValidationError("eval: points have " + std::to_string(points.cols()) + " columns, the model expects " +
                          std::to_string(fit.data.cols()));

  const double tau = req.tau > 0.0 ? req.tau : cfg.eigenfunction_tau;
  std::vector<int> ranks = req.ranks;
  if (ranks.empty()) ranks = cfg.eigenfunction_ranks;
  if (ranks.empty())
    for (int r = 0; r < std::min<Eigen::Index>(5, fit.basis.rank()); ++r) ranks.push_back(r);

  const Eigen::MatrixXd psi = timed("nystrom", rec, [&] {
    return nystrom_eval(points, fit.data, fit.basis, fit.bandwidth, fit.knn);
  });
  const GeneratorSpectrum sp = spectrum_at(fit, cfg, tau);
  const RkhsScaling scaling = rkhs_scaling(fit.basis.lambda, tau);
  const Eigen::MatrixXcd Z = eigenfunction_eval(scaled_basis_values(psi, fit.basis, scaling), sp.xi);

  CsvWriter w(req.out, {"point_index", "rank", "omega", "re_zeta", "im_zeta"});
  for (Eigen::Index i = 0; i < Z.rows(); ++i)
    for (int r : ranks) {
      if (r < 0 || r >= sp.size()) throw ValidationError("eval: rank " + std::to_string(r) + " out of range");
      const Eigen::Index j = sp.ordering[r];
      w.row({double(i), double(r), sp.omega[j], Z(i, j).real(), Z(i, j).imag()});
    }
  w.close();

  if (!req.lead_times.empty()) {
    if (cfg.observables.empty()) throw ValidationError("eval: --lead-times needs forecast.observables in the config");
    const GeneratorSpectrum fsp = spectrum_at(fit, cfg, cfg.forecast_tau);
    const RkhsScaling fscaling = rkhs_scaling(fit.basis.lambda, cfg.forecast_tau);
    const Eigen::MatrixXcd Zf = eigenfunction_eval(scaled_basis_values(psi, fit.basis, fscaling), fsp.xi);
    fs::path pred_path = req.out;
    pred_path.replace_filename(req.out.stem().string() + "_predictions.csv");
    CsvWriter pw(pred_path, {"point_index", "observable", "lead_time", "prediction"});
    for (std::size_t o = 0; o < cfg.observables.size(); ++o) {
      const Eigen::VectorXd c =
          project_observable(cfg.observables[o].evaluate(fit.features), fit.basis, cfg.resolved_l_prime());
      const ForecastModel model = make_forecast_model(c, cfg.resolved_l_prime(), fit.basis, fscaling, fsp);
      const Eigen::MatrixXd pred = predict_many(model, Zf, req.lead_times);
      for (Eigen::Index i = 0; i < pred.rows(); ++i)
        for (std::size_t k = 0; k < req.lead_times.size(); ++k)
          pw.row({double(i), double(o), req.lead_times[k], pred(i, static_cast<Eigen::Index>(k))});
    }
    pw.close();
  }
}

}  // namespace rkhs
