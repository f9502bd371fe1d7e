// Acceptance run: one PASS/FAIL line per criterion, extra context on INFO lines.
// Exit status is 1 if any criterion fails.
#include "rkhs/config.hpp"
#include "rkhs/forecast.hpp"
#include "rkhs/generator.hpp"
#include "rkhs/log.hpp"
#include "rkhs/pipeline.hpp"

#include <fmt/format.h>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace rkhs;

namespace {

// Pinned tolerances.
constexpr double kTorusFreqRelTol = 0.02;
constexpr double kTorusForecastMaxEps = 0.2;
constexpr double kTorusForecastHorizon = 20.0;
constexpr double kLinearR2Min = 0.9;
constexpr double kL63MonotoneHorizon = 1.0;
constexpr int kL63SmoothingWindow = 5;
constexpr double kL63PlateauLo = 1.1;
constexpr double kL63PlateauHi = 1.6;
constexpr double kL63PlateauFrom = 4.0;
constexpr double kL63PlateauTo = 5.0;
constexpr double kL63CompareTime = 2.0;
constexpr double kRosslerBaseTol = 0.1;
constexpr double kRosslerHarmonicRelTol = 0.05;
constexpr int kRosslerCandidateModes = 10;
constexpr double kMarkovSparseTol = 1e-6;
constexpr double kMarkovDenseTol = 1e-10;
constexpr double kSymmetryTol = 1e-10;
constexpr double kZeroFrequencyTol = 1e-8;
constexpr double kConstantDirichletTol = 1e-6;
constexpr double kSemigroupTol = 1e-14;
constexpr int kSemigroupTrials = 10000;
constexpr double kOracleEigTol = 1e-8;
constexpr double kOracleAngleTol = 1e-6;
constexpr double kOraclePredictTol = 1e-8;
constexpr double kNystromRelTol = 1e-6;
constexpr double kTau = 1e-5;

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  fmt::print("{} {}: {}\n", pass ? "PASS" : "FAIL", name, detail);
  std::fflush(stdout);
  if (!pass) ++failures;
}

void info(const std::string& text) {
  fmt::print("INFO {}\n", text);
  std::fflush(stdout);
}

ExperimentConfig load(const std::string& name) {
  ExperimentConfig cfg = load_config(fs::path(RKHS_SOURCE_DIR) / "configs" / name);
  cfg.cache = false;
  cfg.output_dir = fs::temp_directory_path() / "rkhs_acceptance";
  return cfg;
}

// Nonzero positive frequencies in ascending Dirichlet order.
std::vector<double> positive_by_energy(const GeneratorSpectrum& sp) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < sp.size(); ++r) {
    const double w = sp.omega_ranked(r);
    if (w > kZeroFrequencyTol && std::isfinite(sp.dirichlet_ranked(r))) out.push_back(w);
  }
  return out;
}

std::string join(const std::vector<double>& v, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < std::min(n, v.size()); ++i) s += fmt::format("{}{:.5g}", i ? ", " : "", v[i]);
  return s;
}

// Coefficient of determination of the least-squares line through (t, y).
double linear_r2(const std::vector<double>& t, const Eigen::VectorXd& y) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd A(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) A.row(i) << 1.0, t[i];
  const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(y);
  const double ss_res = (A * coef - y).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  return ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
}

struct SpectrumChecks {
  bool ok = true;
  std::vector<std::string> notes;
};

void check_spectrum(const std::string& label, const GeneratorSpectrum& sp, SpectrumChecks& acc) {
  const double asym = (sp.W + sp.W.transpose()).cwiseAbs().maxCoeff();
  std::vector<double> w(sp.omega.data(), sp.omega.data() + sp.size());
  std::sort(w.begin(), w.end());
  double sym = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) sym = std::max(sym, std::abs(w[i] + w[w.size() - 1 - i]));
  int constant = 0;
  for (Eigen::Index j = 0; j < sp.size(); ++j)
    if (std::abs(sp.omega[j]) <= kZeroFrequencyTol && sp.dirichlet[j] <= kConstantDirichletTol) ++constant;
  const bool ok = asym == 0.0 && sym <= kSymmetryTol && constant == 1;
  acc.ok = acc.ok && ok;
  acc.notes.push_back(fmt::format("{} |W+W^T|={:.1e} sym={:.1e} const={}", label, asym, sym, constant));
}

struct MarkovChecks {
  bool ok = true;
  std::vector<std::string> notes;
  void add(const std::string& label, double defect, double tol) {
    ok = ok && defect <= tol;
    notes.push_back(fmt::format("{} {:.2e}", label, defect));
  }
};

std::string joined(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : "; ") + x;
  return s;
}

void semigroup_law() {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> ul(0.0, 1.0), ut(0.0, 10.0);
  double worst = 0.0;
  for (int trial = 0; trial < kSemigroupTrials; ++trial) {
    Eigen::VectorXd lambda(16);
    for (auto& x : lambda) x = 1.0 - ul(rng);  // (0, 1]
    double t1 = 0.0, t2 = 0.0;
    while (t1 == 0.0) t1 = ut(rng);
    while (t2 == 0.0) t2 = ut(rng);
    const Eigen::VectorXd a = rkhs_scaling(lambda, t1).lambda_tau;
    const Eigen::VectorXd b = rkhs_scaling(lambda, t2).lambda_tau;
    const Eigen::VectorXd c = rkhs_scaling(lambda, t1 + t2).lambda_tau;
    worst = std::max(worst, (c - a.cwiseProduct(b)).cwiseAbs().maxCoeff());
  }
  report("semigroup_law", worst <= kSemigroupTol,
         fmt::format("max |lambda_(t1+t2) - lambda_t1 lambda_t2| = {:.2e} over {} trials (tol {:.0e})", worst,
                     kSemigroupTrials, kSemigroupTol));
}

void finite_difference_accuracy() {
  double worst_ratio = 0.0;
  for (double dt : {0.001, 0.01, 0.04}) {
    const Eigen::Index n = 500;
    const FiniteDifferenceOp fd = fd_matrix(n, dt);
    for (double w : {0.1, 1.0, 5.0, 20.0}) {
      if (w * dt >= 1.0) continue;
      Eigen::VectorXd f(n);
      for (Eigen::Index i = 0; i < n; ++i) f[i] = std::sin(w * i * dt);
      const Eigen::VectorXd g = fd.V * f;
      const double bound = (w * dt) * (w * dt) * w / 4;
      // Rows 1 and n-2 couple to the halved boundary entries; rows 2..n-3 are interior.
      for (Eigen::Index i = 2; i < n - 2; ++i)
        worst_ratio = std::max(worst_ratio, std::abs(g[i] - w * std::cos(w * i * dt)) / bound);
    }
  }
  report("finite_difference_accuracy", worst_ratio <= 1.0,
         fmt::format("max error / ((w dt)^2 w / 4) = {:.3f} over interior rows", worst_ratio));
}

double max_subspace_angle(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A.transpose() * B);
  return std::acos(std::min(1.0, svd.singularValues().minCoeff()));
}

void small_problem_checks(MarkovChecks& markov) {
  ExperimentConfig cfg = load("lorenz63.yaml");
  cfg.trajectory.samples = 200;
  cfg.modes = 20;
  const Dataset ds = make_dataset(cfg, false);
  const Eigen::Index n = ds.data.rows();
  const SparseDistances d = pairwise_knn(ds.data, n);
  const BandwidthModel bw = fit_bandwidth(d);
  const KernelFactor kf = bistochastic_normalize(vb_kernel(d, bw));
  markov.add("L63 N=200 dense", markov_defect(kf), kMarkovDenseTol);

  EigenbasisOptions eo;
  eo.backend = SvdBackend::lanczos;
  const EigenBasis basis = eigenbasis(kf, 20, eo);
  const Eigen::MatrixXd Kt(kf.normalized);
  const Eigen::MatrixXd G = Kt * Kt.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
  const Eigen::VectorXd ev = es.eigenvalues().reverse().head(20);
  const Eigen::MatrixXd evec = es.eigenvectors().rowwise().reverse().leftCols(20);
  const double eig_err = (basis.lambda - ev).cwiseAbs().maxCoeff();
  const double angle = max_subspace_angle(basis.phi, evec);

  const RkhsScaling sc = rkhs_scaling(basis.lambda, kTau);
  const GeneratorSpectrum sp = generator_spectrum(basis, sc, fd_matrix(n, cfg.trajectory.dt));
  const Eigen::VectorXd f = ds.features.col(0);
  const Eigen::VectorXd c = project_observable(f, basis, 20);
  const ForecastModel model = make_forecast_model(c, 20, basis, sc, sp);
  const Eigen::MatrixXd psi_tau = scaled_basis_values(training_basis_values(basis), basis, sc);
  const Eigen::MatrixXcd Z = eigenfunction_eval(psi_tau, sp.xi);
  Eigen::VectorXd b(20);
  for (int j = 0; j < 20; ++j) b[j] = c[j] * std::sqrt(basis.lambda[j] / sc.lambda_tau[j]);
  double pred_err = 0.0;
  for (double t : {0.1, 0.5, 1.0, 2.0, 5.0}) {
    const Eigen::VectorXd oracle = psi_tau * ((t * sp.W).exp() * b);
    pred_err = std::max(pred_err, (predict(model, Z, t) - oracle).cwiseAbs().maxCoeff());
  }
  report("dense_oracle", eig_err <= kOracleEigTol && angle <= kOracleAngleTol && pred_err <= kOraclePredictTol,
         fmt::format("N=200 L=20: eigenvalue err {:.2e} (tol {:.0e}), subspace angle {:.2e} (tol {:.0e}), "
                     "predict vs expm {:.2e} (tol {:.0e})",
                     eig_err, kOracleEigTol, angle, kOracleAngleTol, pred_err, kOraclePredictTol));

  const Eigen::MatrixXd psi = nystrom_eval(ds.data, ds.data, basis, bw, n);
  const Eigen::MatrixXd ref = training_basis_values(basis);
  double worst = 0.0;
  for (Eigen::Index j = 0; j < basis.rank(); ++j)
    worst = std::max(worst, (psi.col(j) - ref.col(j)).cwiseAbs().maxCoeff() / ref.col(j).cwiseAbs().maxCoeff());
  report("nystrom_consistency", worst <= kNystromRelTol,
         fmt::format("in-sample max relative inf-norm error {:.2e} over {} modes (tol {:.0e}, k_nn = N = {})", worst,
                     basis.rank(), kNystromRelTol, n));
}

void dense_markov_torus(MarkovChecks& markov) {
  ExperimentConfig cfg = load("torus.yaml");
  cfg.trajectory.samples = 2000;
  const Dataset ds = make_dataset(cfg, false);
  const SparseDistances d = pairwise_knn(ds.data, ds.data.rows());
  const KernelFactor kf = bistochastic_normalize(vb_kernel(d, fit_bandwidth(d)));
  markov.add("torus N=2000 dense", markov_defect(kf), kMarkovDenseTol);
}

struct TorusResult {
  std::vector<double> freqs;  // positive, by energy, L = 100
  std::vector<double> lead_times;
  Eigen::VectorXd eps;
};

TorusResult torus_run(const std::string& config, const std::string& label, MarkovChecks& markov,
                      SpectrumChecks& spectra) {
  ExperimentConfig cfg = load(config);
  RunRecord rec;
  FitArtifact fit = fit_model(cfg, rec);
  markov.add(label + " N=16000 k=" + std::to_string(fit.knn), fit.markov_defect, kMarkovSparseTol);

  TorusResult out;
  {
    FitArtifact f100 = fit;
    f100.basis = fit.basis.truncated(100);
    const GeneratorSpectrum sp = spectrum_at(f100, cfg, kTau);
    check_spectrum(label + " L=100", sp, spectra);
    out.freqs = positive_by_energy(sp);
  }
  cfg.observables = {Observable::parse("F1")};
  cfg.forecast_tau = kTau;
  cfg.l_prime = 300;
  const auto summaries = run_forecasts(fit, cfg, rec, false);
  out.lead_times = summaries.at(0).lead_times;
  out.eps = summaries.at(0).epsilon;
  return out;
}

bool frequencies_match(const std::vector<double>& found, std::string& detail) {
  const std::vector<double> targets{1.0, std::sqrt(30.0), 2.0 + std::sqrt(30.0)};
  if (found.size() < 3) {
    detail = "fewer than three nonzero frequencies";
    return false;
  }
  std::vector<double> lowest(found.begin(), found.begin() + 3);
  std::sort(lowest.begin(), lowest.end());
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) worst = std::max(worst, std::abs(lowest[k] - targets[k]) / targets[k]);
  detail = fmt::format("three lowest-energy positive frequencies {{{}}} vs {{1, 5.4772, 7.4772}}, max rel err {:.3f} "
                       "(tol {:.2f})",
                       join(lowest, 3), worst, kTorusFreqRelTol);
  return worst <= kTorusFreqRelTol;
}

// Rank (among positive modes) at which each target is first matched within tolerance, or -1.
std::vector<int> target_ranks(const std::vector<double>& found) {
  const std::vector<double> targets{1.0, std::sqrt(30.0), 2.0 + std::sqrt(30.0)};
  std::vector<int> ranks;
  for (double t : targets) {
    int r = -1;
    for (std::size_t i = 0; i < found.size(); ++i)
      if (std::abs(found[i] - t) <= kTorusFreqRelTol * t) {
        r = static_cast<int>(i) + 1;
        break;
      }
    ranks.push_back(r);
  }
  return ranks;
}

bool forecast_ok(const TorusResult& r, std::string& detail) {
  std::vector<double> t;
  std::vector<double> e;
  for (std::size_t k = 0; k < r.lead_times.size(); ++k) {
    t.push_back(r.lead_times[k]);
    e.push_back(r.eps[static_cast<Eigen::Index>(k)]);
    if (r.lead_times[k] >= kTorusForecastHorizon) break;
  }
  const Eigen::VectorXd ev = Eigen::Map<const Eigen::VectorXd>(e.data(), static_cast<Eigen::Index>(e.size()));
  const double emax = ev.maxCoeff();
  const double r2 = linear_r2(t, ev);
  detail = fmt::format("max eps on [0, {:.4g}] = {:.4f} (tol {:.2f}), eps(end) = {:.4f}, linear fit R^2 = {:.3f} "
                       "(min {:.2f})",
                       t.back(), emax, kTorusForecastMaxEps, e.back(), r2, kLinearR2Min);
  return t.back() >= kTorusForecastHorizon && emax <= kTorusForecastMaxEps && r2 >= kLinearR2Min;
}

double eps_at(const ForecastSummary& s, double t) {
  std::size_t best = 0;
  for (std::size_t k = 0; k < s.lead_times.size(); ++k)
    if (std::abs(s.lead_times[k] - t) < std::abs(s.lead_times[best] - t)) best = k;
  return s.epsilon[static_cast<Eigen::Index>(best)];
}

void l63_run(MarkovChecks& markov, SpectrumChecks& spectra) {
  ExperimentConfig cfg = load("lorenz63.yaml");
  RunRecord rec;
  const FitArtifact fit = fit_model(cfg, rec);
  markov.add("L63 N=16000 k=" + std::to_string(fit.knn), fit.markov_defect, kMarkovSparseTol);
  check_spectrum("L63 L=300", spectrum_at(fit, cfg, kTau), spectra);
  cfg.forecast_tau = kTau;
  const auto sums = run_forecasts(fit, cfg, rec, false);
  const ForecastSummary& f1 = sums.at(0);
  const ForecastSummary& f3 = sums.at(2);

  // Running mean over the window, then non-decreasing on [0, horizon].
  std::vector<double> early;
  for (std::size_t k = 0; k < f1.lead_times.size(); ++k)
    if (f1.lead_times[k] <= kL63MonotoneHorizon + 1e-9) early.push_back(f1.epsilon[static_cast<Eigen::Index>(k)]);
  std::vector<double> smooth;
  for (std::size_t k = 0; k + kL63SmoothingWindow <= early.size(); ++k) {
    double s = 0.0;
    for (int i = 0; i < kL63SmoothingWindow; ++i) s += early[k + i];
    smooth.push_back(s / kL63SmoothingWindow);
  }
  bool monotone = smooth.size() >= 2 && early.back() > early.front();
  for (std::size_t k = 1; k < smooth.size(); ++k) monotone = monotone && smooth[k] >= smooth[k - 1];

  double plo = INFINITY, phi = -INFINITY;
  for (std::size_t k = 0; k < f1.lead_times.size(); ++k)
    if (f1.lead_times[k] >= kL63PlateauFrom - 1e-9 && f1.lead_times[k] <= kL63PlateauTo + 1e-9) {
      plo = std::min(plo, f1.epsilon[static_cast<Eigen::Index>(k)]);
      phi = std::max(phi, f1.epsilon[static_cast<Eigen::Index>(k)]);
    }
  const bool plateau = plo >= kL63PlateauLo && phi <= kL63PlateauHi;
  const double e1 = eps_at(f1, kL63CompareTime), e3 = eps_at(f3, kL63CompareTime);
  report("l63_forecast_behavior", monotone && plateau && e3 < e1,
         fmt::format("F1 smoothed eps non-decreasing on [0, {:.3g}]: {} (eps {:.3f} -> {:.3f}); F1 eps on [{:.3g}, "
                     "{:.3g}] in [{:.3f}, {:.3f}] (band [{}, {}]); eps(t={:.3g}) F3 {:.3f} < F1 {:.3f}: {}",
                     kL63MonotoneHorizon, monotone ? "yes" : "no", early.front(), early.back(), kL63PlateauFrom,
                     kL63PlateauTo, plo, phi, kL63PlateauLo, kL63PlateauHi, kL63CompareTime, e3, e1,
                     e3 < e1 ? "yes" : "no"));
}

void rossler_run(MarkovChecks& markov, SpectrumChecks& spectra) {
  ExperimentConfig cfg = load("rossler.yaml");
  RunRecord rec;
  const FitArtifact fit = fit_model(cfg, rec);
  markov.add("Rossler N=16000 k=" + std::to_string(fit.knn), fit.markov_defect, kMarkovSparseTol);
  const GeneratorSpectrum sp = spectrum_at(fit, cfg, kTau);
  check_spectrum("Rossler L=300", sp, spectra);
  const std::vector<double> pos = positive_by_energy(sp);
  const std::size_t m = std::min<std::size_t>(kRosslerCandidateModes, pos.size());
  const double base = pos.empty() ? NAN : pos[0];
  bool ok = std::abs(base - 1.0) <= kRosslerBaseTol;
  std::string found;
  for (int k = 2; k <= 3; ++k) {
    double best = INFINITY;
    for (std::size_t i = 0; i < m; ++i) best = std::min(best, std::abs(pos[i] - k * base) / (k * base));
    ok = ok && best <= kRosslerHarmonicRelTol;
    found += fmt::format(", {}x base rel err {:.4f}", k, best);
  }
  report("rossler_harmonics", ok,
         fmt::format("base = lowest-energy positive frequency {:.4f} (|base-1| tol {:.1f}){} among the {} lowest-energy "
                     "positive modes (tol {:.2f}); leading: {}",
                     base, kRosslerBaseTol, found, m, kRosslerHarmonicRelTol, join(pos, 6)));
}

}  // namespace

int main() {
  log()->set_level(spdlog::level::warn);
  configure_threads();

  semigroup_law();
  finite_difference_accuracy();

  MarkovChecks markov;
  SpectrumChecks spectra;
  small_problem_checks(markov);
  dense_markov_torus(markov);

  {
    const TorusResult printed = torus_run("torus.yaml", "torus(printed)", markov, spectra);
    std::string d;
    const bool fm = frequencies_match(printed.freqs, d);
    report("torus_eigenfrequencies", fm, "configs/torus.yaml: " + d);
    const bool fo = forecast_ok(printed, d);
    report("torus_forecast_F1", fo, "configs/torus.yaml: " + d);
    info("torus(printed) leading positive frequencies: " + join(printed.freqs, 10));
  }
  {
    const TorusResult standard = torus_run("torus_standard.yaml", "torus(standard)", markov, spectra);
    std::string d;
    const bool fm = frequencies_match(standard.freqs, d);
    info(fmt::format("configs/torus_standard.yaml frequencies [{}]: {}", fm ? "pass" : "fail", d));
    const std::vector<int> r = target_ranks(standard.freqs);
    info(fmt::format("configs/torus_standard.yaml positive-mode ranks of 1, 5.477, 7.477 within {:.0f}%: {}, {}, {}; "
                     "leading: {}",
                     100 * kTorusFreqRelTol, r[0], r[1], r[2], join(standard.freqs, 10)));
    const bool fo = forecast_ok(standard, d);
    info(fmt::format("configs/torus_standard.yaml forecast F1 [{}]: {}", fo ? "pass" : "fail", d));
  }
  l63_run(markov, spectra);
  rossler_run(markov, spectra);

  report("markov_property", markov.ok,
         fmt::format("|G 1 - 1|_inf (tol {:.0e} sparse, {:.0e} dense): {}", kMarkovSparseTol, kMarkovDenseTol,
                     joined(markov.notes)));
  report("skew_adjointness", spectra.ok,
         fmt::format("post-symmetrization and spectrum symmetry (tol {:.0e}), one omega=0 mode with energy <= {:.0e}: {}",
                     kSymmetryTol, kConstantDirichletTol, joined(spectra.notes)));

  fmt::print("{} of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
