#include "rkhs/generator.hpp"

#include "rkhs/log.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <stdexcept>
#include <string>

namespace rkhs {

FiniteDifferenceOp fd_matrix(Eigen::Index n, double dt) {
  if (n < 3) throw std::invalid_argument("fd_matrix: need at least 3 samples (got " + std::to_string(n) + ")");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("fd_matrix: dt must be positive");
  // Central stencil on interior rows, zero first and last rows; V = (Vt - Vt^T) / 2.
  auto stencil = [n, dt](Eigen::Index i, Eigen::Index j) {
    if (i == 0 || i == n - 1) return 0.0;
    if (j == i + 1) return 0.5 / dt;
    if (j == i - 1) return -0.5 / dt;
    return 0.0;
  };
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(2 * n);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double v = 0.5 * (stencil(i, i + 1) - stencil(i + 1, i));
    trip.emplace_back(i, i + 1, v);
    trip.emplace_back(i + 1, i, -v);
  }
  FiniteDifferenceOp fd;
  fd.n = n;
  fd.dt = dt;
  fd.V.resize(n, n);
  fd.V.setFromTriplets(trip.begin(), trip.end());
  return fd;
}

Eigen::MatrixXd generator_matrix(const EigenBasis& basis, const RkhsScaling& scaling,
                                 const FiniteDifferenceOp& fd, const GeneratorOptions& opts) {
  const Eigen::Index L = basis.rank();
  if (fd.n != basis.samples())
    throw std::invalid_argument("generator_matrix: finite-difference size " + std::to_string(fd.n) +
                                " does not match " + std::to_string(basis.samples()) + " samples");
  if (scaling.lambda_tau.size() != L) throw std::invalid_argument("generator_matrix: scaling size mismatch");

  const Eigen::MatrixXd Vphi = fd.V * basis.phi;
  Eigen::MatrixXd W = basis.phi.transpose() * Vphi;
  const Eigen::VectorXd s = scaling.lambda_tau.cwiseSqrt();
  W = s.asDiagonal() * W * s.asDiagonal();

  const double wmax = W.cwiseAbs().maxCoeff();
  const double asym = (W + W.transpose()).cwiseAbs().maxCoeff();
  log()->debug("generator_matrix: L={} tau={:.3e} ||W||_max={:.3e} asymmetry={:.3e}", L, scaling.tau, wmax,
               asym);
  // Relative to the norm bound 1/dt of V so that roundoff-level W (tiny L or huge tau) passes.
  const double scale = std::max(wmax, 1.0 / fd.dt);
  if (asym > opts.asymmetry_tol * scale)
    throw std::runtime_error("generator_matrix: assembled matrix is not skew-symmetric (relative asymmetry " +
                             std::to_string(asym / scale) + ")");
  W = 0.5 * (W - W.transpose()).eval();
  if (opts.decouple_constant_mode) {
    W.row(0).setZero();
    W.col(0).setZero();
  }
  return W;
}

SkewEigen eig_skew(const Eigen::MatrixXd& W) {
  if (W.rows() != W.cols()) throw std::invalid_argument("eig_skew: matrix must be square");
  const Eigen::Index L = W.rows();
  SkewEigen out;
  if (L == 0) return out;
  const Eigen::MatrixXcd H = std::complex<double>(0.0, 1.0) * W.cast<std::complex<double>>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  if (es.info() != Eigen::Success) throw std::runtime_error("eig_skew: Hermitian eigensolver failed");
  // (iW) xi = mu xi  =>  W xi = -i mu xi, so omega = -mu; reverse to keep omega ascending.
  out.omega = -es.eigenvalues().reverse();
  out.xi = es.eigenvectors().rowwise().reverse();
  for (Eigen::Index j = 0; j < L; ++j) {
    auto col = out.xi.col(j);
    Eigen::Index imax = 0;
    col.cwiseAbs().maxCoeff(&imax);
    const std::complex<double> z = col[imax];
    if (std::abs(z) > 0.0) col *= std::conj(z) / std::abs(z);
    col[imax] = std::abs(col[imax]);
  }
  return out;
}

Eigen::VectorXd dirichlet_energy(const Eigen::MatrixXcd& xi, const Eigen::VectorXd& lambda,
                                 const Eigen::VectorXd& lambda_tau, const Eigen::VectorXd& omega,
                                 double dt) {
  const Eigen::Index L = xi.rows();
  if (lambda.size() != L || lambda_tau.size() != L || omega.size() != xi.cols())
    throw std::invalid_argument("dirichlet_energy: dimension mismatch");
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd out(xi.cols());
  for (Eigen::Index j = 0; j < xi.cols(); ++j) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index k = 0; k < L; ++k) {
      const double w = std::norm(xi(k, j)) * lambda_tau[k];
      num += w / lambda[k];
      den += w;
    }
    const double x = omega[j] * dt * omega[j] * dt;
    if (!(den > 0.0) || x > 1.0 - 1e-9) {
      out[j] = inf;
      continue;
    }
    out[j] = std::max(0.0, num / den - 1.0) / (1.0 - x);
  }
  return out;
}

double raw_dirichlet_energy(const Eigen::VectorXcd& c, const Eigen::VectorXd& lambda) {
  if (c.size() > lambda.size()) throw std::invalid_argument("raw_dirichlet_energy: too many coefficients");
  double num = 0.0, den = 0.0;
  for (Eigen::Index j = 0; j < c.size(); ++j) {
    num += std::norm(c[j]) / lambda[j];
    den += std::norm(c[j]);
  }
  if (!(den > 0.0)) throw std::invalid_argument("raw_dirichlet_energy: zero function");
  return num / den - 1.0;
}

GeneratorSpectrum generator_spectrum(const EigenBasis& basis, const RkhsScaling& scaling,
                                     const FiniteDifferenceOp& fd, const GeneratorOptions& opts) {
  GeneratorSpectrum sp;
  sp.tau = scaling.tau;
  sp.dt = fd.dt;
  sp.W = generator_matrix(basis, scaling, fd, opts);
  const Eigen::Index L = sp.W.rows();

  if (opts.decouple_constant_mode) {
    sp.omega.resize(L);
    sp.xi = Eigen::MatrixXcd::Zero(L, L);
    sp.omega[0] = 0.0;
    sp.xi(0, 0) = 1.0;
    if (L > 1) {
      SkewEigen block = eig_skew(sp.W.bottomRightCorner(L - 1, L - 1));
      sp.omega.tail(L - 1) = block.omega;
      sp.xi.bottomRightCorner(L - 1, L - 1) = block.xi;
    }
    sp.constant_mode = 0;
  } else {
    SkewEigen e = eig_skew(sp.W);
    sp.omega = std::move(e.omega);
    sp.xi = std::move(e.xi);
    const double zero_tol = 1e-10 / fd.dt;
    double best = -1.0;
    for (Eigen::Index j = 0; j < L; ++j) {
      if (std::abs(sp.omega[j]) < zero_tol && std::abs(sp.xi(0, j)) > best) {
        best = std::abs(sp.xi(0, j));
        sp.constant_mode = j;
      }
    }
    if (sp.constant_mode < 0) {
      sp.xi.row(0).cwiseAbs().maxCoeff(&sp.constant_mode);
      log()->warn("generator_spectrum: no exact zero frequency; constant mode taken as index {} (omega={:.3e})",
                  sp.constant_mode, sp.omega[sp.constant_mode]);
    }
  }

  sp.dirichlet = dirichlet_energy(sp.xi, basis.lambda, scaling.lambda_tau, sp.omega, fd.dt);
  sp.ordering.resize(L);
  std::iota(sp.ordering.begin(), sp.ordering.end(), Eigen::Index{0});
  const Eigen::Index c0 = sp.constant_mode;
  // Conjugate pairs carry equal energies up to roundoff; compare on a 36-bit mantissa so
  // the frequency tie-break applies to them.
  Eigen::VectorXd key(L);
  for (Eigen::Index j = 0; j < L; ++j) {
    int e = 0;
    const double m = std::frexp(sp.dirichlet[j], &e);
    key[j] = std::isfinite(sp.dirichlet[j]) ? std::ldexp(std::round(std::ldexp(m, 36)), e - 36) : sp.dirichlet[j];
  }
  std::stable_sort(sp.ordering.begin(), sp.ordering.end(), [&sp, &key, c0](Eigen::Index a, Eigen::Index b) {
    if ((a == c0) != (b == c0)) return a == c0;
    if (key[a] != key[b]) return key[a] < key[b];
    return sp.omega[a] > sp.omega[b];
  });
  const double nyq = sp.omega.cwiseAbs().maxCoeff() * fd.dt;
  if (nyq > 1.0) log()->warn("generator_spectrum: max |omega| dt = {:.6f} exceeds 1", nyq);
  return sp;
}

Eigen::MatrixXd scaled_basis_values(const Eigen::MatrixXd& psi, const EigenBasis& basis,
                                    const RkhsScaling& scaling) {
  if (psi.cols() != basis.rank() || scaling.lambda_tau.size() != basis.rank())
    throw std::invalid_argument("scaled_basis_values: dimension mismatch");
  const Eigen::VectorXd f = (scaling.lambda_tau.array() / basis.lambda.array()).sqrt().matrix();
  return psi * f.asDiagonal();
}

Eigen::MatrixXcd eigenfunction_eval(const Eigen::MatrixXd& psi_tau, const Eigen::MatrixXcd& xi) {
  if (psi_tau.cols() != xi.rows()) throw std::invalid_argument("eigenfunction_eval: dimension mismatch");
  Eigen::MatrixXcd z(psi_tau.rows(), xi.cols());
  z.real() = psi_tau * xi.real();
  z.imag() = psi_tau * xi.imag();
  return z;
}

}  // namespace rkhs
