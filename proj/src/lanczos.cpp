#include "rkhs/lanczos.hpp"

#include "rkhs/log.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace rkhs {

namespace {

// Orthogonalizes w against the first `cols` columns of V (two passes of classical
// Gram-Schmidt) and returns the accumulated projection coefficients.
Eigen::VectorXd orthogonalize(const Eigen::MatrixXd& V, Eigen::Index cols, Eigen::VectorXd& w) {
  auto basis = V.leftCols(cols);
  Eigen::VectorXd h = basis.transpose() * w;
  w.noalias() -= basis * h;
  Eigen::VectorXd h2 = basis.transpose() * w;
  w.noalias() -= basis * h2;
  h += h2;
  return h;
}

Eigen::VectorXd random_unit(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v.normalized();
}

}  // namespace

LanczosResult largest_eigenpairs(const SymmetricOperator& op, Eigen::Index n, Eigen::Index nev,
                                 const LanczosOptions& opts) {
  if (nev < 1 || nev > n)
    throw std::invalid_argument("largest_eigenpairs: need 1 <= nev <= n");
  Eigen::Index m = opts.krylov_dim > 0 ? opts.krylov_dim : std::max(2 * nev + 20, nev + 64);
  m = std::min(m, n);
  if (m <= nev && m < n) m = std::min(n, nev + 1);

  std::mt19937_64 rng(opts.seed);
  Eigen::MatrixXd V(n, m + 1);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(m, m);
  V.col(0) = random_unit(n, rng);

  LanczosResult res;
  Eigen::Index kept = 0;
  Eigen::VectorXd w(n);
  Eigen::VectorXd x(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> small;

  for (int restart = 0;; ++restart) {
    double beta = 0.0;
    for (Eigen::Index j = kept; j < m; ++j) {
      x = V.col(j);
      op(x, w);
      ++res.matvecs;
      const Eigen::VectorXd h = orthogonalize(V, j + 1, w);
      H.block(0, j, j + 1, 1) = h;
      H.block(j, 0, 1, j + 1) = h.transpose();
      beta = w.norm();
      const double scale = std::max(std::abs(h[j]), H.topLeftCorner(j + 1, j + 1).diagonal().cwiseAbs().maxCoeff());
      if (beta <= 1e-13 * std::max(scale, 1e-300)) {
        // Invariant subspace: continue with a fresh direction, no coupling.
        beta = 0.0;
        if (j + 1 < n) {
          Eigen::VectorXd r = random_unit(n, rng);
          orthogonalize(V, j + 1, r);
          V.col(j + 1) = r.normalized();
        }
      } else {
        V.col(j + 1) = w / beta;
      }
      if (j + 1 < m) {
        H(j + 1, j) = beta;
        H(j, j + 1) = beta;
      }
    }

    small.compute(H);
    // Descending order of Ritz values.
    Eigen::VectorXd theta = small.eigenvalues().reverse();
    Eigen::MatrixXd Y = small.eigenvectors().rowwise().reverse();
    const double theta_max = std::max(theta.cwiseAbs().maxCoeff(), 1e-300);
    Eigen::VectorXd resid = (beta * Y.row(m - 1).transpose()).cwiseAbs();
    if (m == n) resid.setZero();

    Eigen::Index nconv = 0;
    while (nconv < nev && resid[nconv] <= opts.tol * theta_max) ++nconv;
    res.restarts = restart;
    res.max_residual = resid.head(nev).maxCoeff();

    if (nconv == nev || restart >= opts.max_restarts) {
      res.converged = nconv == nev;
      if (!res.converged)
        log()->warn("lanczos: {} of {} eigenpairs converged after {} restarts (max residual {:.3e})",
                    nconv, nev, restart, res.max_residual);
      res.values = theta.head(nev);
      res.vectors = V.leftCols(m) * Y.leftCols(nev);
      return res;
    }

    // Thick restart: keep the leading Ritz vectors plus the residual direction.
    const Eigen::Index keep = std::min(m - 1, nev + (m - nev) / 2);
    Eigen::MatrixXd ritz = V.leftCols(m) * Y.leftCols(keep);
    V.leftCols(keep) = ritz;
    V.col(keep) = V.col(m);
    H.setZero();
    for (Eigen::Index i = 0; i < keep; ++i) {
      H(i, i) = theta[i];
      H(keep, i) = beta * Y(m - 1, i);
      H(i, keep) = H(keep, i);
    }
    kept = keep;
    log()->debug("lanczos restart {}: {} / {} converged, max residual {:.3e}", restart, nconv, nev,
                 res.max_residual);
  }
}

}  // namespace rkhs
