#include "rkhs/basis.hpp"

#include "rkhs/log.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace rkhs {

namespace {

void fix_signs(EigenBasis& b) {
  for (Eigen::Index j = 0; j < b.phi.cols(); ++j) {
    const double cutoff = 1e-12 * b.phi.col(j).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < b.phi.rows(); ++i) {
      const double v = b.phi(i, j);
      if (std::abs(v) > cutoff) {
        if (v < 0.0) {
          b.phi.col(j) *= -1.0;
          b.gamma.col(j) *= -1.0;
        }
        break;
      }
    }
  }
}

bool use_dense(const EigenbasisOptions& opts, Eigen::Index n, Eigen::Index L) {
  switch (opts.backend) {
    case SvdBackend::dense: return true;
    case SvdBackend::lanczos: return false;
    case SvdBackend::automatic: break;
  }
  return n <= 2000 && 2 * L + 64 >= n;
}

}  // namespace

EigenBasis EigenBasis::truncated(Eigen::Index l) const {
  if (l < 1 || l > rank()) throw std::invalid_argument("EigenBasis::truncated: rank out of range");
  EigenBasis out;
  out.lambda = lambda.head(l);
  out.phi = phi.leftCols(l);
  out.gamma = gamma.leftCols(l);
  out.q = q;
  return out;
}

EigenBasis eigenbasis(const KernelFactor& kf, Eigen::Index L, const EigenbasisOptions& opts) {
  const SparseMatrix& Kt = kf.normalized;
  const Eigen::Index n = Kt.rows();
  if (L < 1 || L > n)
    throw std::invalid_argument("eigenbasis: L must satisfy 1 <= L <= N (got L=" + std::to_string(L) +
                                ", N=" + std::to_string(n) + ")");

  EigenBasis b;
  b.q = kf.q;
  if (use_dense(opts, n, L)) {
    const Eigen::MatrixXd dense = Eigen::MatrixXd(Kt);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw std::runtime_error("eigenbasis: dense SVD failed");
    b.lambda = svd.singularValues().head(L).array().square().matrix();
    b.phi = svd.matrixU().leftCols(L);
    b.gamma = svd.matrixV().leftCols(L);
  } else {
    Eigen::VectorXd tmp(n);
    SymmetricOperator op = [&Kt, &tmp](const Eigen::VectorXd& x, Eigen::VectorXd& y) {
      tmp.noalias() = Kt.transpose() * x;
      y.noalias() = Kt * tmp;
    };
    auto res = largest_eigenpairs(op, n, L, opts.lanczos);
    if (!res.converged)
      throw std::runtime_error("eigenbasis: Lanczos iteration did not converge (max residual " +
                               std::to_string(res.max_residual) + ")");
    log()->debug("eigenbasis: lanczos converged after {} restarts, {} operator applications",
                 res.restarts, res.matvecs);
    b.lambda = res.values.cwiseMax(0.0);
    b.phi = std::move(res.vectors);
    b.gamma = Kt.transpose() * b.phi;
    for (Eigen::Index j = 0; j < L; ++j) {
      const double nrm = b.gamma.col(j).norm();
      if (nrm > 0.0) b.gamma.col(j) /= nrm;
    }
  }

  if (!b.lambda.allFinite() || !b.phi.allFinite())
    throw std::runtime_error("eigenbasis: non-finite singular triplets");
  const double lambda0 = b.lambda[0];
  if (b.lambda[L - 1] <= std::numeric_limits<double>::epsilon() * lambda0)
    throw std::runtime_error("eigenbasis: rank deficient kernel, lambda_" + std::to_string(L - 1) +
                             " = " + std::to_string(b.lambda[L - 1]) + " relative to lambda_0 = " +
                             std::to_string(lambda0));
  Eigen::Index keep = L;
  while (keep > 1 && b.lambda[keep - 1] < opts.truncation_ratio * lambda0) --keep;
  if (keep < L) {
    log()->warn("eigenbasis: dropping {} modes with lambda below {:.1e} * lambda_0", L - keep,
                opts.truncation_ratio);
    b = b.truncated(keep);
  }
  fix_signs(b);
  return b;
}

RkhsScaling rkhs_scaling(const Eigen::VectorXd& lambda, double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("rkhs_scaling: tau must be > 0");
  RkhsScaling s;
  s.tau = tau;
  s.lambda_tau.resize(lambda.size());
  for (Eigen::Index j = 0; j < lambda.size(); ++j) {
    if (!(lambda[j] > 0.0))
      throw std::invalid_argument("rkhs_scaling: eigenvalue " + std::to_string(j) + " is not positive");
    s.lambda_tau[j] = std::exp(tau * (1.0 - 1.0 / lambda[j]));
  }
  return s;
}

Eigen::MatrixXd nystrom_eval(const SparseDistances& qd, const EigenBasis& basis,
                             const BandwidthModel& bw) {
  const Eigen::Index n = basis.samples();
  if (qd.cols != n) throw std::invalid_argument("nystrom_eval: neighbour table does not match the basis");
  if (bw.sigma.size() != n) throw std::invalid_argument("nystrom_eval: bandwidth model does not match the basis");

  const Eigen::VectorXd rho = density_estimate(qd, bw.density_epsilon, bw.dimension);
  const Eigen::VectorXd inv_sqrt_q = basis.q.cwiseSqrt().cwiseInverse();
  const Eigen::Index L = basis.rank();
  Eigen::MatrixXd psi(qd.rows, L);
  const double inv_n = 1.0 / static_cast<double>(n);

  bool too_far = false;
  Eigen::Index far_row = -1;
#pragma omp parallel
  {
    Eigen::VectorXd weights(qd.k);
    Eigen::RowVectorXd acc(L);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < qd.rows; ++i) {
      const double sigma_i = std::pow(rho[i], -1.0 / bw.dimension);
      double degree = 0.0;
      for (Eigen::Index s = 0; s < qd.k; ++s) {
        const auto j = qd.neighbor(i, s);
        weights[s] = std::exp(-qd.d2(i, s) / (bw.epsilon * sigma_i * bw.sigma[j])) * inv_n;
        degree += weights[s];
      }
      if (!(degree > 0.0) || !std::isfinite(sigma_i)) {
#pragma omp critical
        {
          too_far = true;
          if (far_row < 0 || i < far_row) far_row = i;
        }
        psi.row(i).setZero();
        continue;
      }
      acc.setZero();
      for (Eigen::Index s = 0; s < qd.k; ++s) {
        const auto j = qd.neighbor(i, s);
        acc.noalias() += (weights[s] / degree * inv_sqrt_q[j]) * basis.gamma.row(j);
      }
      psi.row(i) = acc;
    }
  }
  if (too_far)
    throw std::runtime_error("nystrom_eval: query point " + std::to_string(far_row) +
                             " has zero kernel row sum (too far from the training data)");
  return psi;
}

Eigen::MatrixXd nystrom_eval(const Eigen::MatrixXd& query_points, const Eigen::MatrixXd& training_points,
                             const EigenBasis& basis, const BandwidthModel& bw, Eigen::Index knn) {
  if (training_points.rows() != basis.samples())
    throw std::invalid_argument("nystrom_eval: training points do not match the basis");
  return nystrom_eval(query_knn(query_points, training_points, std::min(knn, training_points.rows())),
                      basis, bw);
}

Eigen::MatrixXd training_basis_values(const EigenBasis& basis) {
  return basis.phi * basis.lambda.cwiseSqrt().asDiagonal();
}

}  // namespace rkhs
