#pragma once

#include "rkhs/kernel.hpp"
#include "rkhs/lanczos.hpp"

#include <Eigen/Dense>

namespace rkhs {

/// Data-driven orthonormal basis of L^2 on the samples: eigenpairs of G = K~ K~^T from
/// the singular value decomposition of the normalized kernel.
struct EigenBasis {
  Eigen::VectorXd lambda;  // descending, lambda_j = sigma_j^2
  Eigen::MatrixXd phi;     // N x L left singular vectors, unit 2-norm
  Eigen::MatrixXd gamma;   // N x L right singular vectors, unit 2-norm
  Eigen::VectorXd q;       // degree vector carried from the kernel factor

  Eigen::Index rank() const { return lambda.size(); }
  Eigen::Index samples() const { return phi.rows(); }

  /// Leading `l` modes.
  EigenBasis truncated(Eigen::Index l) const;
};

enum class SvdBackend {
  automatic,  // dense when N <= 2000 and 2L + 64 >= N, Lanczos otherwise
  lanczos,
  dense,
};

struct EigenbasisOptions {
  SvdBackend backend = SvdBackend::automatic;
  LanczosOptions lanczos;
  /// Modes with lambda_j < truncation_ratio * lambda_0 are dropped with a warning.
  double truncation_ratio = 1e-12;
};

/// Leading L singular triplets of kf.normalized. Sign convention: the first entry of each
/// phi column with magnitude above 1e-12 * max is positive. Throws std::runtime_error on
/// rank deficiency (lambda_{L-1} <= machine epsilon * lambda_0).
EigenBasis eigenbasis(const KernelFactor& kf, Eigen::Index L, const EigenbasisOptions& opts = {});

/// lambda_tau_j = exp(tau (1 - 1/lambda_j)).
struct RkhsScaling {
  double tau = 0.0;
  Eigen::VectorXd lambda_tau;
};

RkhsScaling rkhs_scaling(const Eigen::VectorXd& lambda, double tau);

/// Values of the basis functions psi_j (N^ x L) at out-of-sample points of data space.
/// Densities at the query points come from the training density estimator.
Eigen::MatrixXd nystrom_eval(const Eigen::MatrixXd& query_points, const Eigen::MatrixXd& training_points,
                             const EigenBasis& basis, const BandwidthModel& bw, Eigen::Index knn);

/// Same as above from a precomputed query neighbour table.
Eigen::MatrixXd nystrom_eval(const SparseDistances& query_dists, const EigenBasis& basis,
                             const BandwidthModel& bw);

/// psi_j on the training samples, i.e. sqrt(lambda_j) phi_j.
Eigen::MatrixXd training_basis_values(const EigenBasis& basis);

}  // namespace rkhs
