#pragma once

#include "rkhs/basis.hpp"
#include "rkhs/kernel.hpp"

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace rkhs {

/// Skew-symmetric tridiagonal central-difference matrix, antisymmetrized from the
/// one-sided-free stencil whose first and last rows are zero.
struct FiniteDifferenceOp {
  Eigen::Index n = 0;
  double dt = 0.0;
  SparseMatrix V;
};

/// Interior rows (-1, 0, 1) / (2 dt); the couplings to the first and last sample are
/// halved. Throws std::invalid_argument for n < 3 or dt <= 0.
FiniteDifferenceOp fd_matrix(Eigen::Index n, double dt);

struct GeneratorOptions {
  /// Zero row and column 0 of W so the constant mode is an exact ω = 0 eigenvector.
  /// The boundary rows of V do not annihilate constants, which otherwise couples the
  /// constant mode to the rest at O(1 / (N dt)).
  bool decouple_constant_mode = true;
  /// Pre-symmetrization tolerance on ||W + W^T||_max / max(||W||_max, 1/dt).
  double asymmetry_tol = 1e-10;
};

/// W = Λ_τ^{1/2} Φ^T V Φ Λ_τ^{1/2}, exactly skew-symmetrized. Throws std::runtime_error
/// if the raw asymmetry exceeds opts.asymmetry_tol.
Eigen::MatrixXd generator_matrix(const EigenBasis& basis, const RkhsScaling& scaling,
                                 const FiniteDifferenceOp& fd, const GeneratorOptions& opts = {});

struct SkewEigen {
  Eigen::VectorXd omega;  // ascending
  Eigen::MatrixXcd xi;    // unit columns, W xi_j = i omega_j xi_j
};

/// Eigendecomposition of a real skew-symmetric matrix through the Hermitian matrix iW.
/// Each eigenvector is rotated so its largest-magnitude component is real and positive.
SkewEigen eig_skew(const Eigen::MatrixXd& W);

/// Frequency-adjusted Dirichlet energies of the columns of xi. Returns +inf for modes
/// at or beyond the Nyquist limit ((omega dt)^2 > 1 - 1e-9) or with zero RKHS weight.
Eigen::VectorXd dirichlet_energy(const Eigen::MatrixXcd& xi, const Eigen::VectorXd& lambda,
                                 const Eigen::VectorXd& lambda_tau, const Eigen::VectorXd& omega,
                                 double dt);

/// Plain Dirichlet energy of a function with basis coefficients c:
/// sum |c_j|^2 / lambda_j / sum |c_j|^2 - 1.
double raw_dirichlet_energy(const Eigen::VectorXcd& c, const Eigen::VectorXd& lambda);

struct GeneratorSpectrum {
  double tau = 0.0;
  double dt = 0.0;
  Eigen::MatrixXd W;
  Eigen::VectorXd omega;                // solver order
  Eigen::MatrixXcd xi;
  Eigen::VectorXd dirichlet;
  std::vector<Eigen::Index> ordering;   // ascending Dirichlet energy, constant mode first
  Eigen::Index constant_mode = -1;

  Eigen::Index size() const { return omega.size(); }
  double omega_ranked(Eigen::Index r) const { return omega[ordering[r]]; }
  double dirichlet_ranked(Eigen::Index r) const { return dirichlet[ordering[r]]; }
};

/// Assembles W and computes frequencies, eigenvectors, Dirichlet energies and ranking.
GeneratorSpectrum generator_spectrum(const EigenBasis& basis, const RkhsScaling& scaling,
                                     const FiniteDifferenceOp& fd, const GeneratorOptions& opts = {});

/// Basis values scaled to the τ-RKHS: psi_tau_j = sqrt(lambda_tau_j / lambda_j) psi_j.
Eigen::MatrixXd scaled_basis_values(const Eigen::MatrixXd& psi, const EigenBasis& basis,
                                    const RkhsScaling& scaling);

/// Z = psi_tau * xi: eigenfunction values at the rows of psi_tau.
Eigen::MatrixXcd eigenfunction_eval(const Eigen::MatrixXd& psi_tau, const Eigen::MatrixXcd& xi);

}  // namespace rkhs
