#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

namespace rkhs {

/// y = A x for a symmetric operator A.
using SymmetricOperator = std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& y)>;

struct LanczosOptions {
  /// Krylov subspace size; 0 picks min(n, max(2 nev + 20, nev + 64)).
  Eigen::Index krylov_dim = 0;
  int max_restarts = 1000;
  /// A Ritz pair is accepted when ||A y - theta y|| <= tol * |theta_max|.
  double tol = 1e-12;
  std::uint64_t seed = 0x5eed;
};

struct LanczosResult {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // orthonormal columns
  int restarts = 0;
  long long matvecs = 0;
  bool converged = false;
  double max_residual = 0.0;
};

/// Largest `nev` eigenpairs of a symmetric operator by thick-restart Lanczos with full
/// reorthogonalization.
LanczosResult largest_eigenpairs(const SymmetricOperator& op, Eigen::Index n, Eigen::Index nev,
                                 const LanczosOptions& opts = {});

}  // namespace rkhs
