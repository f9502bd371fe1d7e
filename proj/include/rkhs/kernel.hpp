#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <vector>

namespace rkhs {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Fixed-width k-nearest-neighbour table. Row i lists `k` column indices and squared
/// distances sorted ascending by (distance, index). For a training table (queries ==
/// data) the row's own index always comes first with distance 0.
struct SparseDistances {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index k = 0;
  std::vector<std::int32_t> index;  // rows * k
  std::vector<double> dist2;        // rows * k

  std::int32_t neighbor(Eigen::Index i, Eigen::Index slot) const { return index[i * k + slot]; }
  double d2(Eigen::Index i, Eigen::Index slot) const { return dist2[i * k + slot]; }
};

/// Kernel bandwidth parameters and the per-sample bandwidth function.
struct BandwidthModel {
  double epsilon = 0.0;          // main kernel bandwidth, squared-distance units
  double density_epsilon = 0.0;  // bandwidth of the density estimate
  double dimension = 0.0;        // intrinsic dimension estimate
  Eigen::VectorXd density;       // rho at the training samples
  Eigen::VectorXd sigma;         // rho^(-1/dimension)
};

/// Normalized kernel and its degree vectors.
struct KernelFactor {
  SparseMatrix normalized;  // D^{-1} K Q^{-1/2}
  Eigen::VectorXd q;
  Eigen::VectorXd d;
};

/// Result of the log-log slope maximization over an epsilon grid.
struct BandwidthEstimate {
  double epsilon = 0.0;
  double dimension = 0.0;  // twice the maximal slope
  std::vector<double> grid;
  std::vector<double> log_sum;  // log T(eps) on the grid
};

/// Default neighbour count: min(N, max(500, ceil(0.08 N))).
Eigen::Index default_knn(Eigen::Index n);

/// Exact brute-force kNN of every row of `points` against itself. The own index is
/// always retained; other ties are broken by the lower index.
SparseDistances pairwise_knn(const Eigen::MatrixXd& points, Eigen::Index k);

/// Exact brute-force kNN of `queries` against `data` (no self handling).
SparseDistances query_knn(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& data,
                          Eigen::Index k);

/// Kernel density estimate over the retained neighbours of each row; the 1/N factor
/// uses the number of data points (dists.cols).
Eigen::VectorXd density_estimate(const SparseDistances& dists, double density_epsilon,
                                 double dimension);

struct AutotuneOptions {
  int grid_points = 100;
  double grid_lo = 1e-4;  // relative to median squared distance
  double grid_hi = 1e4;
  /// Rows used to evaluate T(eps); rows are taken with a fixed stride. 0 = all rows.
  Eigen::Index max_rows = 4000;
};

/// Picks the bandwidth maximizing d log T / d log eps, T(eps) = mean_ij exp(-d2_ij / eps).
/// `scale`, when non-empty, divides each d2_ij by scale_i * scale_j first.
/// Throws std::invalid_argument on degenerate geometry (all points coincident or all
/// pairwise distances equal).
BandwidthEstimate autotune_bandwidth(const SparseDistances& dists,
                                     const Eigen::VectorXd& scale = {},
                                     const AutotuneOptions& opts = {});

struct BandwidthOverrides {
  double epsilon = 0.0;  // <= 0 means autotune
  double density_epsilon = 0.0;
  double dimension = 0.0;
};

/// Full bandwidth model: density bandwidth and dimension first on raw distances, then
/// the main bandwidth on sigma-scaled distances.
BandwidthModel fit_bandwidth(const SparseDistances& dists, const BandwidthOverrides& overrides = {},
                             const AutotuneOptions& opts = {});

/// Variable-bandwidth Gaussian kernel K_ij = exp(-d2_ij / (eps sigma_i sigma_j)) / N on the
/// union of the kNN pattern and its transpose. Entries below 1e-300 are dropped.
SparseMatrix vb_kernel(const SparseDistances& dists, const BandwidthModel& bw);

/// d = K 1, q = K D^{-1} 1, normalized = D^{-1} K Q^{-1/2}. Throws std::runtime_error
/// naming the first sample with zero row sum.
KernelFactor bistochastic_normalize(const SparseMatrix& K);

/// Max-norm deviation of (normalized * normalized^T) 1 from 1.
double markov_defect(const KernelFactor& kf);

}  // namespace rkhs
