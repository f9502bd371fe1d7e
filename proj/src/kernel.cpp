#include "rkhs/kernel.hpp"

#include "rkhs/log.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace rkhs {

namespace {

struct Candidate {
  double d2;
  std::int32_t j;
  bool operator<(const Candidate& o) const { return d2 < o.d2 || (d2 == o.d2 && j < o.j); }
};

// Selects the k smallest of `cand` (ascending) into the output row.
void select_row(std::vector<Candidate>& cand, Eigen::Index k, std::int32_t* idx_out,
                double* d2_out) {
  const auto kk = static_cast<std::ptrdiff_t>(k);
  if (kk < static_cast<std::ptrdiff_t>(cand.size()))
    std::nth_element(cand.begin(), cand.begin() + kk, cand.end());
  std::sort(cand.begin(), cand.begin() + kk);
  for (std::ptrdiff_t s = 0; s < kk; ++s) {
    idx_out[s] = cand[s].j;
    d2_out[s] = cand[s].d2;
  }
}

double squared_distance(const Eigen::MatrixXd& a, Eigen::Index i, const Eigen::MatrixXd& b,
                        Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double diff = a(i, c) - b(j, c);
    s += diff * diff;
  }
  return s;
}

std::vector<Eigen::Index> sampled_rows(Eigen::Index rows, Eigen::Index max_rows) {
  std::vector<Eigen::Index> out;
  if (max_rows <= 0 || rows <= max_rows) {
    out.resize(rows);
    for (Eigen::Index i = 0; i < rows; ++i) out[i] = i;
    return out;
  }
  out.reserve(max_rows);
  for (Eigen::Index s = 0; s < max_rows; ++s) out.push_back(s * rows / max_rows);
  return out;
}

}  // namespace

Eigen::Index default_knn(Eigen::Index n) {
  const auto eight_percent = static_cast<Eigen::Index>(std::ceil(0.08 * static_cast<double>(n)));
  return std::min(n, std::max<Eigen::Index>(500, eight_percent));
}

SparseDistances pairwise_knn(const Eigen::MatrixXd& points, Eigen::Index k) {
  const Eigen::Index n = points.rows();
  if (k < 1 || k > n)
    throw std::invalid_argument("pairwise_knn: k_nn must satisfy 1 <= k_nn <= N (got k_nn=" +
                                std::to_string(k) + ", N=" + std::to_string(n) + ")");
  SparseDistances out;
  out.rows = n;
  out.cols = n;
  out.k = k;
  out.index.resize(static_cast<std::size_t>(n * k));
  out.dist2.resize(static_cast<std::size_t>(n * k));

#pragma omp parallel
  {
    std::vector<Candidate> cand;
    cand.reserve(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      cand.clear();
      for (Eigen::Index j = 0; j < n; ++j)
        if (j != i) cand.push_back({squared_distance(points, i, points, j), static_cast<std::int32_t>(j)});
      std::int32_t* idx = out.index.data() + i * k;
      double* d2 = out.dist2.data() + i * k;
      idx[0] = static_cast<std::int32_t>(i);
      d2[0] = 0.0;
      if (k > 1) select_row(cand, k - 1, idx + 1, d2 + 1);
    }
  }
  return out;
}

SparseDistances query_knn(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& data,
                          Eigen::Index k) {
  const Eigen::Index n = data.rows();
  if (k < 1 || k > n)
    throw std::invalid_argument("query_knn: k_nn must satisfy 1 <= k_nn <= N (got k_nn=" +
                                std::to_string(k) + ", N=" + std::to_string(n) + ")");
  if (queries.cols() != data.cols())
    throw std::invalid_argument("query_knn: query dimension " + std::to_string(queries.cols()) +
                                " does not match data dimension " + std::to_string(data.cols()));
  SparseDistances out;
  out.rows = queries.rows();
  out.cols = n;
  out.k = k;
  out.index.resize(static_cast<std::size_t>(out.rows * k));
  out.dist2.resize(static_cast<std::size_t>(out.rows * k));

#pragma omp parallel
  {
    std::vector<Candidate> cand;
    cand.reserve(static_cast<std::size_t>(n));
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < out.rows; ++i) {
      cand.clear();
      for (Eigen::Index j = 0; j < n; ++j)
        cand.push_back({squared_distance(queries, i, data, j), static_cast<std::int32_t>(j)});
      select_row(cand, k, out.index.data() + i * k, out.dist2.data() + i * k);
    }
  }
  return out;
}

Eigen::VectorXd density_estimate(const SparseDistances& dists, double density_epsilon,
                                 double dimension) {
  if (!(density_epsilon > 0.0)) throw std::invalid_argument("density_estimate: epsilon must be > 0");
  if (!(dimension > 0.0)) throw std::invalid_argument("density_estimate: dimension must be > 0");
  const double norm = std::pow(std::numbers::pi * density_epsilon, -0.5 * dimension) /
                      static_cast<double>(dists.cols);
  Eigen::VectorXd rho(dists.rows);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < dists.rows; ++i) {
    double s = 0.0;
    for (Eigen::Index slot = 0; slot < dists.k; ++slot) s += std::exp(-dists.d2(i, slot) / density_epsilon);
    rho[i] = norm * s;
  }
  return rho;
}

BandwidthEstimate autotune_bandwidth(const SparseDistances& dists, const Eigen::VectorXd& scale,
                                     const AutotuneOptions& opts) {
  if (dists.cols < 2) throw std::invalid_argument("autotune_bandwidth: need at least 2 points");
  if (opts.grid_points < 3) throw std::invalid_argument("autotune_bandwidth: grid too small");
  const bool scaled = scale.size() > 0;
  if (scaled && scale.size() != dists.cols)
    throw std::invalid_argument("autotune_bandwidth: scale vector has the wrong length");

  const auto rows = sampled_rows(dists.rows, opts.max_rows);
  std::vector<double> values;
  values.reserve(rows.size() * static_cast<std::size_t>(dists.k));
  for (Eigen::Index i : rows)
    for (Eigen::Index slot = 0; slot < dists.k; ++slot) {
      double v = dists.d2(i, slot);
      if (scaled) v /= scale[i] * scale[dists.neighbor(i, slot)];
      values.push_back(v);
    }

  std::vector<double> positive;
  positive.reserve(values.size());
  for (double v : values)
    if (v > 0.0) positive.push_back(v);
  if (positive.empty())
    throw std::invalid_argument("autotune_bandwidth: degenerate data, all points coincide");
  const auto [mn, mx] = std::minmax_element(positive.begin(), positive.end());
  if (*mx - *mn <= 1e-12 * *mx)
    throw std::invalid_argument(
        "autotune_bandwidth: degenerate geometry, all pairwise distances are equal (no scaling regime)");

  auto mid = positive.begin() + static_cast<std::ptrdiff_t>(positive.size() / 2);
  std::nth_element(positive.begin(), mid, positive.end());
  const double median = *mid;

  BandwidthEstimate est;
  const int g = opts.grid_points;
  est.grid.resize(g);
  est.log_sum.resize(g);
  const double log_lo = std::log(opts.grid_lo * median);
  const double log_hi = std::log(opts.grid_hi * median);
  const double denom = static_cast<double>(rows.size()) * static_cast<double>(dists.cols);
  for (int s = 0; s < g; ++s) {
    const double eps = std::exp(log_lo + (log_hi - log_lo) * s / (g - 1));
    double total = 0.0;
#pragma omp parallel for reduction(+ : total) schedule(static)
    for (std::size_t e = 0; e < values.size(); ++e) total += std::exp(-values[e] / eps);
    est.grid[s] = eps;
    est.log_sum[s] = std::log(total / denom);
  }

  double best_slope = -1.0;
  int best = 0;
  for (int s = 0; s + 1 < g; ++s) {
    const double slope = (est.log_sum[s + 1] - est.log_sum[s]) /
                         (std::log(est.grid[s + 1]) - std::log(est.grid[s]));
    if (slope > best_slope) {
      best_slope = slope;
      best = s;
    }
  }
  if (!(best_slope > 1e-6))
    throw std::invalid_argument("autotune_bandwidth: flat kernel sum, dimension estimate vanishes");
  est.epsilon = std::sqrt(est.grid[best] * est.grid[best + 1]);
  est.dimension = 2.0 * best_slope;
  return est;
}

BandwidthModel fit_bandwidth(const SparseDistances& dists, const BandwidthOverrides& overrides,
                             const AutotuneOptions& opts) {
  BandwidthModel bw;
  if (overrides.density_epsilon > 0.0 && overrides.dimension > 0.0) {
    bw.density_epsilon = overrides.density_epsilon;
    bw.dimension = overrides.dimension;
  } else {
    const auto raw = autotune_bandwidth(dists, {}, opts);
    bw.density_epsilon = overrides.density_epsilon > 0.0 ? overrides.density_epsilon : raw.epsilon;
    bw.dimension = overrides.dimension > 0.0 ? overrides.dimension : raw.dimension;
  }
  bw.density = density_estimate(dists, bw.density_epsilon, bw.dimension);
  bw.sigma = bw.density.array().pow(-1.0 / bw.dimension).matrix();
  if (!(bw.sigma.array() > 0.0).all() || !bw.sigma.allFinite())
    throw std::runtime_error("fit_bandwidth: bandwidth function is not strictly positive and finite");
  bw.epsilon = overrides.epsilon > 0.0 ? overrides.epsilon
                                       : autotune_bandwidth(dists, bw.sigma, opts).epsilon;
  log()->debug("bandwidth: eps={:.6g} eps_density={:.6g} dim={:.4f}", bw.epsilon,
               bw.density_epsilon, bw.dimension);
  return bw;
}

SparseMatrix vb_kernel(const SparseDistances& dists, const BandwidthModel& bw) {
  if (dists.rows != dists.cols)
    throw std::invalid_argument("vb_kernel: expects a training (square) neighbour table");
  const Eigen::Index n = dists.rows;
  if (bw.sigma.size() != n) throw std::invalid_argument("vb_kernel: sigma has the wrong length");
  if (!(bw.sigma.array() > 0.0).all()) throw std::invalid_argument("vb_kernel: sigma must be > 0");
  if (!(bw.epsilon > 0.0)) throw std::invalid_argument("vb_kernel: epsilon must be > 0");

  // Reverse adjacency: rev[j] holds every (i, d2) with j in knn(i).
  std::vector<Eigen::Index> rev_ptr(n + 1, 0);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index s = 0; s < dists.k; ++s) ++rev_ptr[dists.neighbor(i, s) + 1];
  for (Eigen::Index j = 0; j < n; ++j) rev_ptr[j + 1] += rev_ptr[j];
  std::vector<std::int32_t> rev_idx(static_cast<std::size_t>(rev_ptr[n]));
  std::vector<double> rev_d2(static_cast<std::size_t>(rev_ptr[n]));
  {
    std::vector<Eigen::Index> fill(rev_ptr.begin(), rev_ptr.end() - 1);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index s = 0; s < dists.k; ++s) {
        const auto j = dists.neighbor(i, s);
        rev_idx[fill[j]] = static_cast<std::int32_t>(i);
        rev_d2[fill[j]] = dists.d2(i, s);
        ++fill[j];
      }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<std::vector<std::pair<std::int32_t, double>>> rows(n);
#pragma omp parallel
  {
    std::vector<Eigen::Index> stamp(n, -1);
#pragma omp for schedule(static)
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& row = rows[i];
      row.reserve(static_cast<std::size_t>(dists.k + rev_ptr[i + 1] - rev_ptr[i]));
      auto push = [&](std::int32_t j, double d2) {
        if (stamp[j] == i) return;
        stamp[j] = i;
        const double v = std::exp(-d2 / (bw.epsilon * bw.sigma[i] * bw.sigma[j])) * inv_n;
        if (v >= 1e-300) row.emplace_back(j, v);
      };
      for (Eigen::Index s = 0; s < dists.k; ++s) push(dists.neighbor(i, s), dists.d2(i, s));
      for (Eigen::Index e = rev_ptr[i]; e < rev_ptr[i + 1]; ++e) push(rev_idx[e], rev_d2[e]);
      std::sort(row.begin(), row.end());
    }
  }

  std::size_t nnz = 0;
  for (const auto& r : rows) nnz += r.size();
  SparseMatrix K(n, n);
  K.resizeNonZeros(static_cast<Eigen::Index>(nnz));
  auto* outer = K.outerIndexPtr();
  auto* inner = K.innerIndexPtr();
  auto* vals = K.valuePtr();
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    outer[i] = static_cast<SparseMatrix::StorageIndex>(pos);
    for (const auto& [j, v] : rows[i]) {
      inner[pos] = j;
      vals[pos] = v;
      ++pos;
    }
    std::vector<std::pair<std::int32_t, double>>().swap(rows[i]);
  }
  outer[n] = static_cast<SparseMatrix::StorageIndex>(pos);
  return K;
}

KernelFactor bistochastic_normalize(const SparseMatrix& K) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n) throw std::invalid_argument("bistochastic_normalize: kernel must be square");
  KernelFactor kf;
  kf.d = K * Eigen::VectorXd::Ones(n);
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(kf.d[i] > 0.0))
      throw std::runtime_error("bistochastic_normalize: zero row sum at sample " + std::to_string(i) +
                               " (isolated point)");
  kf.q = K * kf.d.cwiseInverse();
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(kf.q[i] > 0.0))
      throw std::runtime_error("bistochastic_normalize: non-positive degree q at sample " +
                               std::to_string(i));
  const Eigen::VectorXd inv_sqrt_q = kf.q.cwiseSqrt().cwiseInverse();
  kf.normalized = K;
  for (Eigen::Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(kf.normalized, i); it; ++it)
      it.valueRef() = it.value() / kf.d[i] * inv_sqrt_q[it.col()];
  return kf;
}

double markov_defect(const KernelFactor& kf) {
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(kf.normalized.rows());
  const Eigen::VectorXd u = kf.normalized.transpose() * ones;
  const Eigen::VectorXd g1 = kf.normalized * u;
  return (g1 - ones).cwiseAbs().maxCoeff();
}

}  // namespace rkhs
