#pragma once

#include "rkhs/basis.hpp"
#include "rkhs/generator.hpp"

#include <Eigen/Dense>

#include <vector>

namespace rkhs {

/// c_j = phi_j^T f / sqrt(lambda_j) for j < l_prime, zero-padded to the basis rank.
Eigen::VectorXd project_observable(const Eigen::VectorXd& f, const EigenBasis& basis, Eigen::Index l_prime);

/// Coefficients of a projected observable in the eigenvector coordinates of W.
struct ForecastModel {
  Eigen::VectorXd c;       // basis coefficients (zero beyond l_prime)
  Eigen::Index l_prime = 0;
  Eigen::VectorXcd a;      // xi^H (c scaled into the tau-RKHS basis)
  Eigen::VectorXd omega;

  /// Eigen coordinates advanced by t: diag(exp(i omega t)) a.
  Eigen::VectorXcd phases(double t) const;
};

/// Throws std::invalid_argument when a retained mode has lambda_tau == 0 (tau too large
/// for the requested l_prime).
ForecastModel make_forecast_model(const Eigen::VectorXd& c, Eigen::Index l_prime, const EigenBasis& basis,
                                  const RkhsScaling& scaling, const GeneratorSpectrum& spectrum);

/// Real part of Z diag(exp(i omega t)) a at the rows of Z (see eigenfunction_eval).
Eigen::VectorXd predict(const ForecastModel& model, const Eigen::MatrixXcd& Z, double t);

/// Predictions for several lead times at once, one column per lead time.
/// `max_imag`, when non-null, receives the largest imaginary residual relative to the
/// largest real value.
Eigen::MatrixXd predict_many(const ForecastModel& model, const Eigen::MatrixXcd& Z,
                             const std::vector<double>& lead_times, double* max_imag = nullptr);

/// Normalized RMS error per row: ||truth_t - pred_t|| / ||truth_t||. Throws on shape
/// mismatch or a zero-norm truth row.
Eigen::VectorXd error_metric(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred);

}  // namespace rkhs
