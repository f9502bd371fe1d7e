#include "rkhs/forecast.hpp"

#include "rkhs/log.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace rkhs {

Eigen::VectorXd project_observable(const Eigen::VectorXd& f, const EigenBasis& basis, Eigen::Index l_prime) {
  if (f.size() != basis.samples())
    throw std::invalid_argument("project_observable: observable has " + std::to_string(f.size()) +
                                " values, basis has " + std::to_string(basis.samples()) + " samples");
  if (l_prime < 1 || l_prime > basis.rank())
    throw std::invalid_argument("project_observable: need 1 <= L' <= L");
  Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.rank());
  for (Eigen::Index j = 0; j < l_prime; ++j) {
    if (!(basis.lambda[j] > 0.0))
      throw std::invalid_argument("project_observable: eigenvalue " + std::to_string(j) + " is zero");
    c[j] = basis.phi.col(j).dot(f) / std::sqrt(basis.lambda[j]);
  }
  return c;
}

Eigen::VectorXcd ForecastModel::phases(double t) const {
  Eigen::VectorXcd p(a.size());
  for (Eigen::Index j = 0; j < a.size(); ++j) p[j] = std::polar(1.0, omega[j] * t) * a[j];
  return p;
}

ForecastModel make_forecast_model(const Eigen::VectorXd& c, Eigen::Index l_prime, const EigenBasis& basis,
                                  const RkhsScaling& scaling, const GeneratorSpectrum& spectrum) {
  const Eigen::Index L = basis.rank();
  if (c.size() != L || spectrum.size() != L || scaling.lambda_tau.size() != L)
    throw std::invalid_argument("make_forecast_model: dimension mismatch");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(L);
  for (Eigen::Index j = 0; j < l_prime; ++j) {
    if (!(scaling.lambda_tau[j] > 0.0))
      throw std::invalid_argument("make_forecast_model: lambda_tau underflows at mode " + std::to_string(j) +
                                  "; reduce tau or L'");
    b[j] = c[j] * std::sqrt(basis.lambda[j] / scaling.lambda_tau[j]);
  }
  ForecastModel m;
  m.c = c;
  m.l_prime = l_prime;
  m.omega = spectrum.omega;
  m.a = spectrum.xi.adjoint() * b.cast<std::complex<double>>();
  if (!m.a.allFinite()) throw std::runtime_error("make_forecast_model: non-finite coefficients");
  return m;
}

Eigen::VectorXd predict(const ForecastModel& model, const Eigen::MatrixXcd& Z, double t) {
  return predict_many(model, Z, {t}).col(0);
}

Eigen::MatrixXd predict_many(const ForecastModel& model, const Eigen::MatrixXcd& Z,
                             const std::vector<double>& lead_times, double* max_imag) {
  if (Z.cols() != model.a.size()) throw std::invalid_argument("predict: dimension mismatch");
  const auto T = static_cast<Eigen::Index>(lead_times.size());
  Eigen::MatrixXcd P(model.a.size(), T);
  for (Eigen::Index k = 0; k < T; ++k) P.col(k) = model.phases(lead_times[k]);
  const Eigen::MatrixXd Zr = Z.real();
  const Eigen::MatrixXd Zi = Z.imag();
  const Eigen::MatrixXd Pr = P.real();
  const Eigen::MatrixXd Pi = P.imag();
  Eigen::MatrixXd re = Zr * Pr - Zi * Pi;
  const Eigen::MatrixXd im = Zr * Pi + Zi * Pr;
  const double scale = re.size() ? re.cwiseAbs().maxCoeff() : 0.0;
  const double resid = im.size() ? im.cwiseAbs().maxCoeff() : 0.0;
  const double rel = scale > 0.0 ? resid / scale : resid;
  log()->debug("predict: {} lead times, max imaginary residual {:.3e} (relative {:.3e})", T, resid, rel);
  if (max_imag) *max_imag = rel;
  return re;
}

Eigen::VectorXd error_metric(const Eigen::MatrixXd& truth, const Eigen::MatrixXd& pred) {
  if (truth.rows() != pred.rows() || truth.cols() != pred.cols())
    throw std::invalid_argument("error_metric: truth and prediction shapes differ");
  Eigen::VectorXd eps(truth.rows());
  for (Eigen::Index t = 0; t < truth.rows(); ++t) {
    const double nrm = truth.row(t).norm();
    if (!(nrm > 0.0)) throw std::invalid_argument("error_metric: truth has zero norm at row " + std::to_string(t));
    eps[t] = (truth.row(t) - pred.row(t)).norm() / nrm;
  }
  return eps;
}

}  // namespace rkhs
