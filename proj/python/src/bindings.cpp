#include "rkhs/config.hpp"
#include "rkhs/forecast.hpp"
#include "rkhs/generator.hpp"
#include "rkhs/log.hpp"
#include "rkhs/pipeline.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

namespace py = pybind11;
using namespace rkhs;

namespace {

// A fitted kernel basis plus the config that produced it.
class Model {
 public:
  explicit Model(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
    py::gil_scoped_release release;
    fit_ = fit_model(cfg_, rec_);
  }

  const ExperimentConfig& config() const { return cfg_; }
  const FitArtifact& fit() const { return fit_; }
  bool cache_hit() const { return rec_.cache_hit; }

  py::dict spectrum(double tau) const {
    const GeneratorSpectrum sp = spectrum_at(fit_, cfg_, tau);
    const Eigen::Index L = sp.size();
    Eigen::VectorXd omega(L), dirichlet(L);
    Eigen::MatrixXcd xi(L, L);
    for (Eigen::Index r = 0; r < L; ++r) {
      omega[r] = sp.omega_ranked(r);
      dirichlet[r] = sp.dirichlet_ranked(r);
      xi.col(r) = sp.xi.col(sp.ordering[r]);
    }
    py::dict d;
    d["tau"] = tau;
    d["omega"] = omega;
    d["dirichlet"] = dirichlet;
    d["xi"] = xi;
    d["W"] = sp.W;
    return d;
  }

  Eigen::MatrixXcd eigenfunctions(const Eigen::MatrixXd& points, double tau, const std::vector<int>& ranks) const {
    const GeneratorSpectrum sp = spectrum_at(fit_, cfg_, tau);
    Eigen::MatrixXcd xi(sp.size(), static_cast<Eigen::Index>(ranks.size()));
    for (std::size_t k = 0; k < ranks.size(); ++k) {
      if (ranks[k] < 0 || ranks[k] >= sp.size()) throw py::index_error("rank out of range");
      xi.col(static_cast<Eigen::Index>(k)) = sp.xi.col(sp.ordering[ranks[k]]);
    }
    return eigenfunction_eval(scaled_values(points, tau), xi);
  }

  Eigen::MatrixXd forecast(const std::string& observable, const Eigen::MatrixXd& points,
                           const std::vector<double>& lead_times, double tau, std::optional<Eigen::Index> l_prime) const {
    const Eigen::Index lp = l_prime.value_or(cfg_.resolved_l_prime());
    const GeneratorSpectrum sp = spectrum_at(fit_, cfg_, tau);
    const RkhsScaling sc = rkhs_scaling(fit_.basis.lambda, tau);
    const Eigen::VectorXd f = Observable::parse(observable).evaluate(fit_.features);
    const ForecastModel m = make_forecast_model(project_observable(f, fit_.basis, lp), lp, fit_.basis, sc, sp);
    return predict_many(m, eigenfunction_eval(scaled_values(points, tau), sp.xi), lead_times);
  }

 private:
  Eigen::MatrixXd scaled_values(const Eigen::MatrixXd& points, double tau) const {
    if (points.cols() != fit_.data.cols())
      throw py::value_error("points must have " + std::to_string(fit_.data.cols()) + " columns (data space)");
    const Eigen::MatrixXd psi = nystrom_eval(points, fit_.data, fit_.basis, fit_.bandwidth, fit_.knn);
    return scaled_basis_values(psi, fit_.basis, rkhs_scaling(fit_.basis.lambda, tau));
  }

  ExperimentConfig cfg_;
  FitArtifact fit_;
  RunRecord rec_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Kernel-based spectral analysis and forecasting of the Koopman generator";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

  m.def("set_log_level", [](const std::string& level) { log()->set_level(spdlog::level::from_str(level)); });

  m.def("run", [](const std::filesystem::path& config, const std::string& command) {
    const ExperimentConfig cfg = load_config(config);
    py::gil_scoped_release release;
    if (command == "run") run_experiment(cfg);
    else if (command == "sweep-tau") run_sweep(cfg);
    else if (command == "forecast") run_forecast(cfg);
    else throw ValidationError("unknown command '" + command + "'");
  }, py::arg("config"), py::arg("command") = "run", "Run a CLI subcommand on a YAML config.");

  m.def("rkhs_scaling", [](const Eigen::VectorXd& lambda, double tau) { return rkhs_scaling(lambda, tau).lambda_tau; },
        py::arg("lambda_"), py::arg("tau"));
  m.def("fd_matrix", [](Eigen::Index n, double dt) { return Eigen::MatrixXd(fd_matrix(n, dt).V); }, py::arg("n"),
        py::arg("dt"), "Dense copy of the skew-symmetric finite-difference matrix.");
  m.def("eig_skew", [](const Eigen::MatrixXd& W) {
    const SkewEigen e = eig_skew(W);
    return py::make_tuple(e.omega, e.xi);
  }, py::arg("W"));

  py::class_<Model>(m, "Model")
      .def_static("load", [](const std::filesystem::path& path) { return Model(load_config(path)); }, py::arg("path"),
                  "Fit (or load from cache) the basis for a YAML config file.")
      .def_static("from_yaml", [](const std::string& text, const std::filesystem::path& base_dir) {
        return Model(parse_config(text, base_dir));
      }, py::arg("text"), py::arg("base_dir") = ".")
      .def_property_readonly("lambda_", [](const Model& s) { return s.fit().basis.lambda; })
      .def_property_readonly("phi", [](const Model& s) { return s.fit().basis.phi; })
      .def_property_readonly("data", [](const Model& s) { return s.fit().data; })
      .def_property_readonly("features", [](const Model& s) { return s.fit().features; })
      .def_property_readonly("knn", [](const Model& s) { return s.fit().knn; })
      .def_property_readonly("epsilon", [](const Model& s) { return s.fit().bandwidth.epsilon; })
      .def_property_readonly("dimension", [](const Model& s) { return s.fit().bandwidth.dimension; })
      .def_property_readonly("markov_defect", [](const Model& s) { return s.fit().markov_defect; })
      .def_property_readonly("dt", [](const Model& s) { return s.config().trajectory.dt; })
      .def_property_readonly("cache_hit", &Model::cache_hit)
      .def("spectrum", &Model::spectrum, py::arg("tau"),
           "Frequencies, Dirichlet energies and eigenvectors in ascending energy order.")
      .def("eigenfunctions", &Model::eigenfunctions, py::arg("points"), py::arg("tau"), py::arg("ranks"),
           "Eigenfunction values at data-space points, one column per requested rank.")
      .def("forecast", &Model::forecast, py::arg("observable"), py::arg("points"), py::arg("lead_times"),
           py::arg("tau") = 1e-5, py::arg("l_prime") = py::none(),
           "Predicted observable values, one row per point and one column per lead time.");
}
