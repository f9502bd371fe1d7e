#include "rkhs/config.hpp"
#include "rkhs/io.hpp"
#include "rkhs/pipeline.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <sys/wait.h>

namespace fs = std::filesystem;
using namespace rkhs;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rkhs_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string header_of(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string small_torus_yaml(const fs::path& out) {
  return "flow: {kind: torus}\n"
         "trajectory: {samples: 400, dt: 0.0125663706143592, x0: [0.3, 1.2]}\n"
         "observation: {map: torus_embedding, variant: standard}\n"
         "kernel: {knn: 120}\n"
         "basis: {modes: 15}\n"
         "generator: {tau: [1.0e-4], eigenfunctions: [1, 2]}\n"
         "forecast: {observables: [F1, 'exp(F1+F3)'], max_lead_steps: 40, lead_stride: 4, "
         "verification_samples: 200, seed_stride: 20}\n"
         "output: {directory: '" + out.string() + "'}\n";
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(RKHS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int st = std::system(cmd.c_str());
  return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

}  // namespace

TEST(Config, Defaults) {
  const ExperimentConfig c = parse_config("flow: {kind: torus}\n");
  EXPECT_TRUE(std::holds_alternative<TorusFlow>(c.flow));
  EXPECT_EQ(c.trajectory.samples, 16000);
  EXPECT_EQ(c.observation.kind, ObservationMap::Kind::torus_embedding);
  EXPECT_EQ(c.modes, 300);
  EXPECT_EQ(c.resolved_l_prime(), 300);
  EXPECT_EQ(c.resolved_cache_dir(), fs::path("out") / "cache");
  EXPECT_FALSE(c.forecast_enabled);
}

TEST(Config, RejectsTooFewSamples) {
  try {
    parse_config("flow: {kind: lorenz63}\ntrajectory: {samples: 2}\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("trajectory.samples"), std::string::npos);
  }
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  try {
    parse_config("flow: {kind: torus}\nbasis: {mode: 10}\n");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("basis.mode"), std::string::npos);
  }
  EXPECT_THROW(parse_config("flow: {kind: pendulum}\n"), ValidationError);
  EXPECT_THROW(parse_config("flow: {kind: torus}\nbasis: {modes: ten}\n"), ValidationError);
  EXPECT_THROW(parse_config("flow: {kind: torus, alpha1: -1}\n"), ValidationError);
  EXPECT_THROW(parse_config("flow: [1, 2\n"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/config.yaml"), ValidationError);
}

TEST(Config, ForecastTableAndJson) {
  const ExperimentConfig c = parse_config(small_torus_yaml("o"));
  EXPECT_TRUE(c.forecast_enabled);
  ASSERT_EQ(c.observables.size(), 2u);
  EXPECT_EQ(c.observables[1].name, "exp(F1+F3)");
  const nlohmann::json j = to_json(c);
  EXPECT_TRUE(j.contains("flow"));
  // Forecast-only parameters do not change the fit cache key.
  ExperimentConfig c2 = c;
  c2.forecast_tau = 0.5;
  c2.max_lead_steps = 7;
  EXPECT_EQ(upstream_json(c).dump(), upstream_json(c2).dump());
  c2.modes = 14;
  EXPECT_NE(upstream_json(c).dump(), upstream_json(c2).dump());
}

TEST(Observable, ParseAndEvaluate) {
  const Observable a = Observable::parse("F2");
  ASSERT_EQ(a.components.size(), 1u);
  EXPECT_EQ(a.components[0], 1);
  EXPECT_FALSE(a.exponential);
  const Observable b = Observable::parse("exp(F1+F3)");
  EXPECT_TRUE(b.exponential);
  EXPECT_EQ(b.components, (std::vector<int>{0, 2}));
  Eigen::MatrixXd obs(2, 3);
  obs << 1, 2, 3, -1, 0, 0.5;
  const Eigen::VectorXd vb = b.evaluate(obs);
  EXPECT_NEAR(vb[0], std::exp(4.0), 1e-12);
  EXPECT_NEAR(vb[1], std::exp(-0.5), 1e-15);
  EXPECT_EQ(a.evaluate(obs)[1], 0.0);
  EXPECT_THROW(Observable::parse("G1"), ValidationError);
  EXPECT_THROW(Observable::parse("F0"), ValidationError);
  EXPECT_THROW(Observable::parse("F1+F2"), ValidationError);
  EXPECT_THROW(Observable::parse("F4").evaluate(obs), ValidationError);
}

TEST(TauGrid, LogSpaced) {
  TauGrid g;
  const std::vector<double> v = g.resolve();
  ASSERT_EQ(v.size(), 20u);
  EXPECT_DOUBLE_EQ(v.front(), 1e-5);
  EXPECT_DOUBLE_EQ(v.back(), 1.0);
  for (std::size_t i = 1; i < v.size(); ++i) EXPECT_NEAR(std::log(v[i] / v[i - 1]), std::log(1e5) / 19, 1e-12);
  g.values = {0.5, 0.1};
  EXPECT_EQ(g.resolve(), (std::vector<double>{0.5, 0.1}));
}

TEST(Csv, FormatAndRoundTrip) {
  const fs::path dir = scratch("csv");
  {
    CsvWriter w(dir / "a.csv", {"x", "y"});
    w.row({0.1, 1.0 / 3.0});
    w.row({-2.5e-300, 7.0});
    w.close();
  }
  const std::string text = slurp(dir / "a.csv");
  EXPECT_EQ(text, "x,y\n0.10000000000000001,0.33333333333333331\n-2.5e-300,7\n");
  EXPECT_EQ(text.find('\r'), std::string::npos);
  const Eigen::MatrixXd m = read_csv(dir / "a.csv");
  ASSERT_EQ(m.rows(), 2);
  EXPECT_EQ(m(0, 0), 0.1);
  EXPECT_EQ(m(0, 1), 1.0 / 3.0);
  EXPECT_EQ(m(1, 0), -2.5e-300);

  put(dir / "ragged.csv", "1,2\n3\n");
  try {
    read_csv(dir / "ragged.csv");
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos);
  }
  EXPECT_THROW(CsvWriter(dir / "b.csv", {"a"}).row({1.0, 2.0}), std::invalid_argument);
  fs::remove_all(dir);
}

TEST(Hash, Sha256KnownAnswer) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(FitArtifact, SaveLoadRoundTrip) {
  const fs::path dir = scratch("fit");
  FitArtifact f;
  f.data = Eigen::MatrixXd::Random(7, 3);
  f.features = Eigen::MatrixXd::Random(7, 2);
  f.knn = 5;
  f.bandwidth.epsilon = 0.25;
  f.bandwidth.density_epsilon = 0.5;
  f.bandwidth.dimension = 1.75;
  f.bandwidth.density = Eigen::VectorXd::Random(7);
  f.bandwidth.sigma = Eigen::VectorXd::Random(7);
  f.d = Eigen::VectorXd::Random(7);
  f.basis.lambda = Eigen::VectorXd::Random(4);
  f.basis.phi = Eigen::MatrixXd::Random(7, 4);
  f.basis.gamma = Eigen::MatrixXd::Random(7, 4);
  f.basis.q = Eigen::VectorXd::Random(7);
  f.markov_defect = 3e-15;
  save_fit(dir / "a.fit", f);
  const FitArtifact g = load_fit(dir / "a.fit");
  EXPECT_EQ(g.data, f.data);
  EXPECT_EQ(g.features, f.features);
  EXPECT_EQ(g.knn, 5);
  EXPECT_EQ(g.bandwidth.dimension, 1.75);
  EXPECT_EQ(g.bandwidth.sigma, f.bandwidth.sigma);
  EXPECT_EQ(g.basis.phi, f.basis.phi);
  EXPECT_EQ(g.basis.gamma, f.basis.gamma);
  EXPECT_EQ(g.markov_defect, f.markov_defect);

  const std::string bytes = slurp(dir / "a.fit");
  put(dir / "trunc.fit", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(load_fit(dir / "trunc.fit"), std::runtime_error);
  put(dir / "junk.fit", "not a fit file");
  EXPECT_THROW(load_fit(dir / "junk.fit"), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Pipeline, SchemasDeterminismAndCache) {
  const fs::path dir = scratch("pipe");
  const fs::path out = dir / "out";
  put(dir / "cfg.yaml", small_torus_yaml(out));
  const ExperimentConfig cfg = load_config(dir / "cfg.yaml");
  run_experiment(cfg);

  EXPECT_EQ(header_of(out / "spectrum_tau00.csv"), "j,omega,dirichlet,tau");
  EXPECT_EQ(header_of(out / "tau_sweep.csv"), "tau,j,omega,dirichlet");
  EXPECT_EQ(header_of(out / "eigenfunction_rank001.csv"), "sample_index,t,re_zeta,im_zeta");
  EXPECT_EQ(header_of(out / "forecast_F1.csv"), "lead_time,epsilon");
  EXPECT_EQ(header_of(out / "forecast_F1_trajectories.csv"), "seed_index,lead_time,truth,prediction");
  const Eigen::MatrixXd spec = read_csv(out / "spectrum_tau00.csv");
  EXPECT_EQ(spec.rows(), 15);
  EXPECT_EQ(spec(0, 1), 0.0);
  const Eigen::MatrixXd fc = read_csv(out / "forecast_F1.csv");
  EXPECT_EQ(fc.rows(), 11);
  EXPECT_EQ(read_csv(out / "eigenfunction_rank002.csv").rows(), 400);

  const nlohmann::json m1 = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_FALSE(m1["cache"]["hit"].get<bool>());
  EXPECT_GT(m1["resolved"]["epsilon"].get<double>(), 0.0);
  EXPECT_GT(m1["resolved"]["dimension"].get<double>(), 0.0);

  std::vector<std::pair<std::string, std::string>> first;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().extension() == ".csv") first.emplace_back(e.path().filename().string(), slurp(e.path()));
  ASSERT_GE(first.size(), 7u);

  run_experiment(cfg);
  const nlohmann::json m2 = nlohmann::json::parse(slurp(out / "manifest.json"));
  EXPECT_TRUE(m2["cache"]["hit"].get<bool>());
  for (const auto& [name, text] : first) EXPECT_EQ(slurp(out / name), text) << name;

  // Without the cache the same bytes come out.
  ExperimentConfig nc = cfg;
  nc.cache = false;
  nc.output_dir = dir / "nocache";
  run_experiment(nc);
  for (const auto& [name, text] : first) EXPECT_EQ(slurp(nc.output_dir / name), text) << name;
  fs::remove_all(dir);
}

TEST(Pipeline, SingleTauSweepMatchesSpectrum) {
  const fs::path dir = scratch("sweep");
  ExperimentConfig cfg = parse_config(small_torus_yaml(dir / "out"));
  run_sweep(cfg);
  const Eigen::MatrixXd sw = read_csv(dir / "out" / "tau_sweep.csv");
  cfg.output_dir = dir / "run";
  cfg.forecast_enabled = false;
  run_experiment(cfg);
  const Eigen::MatrixXd sp = read_csv(dir / "run" / "spectrum_tau00.csv");
  ASSERT_EQ(sw.rows(), sp.rows());
  EXPECT_EQ(sw.col(0), sp.col(3));
  EXPECT_EQ(sw.col(1), sp.col(0));
  EXPECT_EQ(sw.col(2), sp.col(1));
  EXPECT_EQ(sw.col(3), sp.col(2));
  fs::remove_all(dir);
}

TEST(Pipeline, ForecastRequiresTable) {
  ExperimentConfig cfg = parse_config("flow: {kind: torus}\ntrajectory: {samples: 50}\nbasis: {modes: 5}\n");
  EXPECT_THROW(run_forecast(cfg), ValidationError);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  put(dir / "ok.yaml", small_torus_yaml(dir / "out"));
  EXPECT_EQ(run_cli("sweep-tau " + (dir / "ok.yaml").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "tau_sweep.csv"));

  put(dir / "pts.csv", "a,b\n0.1,0.2\n3.0,1.0\n");
  EXPECT_EQ(run_cli("eval " + (dir / "ok.yaml").string() + " --at " + (dir / "pts.csv").string() + " --out " +
                    (dir / "ev.csv").string() + " --modes 0,1 --lead-times 0,1.5"),
            0);
  EXPECT_EQ(header_of(dir / "ev.csv"), "point_index,rank,omega,re_zeta,im_zeta");
  EXPECT_EQ(read_csv(dir / "ev.csv").rows(), 4);
  EXPECT_EQ(header_of(dir / "ev_predictions.csv"), "point_index,observable,lead_time,prediction");

  put(dir / "bad.yaml", "flow: {kind: torus}\ntrajectory: {samples: 2}\n");
  EXPECT_EQ(run_cli("run " + (dir / "bad.yaml").string()), 1);
  EXPECT_EQ(run_cli("run"), 1);
  EXPECT_EQ(run_cli("frobnicate x.yaml"), 1);

  put(dir / "ragged.csv", "1,2,3\n4,5\n");
  put(dir / "rt.yaml", "flow: {kind: lorenz63}\ntrajectory: {input: ragged.csv}\nbasis: {modes: 2}\n"
                       "output: {directory: '" + (dir / "rt").string() + "'}\n");
  EXPECT_EQ(run_cli("run " + (dir / "rt.yaml").string()), 2);
  fs::remove_all(dir);
}
