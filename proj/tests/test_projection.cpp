#include <catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"

using namespace ecnn;

namespace {

// Direct transcription of the update rule with explicit loops:
// w'_i = w_i - chi / (sum_jk U_jk^2) * sum_k U_ik * eta_k.
Eigen::VectorXd naive_step(const Eigen::VectorXd& w, const Eigen::MatrixXd& u, const Eigen::VectorXd& eta, double chi) {
  double norm2 = 0.0;
  for (Eigen::Index j = 0; j < u.rows(); ++j)
    for (Eigen::Index k = 0; k < u.cols(); ++k) norm2 += u(j, k) * u(j, k);
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double s = 0.0;
    for (Eigen::Index k = 0; k < u.cols(); ++k) s += u(i, k) * eta[k];
    out[i] = w[i] - chi / norm2 * s;
  }
  return out;
}

double naive_rse(const Eigen::MatrixXd& u, const Eigen::VectorXd& w, double bias, const Eigen::VectorXd& t) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    double a = bias;
    for (Eigen::Index i = 0; i < u.rows(); ++i) a += w[i] * u(i, k);
    const double e = 1.0 / (1.0 + std::exp(-a)) - t[k];
    s += e * e;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("sigmoid and residual match closed forms", "[projection]") {
  CHECK(sigmoid(2.0) == Catch::Approx(0.880797077977882444).epsilon(1e-15));
  CHECK(sigmoid(0.0) == 0.5);
  Eigen::MatrixXd u(1, 1);
  u << 1.0;
  Eigen::VectorXd w(1), t(1);
  w << 1.0;
  t << 1.0;
  CHECK(error_vector(u, w, 0.0, t)[0] == Catch::Approx(-0.268941421369995121).epsilon(1e-15));
}

TEST_CASE("projection step agrees with a loop implementation", "[projection][property]") {
  Rng rng(42);
  std::uniform_int_distribution<int> dim(1, 6), cnt(1, 30);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> chi(0.1, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = dim(rng), q = cnt(rng);
    Eigen::MatrixXd u(p, q);
    Eigen::VectorXd w(p), eta(q);
    for (int i = 0; i < p; ++i) w[i] = g(rng);
    for (int i = 0; i < p; ++i)
      for (int k = 0; k < q; ++k) u(i, k) = g(rng);
    for (int k = 0; k < q; ++k) eta[k] = g(rng);
    const double c = chi(rng);
    CHECK((projection_step(w, u, eta, c) - naive_step(w, u, eta, c)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("projection step rejects an all-zero input matrix", "[projection]") {
  CHECK_THROWS_AS(projection_step(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Ones(3), 1.9),
                  NumericError);
}

TEST_CASE("fit result invariants hold", "[projection][property]") {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const Dataset d = fit_normalize(testing::small_synth(seed, 300, 5)).first;
    const SplitPair s = split(d, 0.5, seed);
    const Dataset a = subset(d, s.a_indices), b = subset(d, s.b_indices);
    Rng rng = make_rng(seed, "init");
    TrainConfig cfg;
    const FitResult f = fit_neuron(a.x.transpose(), a.targets(), b.x.transpose(), b.targets(), cfg, rng);
    CHECK(f.criterion >= 0.0);
    CHECK(f.steps_taken >= 1);
    CHECK(f.steps_taken <= cfg.max_steps);
    CHECK(f.rse_trace_b.size() == f.steps_taken + 1);
    CHECK(f.criterion == f.rse_trace_b.back());
    CHECK(std::abs(naive_rse(b.x.transpose(), f.weights, f.bias, b.targets()) - f.criterion) < 1e-12);
    // Only the last step may fall short of the improvement threshold.
    for (std::size_t k = 1; k + 1 < f.rse_trace_b.size(); ++k) CHECK(f.rse_trace_b[k - 1] - f.rse_trace_b[k] >= cfg.delta);
  }
}

TEST_CASE("epsilon rule stops as soon as the error target is met", "[projection]") {
  const Dataset d = testing::separable_1d(60, 1);
  const SplitPair s = split(d, 0.5, 1);
  const Dataset a = subset(d, s.a_indices), b = subset(d, s.b_indices);
  TrainConfig cfg;
  cfg.delta = 1e-9;
  cfg.epsilon = 1.0;
  Rng rng(1);
  const FitResult f = fit_neuron(a.x.transpose(), a.targets(), b.x.transpose(), b.targets(), cfg, rng);
  CHECK(f.criterion <= 1.0);
  for (std::size_t k = 0; k + 1 < f.rse_trace_b.size(); ++k) CHECK(f.rse_trace_b[k] > 1.0);
}

TEST_CASE("the converged weights solve the logistic gradient condition", "[projection]") {
  // The update vanishes exactly when U * eta = 0 on the fitting part.
  const Dataset d = fit_normalize(testing::small_synth(4, 400, 3, 0.2)).first;
  const SplitPair s = split(d, 0.5, 4);
  const Dataset a = subset(d, s.a_indices);
  TrainConfig cfg;
  cfg.delta = 1e-14;
  cfg.max_steps = 20000;
  Rng rng(4);
  const FitResult f = fit_neuron(a.x.transpose(), a.targets(), a.x.transpose(), a.targets(), cfg, rng);
  const Eigen::MatrixXd ua = with_bias_row(a.x.transpose());
  Eigen::VectorXd w(f.weights.size() + 1);
  w << f.weights, f.bias;
  const Eigen::VectorXd eta = (ua.transpose() * w).unaryExpr([](double v) { return sigmoid(v); }) - a.targets();
  CHECK((ua * eta).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("trainer settings are validated", "[projection]") {
  TrainConfig cfg;
  CHECK(cfg.chi == 1.9);
  CHECK(cfg.delta == 0.0015);
  CHECK(cfg.warnings().empty());
  cfg.chi = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.chi = 2.5;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.warnings().size() == 1);
  cfg = TrainConfig{};
  cfg.delta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = TrainConfig{};
  cfg.max_steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("fit rejects mismatched shapes", "[projection]") {
  TrainConfig cfg;
  Rng rng(1);
  CHECK_THROWS_AS(fit_neuron(Eigen::MatrixXd::Ones(2, 4), Eigen::VectorXd::Ones(3), Eigen::MatrixXd::Ones(2, 4),
                             Eigen::VectorXd::Ones(4), cfg, rng),
                  DataError);
  CHECK_THROWS_AS(fit_neuron(Eigen::MatrixXd::Ones(2, 0), Eigen::VectorXd::Ones(0), Eigen::MatrixXd::Ones(2, 4),
                             Eigen::VectorXd::Ones(4), cfg, rng),
                  DataError);
}
