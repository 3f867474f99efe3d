#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ecnn/error.hpp"
#include "ecnn/io.hpp"
#include "ecnn/random.hpp"

namespace ecnn {

/// Settings of the single-neuron projection fit.
struct TrainConfig {
  double chi = 1.9;                   // learning rate
  double delta = 0.0015;              // stop once e_B improves by less than this
  std::optional<double> epsilon;      // stop once e_B <= epsilon (known noise level)
  std::size_t max_steps = 200;
  double init_std = 0.1;              // initial weights ~ N(0, init_std)

  void validate() const {
    if (!(chi > 0.0) || !std::isfinite(chi)) throw ConfigError("chi must be positive, got " + format_real(chi));
    if (!(delta > 0.0)) throw ConfigError("delta must be positive, got " + format_real(delta));
    if (epsilon && !(*epsilon >= 0.0)) throw ConfigError("epsilon must be non-negative");
    if (max_steps < 1) throw ConfigError("max_steps must be at least 1");
    if (!(init_std > 0.0)) throw ConfigError("init_std must be positive");
  }

  /// Non-fatal remarks; the convergence guarantee holds for 1 < chi <= 2.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (chi <= 1.0 || chi > 2.0)
      w.push_back("chi=" + format_real(chi) + " lies outside (1, 2]; convergence is not guaranteed");
    return w;
  }
};

struct FitResult {
  Eigen::VectorXd weights;
  double bias = 0.0;
  double criterion = 0.0;             // e_B at the stopping step
  std::size_t steps_taken = 0;
  std::vector<double> rse_trace_b;    // e_B(0), e_B(1), ..., e_B(steps_taken)
};

inline double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

inline double neuron_forward(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& w,
                             double bias) {
  if (u.size() != w.size())
    throw DataError("neuron has " + std::to_string(w.size()) + " weights but received " + std::to_string(u.size()) +
                    " inputs");
  return sigmoid(bias + u.dot(w));
}

/// Sigmoid outputs for every column of `inputs` (p x q, one example per column).
inline Eigen::VectorXd neuron_outputs(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                      const Eigen::Ref<const Eigen::VectorXd>& w, double bias) {
  if (inputs.rows() != w.size())
    throw DataError("input matrix has " + std::to_string(inputs.rows()) + " rows, weights have " +
                    std::to_string(w.size()));
  Eigen::VectorXd a = inputs.transpose() * w;
  return a.unaryExpr([bias](double v) { return sigmoid(v + bias); });
}

/// Per-example residual: neuron output minus target.
inline Eigen::VectorXd error_vector(const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                    const Eigen::Ref<const Eigen::VectorXd>& w, double bias,
                                    const Eigen::Ref<const Eigen::VectorXd>& targets) {
  if (inputs.cols() != targets.size())
    throw DataError("input matrix has " + std::to_string(inputs.cols()) + " examples, targets have " +
                    std::to_string(targets.size()));
  return neuron_outputs(inputs, w, bias) - targets;
}

/// Residual square error: the Euclidean norm of the residual vector.
inline double rse(const Eigen::Ref<const Eigen::VectorXd>& eta) { return eta.norm(); }

/// Appends the constant-1 bias row to a p x q input matrix.
inline Eigen::MatrixXd with_bias_row(const Eigen::Ref<const Eigen::MatrixXd>& inputs) {
  Eigen::MatrixXd out(inputs.rows() + 1, inputs.cols());
  out.topRows(inputs.rows()) = inputs;
  out.row(inputs.rows()).setOnes();
  return out;
}

/// One projection update w' = w - chi * ||U||_F^-2 * U * eta on augmented weights.
inline Eigen::VectorXd projection_step(const Eigen::Ref<const Eigen::VectorXd>& w,
                                       const Eigen::Ref<const Eigen::MatrixXd>& inputs,
                                       const Eigen::Ref<const Eigen::VectorXd>& eta, double chi) {
  if (inputs.rows() != w.size() || inputs.cols() != eta.size())
    throw DataError("projection_step: dimension mismatch");
  const double norm2 = inputs.squaredNorm();
  if (!(norm2 > 0.0)) throw NumericError("projection_step: input matrix is all zeros");
  return w - (chi / norm2) * (inputs * eta);
}

/// Runs the projection fit from explicit starting weights `w0` (p weights
/// followed by the bias). Stops at the first step where e_B <= epsilon (if
/// set) or e_B(k-1) - e_B(k) < delta, or at max_steps.
inline FitResult fit_neuron_from(const Eigen::Ref<const Eigen::MatrixXd>& inputs_a,
                                 const Eigen::Ref<const Eigen::VectorXd>& targets_a,
                                 const Eigen::Ref<const Eigen::MatrixXd>& inputs_b,
                                 const Eigen::Ref<const Eigen::VectorXd>& targets_b, const TrainConfig& cfg,
                                 const Eigen::Ref<const Eigen::VectorXd>& w0) {
  cfg.validate();
  const auto p = inputs_a.rows();
  if (inputs_a.cols() == 0 || inputs_b.cols() == 0) throw DataError("fit_neuron: empty fitting or validation part");
  if (inputs_b.rows() != p || w0.size() != p + 1 || targets_a.size() != inputs_a.cols() ||
      targets_b.size() != inputs_b.cols())
    throw DataError("fit_neuron: dimension mismatch");

  const Eigen::MatrixXd ua = with_bias_row(inputs_a);
  const Eigen::MatrixXd ub = with_bias_row(inputs_b);
  auto validation_rse = [&](const Eigen::VectorXd& w_aug) {
    Eigen::VectorXd a = ub.transpose() * w_aug;
    return (a.unaryExpr([](double v) { return sigmoid(v); }) - targets_b).norm();
  };
  const double norm2 = ua.squaredNorm();
  if (!(norm2 > 0.0) || !std::isfinite(norm2)) throw NumericError("fit_neuron: fitting input matrix is degenerate");
  const double step_scale = cfg.chi / norm2;

  Eigen::VectorXd w = w0;
  FitResult out;
  out.rse_trace_b.push_back(validation_rse(w));
  for (std::size_t k = 1; k <= cfg.max_steps; ++k) {
    Eigen::VectorXd a = ua.transpose() * w;
    Eigen::VectorXd eta = a.unaryExpr([](double v) { return sigmoid(v); }) - targets_a;
    w -= step_scale * (ua * eta);
    const double eb = validation_rse(w);
    if (!w.allFinite() || !std::isfinite(eb)) throw NumericError("fit_neuron: non-finite value at step " + std::to_string(k));
    const double prev = out.rse_trace_b.back();
    out.rse_trace_b.push_back(eb);
    out.steps_taken = k;
    if (cfg.epsilon && eb <= *cfg.epsilon) break;
    if (prev - eb < cfg.delta) break;
  }
  out.weights = w.head(p);
  out.bias = w[p];
  out.criterion = out.rse_trace_b.back();
  return out;
}

/// p weights followed by the bias, drawn from N(0, init_std).
inline Eigen::VectorXd initial_weights(Eigen::Index p, double init_std, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, init_std);
  Eigen::VectorXd w(p + 1);
  for (Eigen::Index i = 0; i <= p; ++i) w[i] = gauss(rng);
  return w;
}

inline FitResult fit_neuron(const Eigen::Ref<const Eigen::MatrixXd>& inputs_a,
                            const Eigen::Ref<const Eigen::VectorXd>& targets_a,
                            const Eigen::Ref<const Eigen::MatrixXd>& inputs_b,
                            const Eigen::Ref<const Eigen::VectorXd>& targets_b, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  return fit_neuron_from(inputs_a, targets_a, inputs_b, targets_b, cfg,
                         initial_weights(inputs_a.rows(), cfg.init_std, rng));
}

}  // namespace ecnn
