#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ecnn/dataset.hpp"
#include "ecnn/error.hpp"
#include "ecnn/projection.hpp"
#include "ecnn/random.hpp"

namespace ecnn {

/// Where a cascade neuron input comes from: a raw feature or an earlier neuron.
struct InputSource {
  enum class Kind { Feature, Hidden };
  Kind kind = Kind::Feature;
  std::size_t index = 0;

  static InputSource feature(std::size_t j) { return {Kind::Feature, j}; }
  static InputSource hidden(std::size_t l) { return {Kind::Hidden, l}; }

  bool operator==(const InputSource&) const = default;
};

/// Neuron at layer r (1-based). Its r+1 inputs are the outputs of neurons
/// 0..r-2, then the base feature, then the feature it introduced.
struct CascadeNeuron {
  std::size_t layer = 1;
  std::vector<InputSource> inputs;
  Eigen::VectorXd weights;
  double bias = 0.0;
  double criterion = 0.0;

  std::size_t new_feature() const { return inputs.back().index; }
};

struct CascadeModel {
  std::size_t base_feature = 0;
  std::vector<CascadeNeuron> neurons;
  double c0 = 0.0;                     // criterion of the best single-input neuron
  NormParams norm;
  std::vector<std::string> feature_names;
  double base_weight = 0.0;             // single-input neuron on the base feature,
  double base_bias = 0.0;               // whose criterion is c0; the output if no neuron is accepted
  double threshold = 0.5;

  std::size_t input_count() const { return feature_names.size(); }

  /// Distinct raw features the model reads, ascending.
  std::vector<std::size_t> referenced_features() const {
    std::set<std::size_t> used;
    for (const auto& n : neurons)
      for (const auto& s : n.inputs)
        if (s.kind == InputSource::Kind::Feature) used.insert(s.index);
    return {used.begin(), used.end()};
  }

  /// c0 followed by each neuron's criterion.
  std::vector<double> criterion_trace() const {
    std::vector<double> t{c0};
    for (const auto& n : neurons) t.push_back(n.criterion);
    return t;
  }

  double final_criterion() const { return neurons.empty() ? c0 : neurons.back().criterion; }
};

struct GrowthConfig {
  TrainConfig trainer;
  bool advance_on_accept = true;
  std::optional<std::size_t> max_failed_attempts;   // unset: try every ranked feature
  std::size_t restarts_per_candidate = 1;
  double split_fraction = 0.5;                      // share of rows used for fitting (D_A)

  void validate() const {
    trainer.validate();
    if (restarts_per_candidate < 1) throw ConfigError("restarts_per_candidate must be at least 1");
    if (max_failed_attempts && *max_failed_attempts < 1) throw ConfigError("max_failed_attempts must be at least 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  }
};

struct FeatureScore {
  std::size_t feature = 0;
  double criterion = 0.0;
  double weight = 0.0;
  double bias = 0.0;
};

/// One fitted candidate neuron and the decision taken on it.
struct CandidateRecord {
  std::size_t layer = 0;
  std::size_t feature = 0;
  double criterion = 0.0;
  double previous = 0.0;
  bool accepted = false;
};

/// Optional by-products of a training run.
struct TrainTrace {
  SplitPair split;
  std::vector<FeatureScore> ranking;
  std::vector<CandidateRecord> candidates;
};

/// Structural check of the wiring and criterion invariants; returns the first
/// violation found, or nothing.
inline std::optional<std::string> check_structure(const CascadeModel& model) {
  const std::size_t m = model.input_count();
  if (model.base_feature >= m) return "base feature out of range";
  std::set<std::size_t> fresh;
  double prev = model.c0;
  for (std::size_t l = 0; l < model.neurons.size(); ++l) {
    const auto& n = model.neurons[l];
    const std::string where = "neuron " + std::to_string(l) + ": ";
    if (n.layer != l + 1) return where + "layer number out of order";
    if (n.inputs.size() != n.layer + 1) return where + "expected " + std::to_string(n.layer + 1) + " inputs";
    if (static_cast<std::size_t>(n.weights.size()) != n.inputs.size()) return where + "weight count mismatch";
    for (std::size_t k = 0; k + 2 < n.inputs.size(); ++k)
      if (!(n.inputs[k] == InputSource::hidden(k))) return where + "hidden inputs not wired in layer order";
    if (!(n.inputs[n.inputs.size() - 2] == InputSource::feature(model.base_feature)))
      return where + "base feature input missing";
    const auto& last = n.inputs.back();
    if (last.kind != InputSource::Kind::Feature || last.index >= m || last.index == model.base_feature)
      return where + "new-feature input invalid";
    if (!fresh.insert(last.index).second) return where + "feature introduced twice";
    if (!(n.criterion >= 0.0)) return where + "negative criterion";
    if (!(n.criterion < prev)) return where + "criterion not strictly below its predecessor";
    prev = n.criterion;
  }
  return std::nullopt;
}

/// Outputs of the first `count` neurons on normalized rows `xt` (features x examples).
inline Eigen::MatrixXd hidden_outputs(const CascadeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& xt,
                                      std::size_t count) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(count), xt.cols());
  for (std::size_t l = 0; l < count; ++l) {
    const auto& n = model.neurons[l];
    Eigen::MatrixXd u(static_cast<Eigen::Index>(n.inputs.size()), xt.cols());
    for (std::size_t k = 0; k < n.inputs.size(); ++k) {
      const auto& s = n.inputs[k];
      if (s.kind == InputSource::Kind::Feature)
        u.row(static_cast<Eigen::Index>(k)) = xt.row(static_cast<Eigen::Index>(s.index));
      else
        u.row(static_cast<Eigen::Index>(k)) = z.row(static_cast<Eigen::Index>(s.index));
    }
    z.row(static_cast<Eigen::Index>(l)) = neuron_outputs(u, n.weights, n.bias).transpose();
  }
  return z;
}

/// Inputs of the next candidate neuron over normalized rows `x` (examples x
/// features): one row per accepted neuron output, then the base feature, then
/// `feature`. Result is (r+1) x n for a candidate at layer r.
inline Eigen::MatrixXd assemble_candidate_inputs(const CascadeModel& model, std::size_t feature,
                                                 const Eigen::Ref<const Eigen::MatrixXd>& x) {
  const auto m = static_cast<std::size_t>(x.cols());
  if (m != model.input_count())
    throw DataError("model expects " + std::to_string(model.input_count()) + " features, got " + std::to_string(m));
  if (feature >= m) throw DataError("feature index " + std::to_string(feature) + " out of range");
  if (feature == model.base_feature) throw DataError("the base feature cannot be offered as a new input");
  for (const auto& n : model.neurons)
    if (n.new_feature() == feature) throw DataError("feature " + std::to_string(feature) + " is already wired");

  const Eigen::MatrixXd xt = x.transpose();
  const std::size_t hidden = model.neurons.size();
  Eigen::MatrixXd u(static_cast<Eigen::Index>(hidden + 2), x.rows());
  if (hidden > 0) u.topRows(static_cast<Eigen::Index>(hidden)) = hidden_outputs(model, xt, hidden);
  u.row(static_cast<Eigen::Index>(hidden)) = xt.row(static_cast<Eigen::Index>(model.base_feature));
  u.row(static_cast<Eigen::Index>(hidden + 1)) = xt.row(static_cast<Eigen::Index>(feature));
  return u;
}

namespace detail {

inline FitResult fit_with_restarts(const Eigen::Ref<const Eigen::MatrixXd>& ua, const Eigen::VectorXd& ta,
                                   const Eigen::Ref<const Eigen::MatrixXd>& ub, const Eigen::VectorXd& tb,
                                   const GrowthConfig& cfg, Rng& rng) {
  FitResult best = fit_neuron(ua, ta, ub, tb, cfg.trainer, rng);
  for (std::size_t r = 1; r < cfg.restarts_per_candidate; ++r) {
    FitResult next = fit_neuron(ua, ta, ub, tb, cfg.trainer, rng);
    if (next.criterion < best.criterion) best = std::move(next);
  }
  return best;
}

}  // namespace detail

/// Fits one single-input neuron per feature and orders features by ascending
/// validation criterion (ties: lower index). Each feature's initial weights
/// come from a stream keyed by its name, so reordering columns reorders the
/// ranking and nothing else.
inline std::vector<FeatureScore> rank_features(const Dataset& part_a, const Dataset& part_b,
                                               const GrowthConfig& cfg, std::uint64_t seed) {
  if (part_a.rows() == 0 || part_b.rows() == 0) throw DataError("rank_features: empty fitting or validation part");
  if (part_a.features() != part_b.features()) throw DataError("rank_features: parts differ in feature count");
  const Eigen::MatrixXd xa = part_a.x.transpose();
  const Eigen::MatrixXd xb = part_b.x.transpose();
  const Eigen::VectorXd ta = part_a.targets();
  const Eigen::VectorXd tb = part_b.targets();

  std::vector<FeatureScore> scores;
  for (std::size_t j = 0; j < part_a.features(); ++j) {
    Rng rng = make_rng(seed, "rank." + part_a.feature_names[j]);
    const auto row = static_cast<Eigen::Index>(j);
    FitResult fit = detail::fit_with_restarts(xa.row(row), ta, xb.row(row), tb, cfg, rng);
    scores.push_back({j, fit.criterion, fit.weights[0], fit.bias});
  }
  std::stable_sort(scores.begin(), scores.end(),
                   [](const FeatureScore& a, const FeatureScore& b) { return a.criterion < b.criterion; });
  return scores;
}

/// Grows a cascade network on `d`.
///
/// The data are normalized and split once into a fitting part A and a
/// validation part B. Features are ranked by single-input criterion; the best
/// one becomes the base feature and its criterion is c0. Remaining features
/// are offered in rank order: each candidate sees all accepted neurons, the
/// base feature and the offered feature, and is accepted iff its validation
/// RSE is strictly below that of the last accepted neuron (c0 at first).
/// When nothing is accepted, the base feature's single-input neuron is the
/// whole model.
inline CascadeModel train(const Dataset& d, const GrowthConfig& cfg, std::uint64_t seed,
                          TrainTrace* trace = nullptr) {
  cfg.validate();
  validate(d, 2, 2);
  auto [dn, norm] = fit_normalize(d);
  SplitPair parts = split(dn, cfg.split_fraction, derive_seed(seed, "ecnn.split"));
  const Dataset part_a = subset(dn, parts.a_indices);
  const Dataset part_b = subset(dn, parts.b_indices);
  if (!has_both_classes(part_a) || !has_both_classes(part_b))
    throw DataError("degenerate dataset: fitting or validation part holds a single class");

  const auto ranking = rank_features(part_a, part_b, cfg, derive_seed(seed, "ecnn.rank"));

  CascadeModel model;
  model.norm = norm;
  model.feature_names = d.feature_names;
  model.base_feature = ranking.front().feature;
  model.c0 = ranking.front().criterion;
  model.base_weight = ranking.front().weight;
  model.base_bias = ranking.front().bias;

  const Eigen::MatrixXd xa = part_a.x.transpose();
  const Eigen::MatrixXd xb = part_b.x.transpose();
  const Eigen::VectorXd ta = part_a.targets();
  const Eigen::VectorXd tb = part_b.targets();
  const auto base_row = static_cast<Eigen::Index>(model.base_feature);

  // Outputs of accepted neurons on A and B, one row per neuron.
  Eigen::MatrixXd za(0, xa.cols());
  Eigen::MatrixXd zb(0, xb.cols());
  std::vector<bool> wired(d.features(), false);
  wired[model.base_feature] = true;

  std::vector<CandidateRecord> records;
  std::size_t failures = 0;
  std::size_t position = 1;
  const std::uint64_t candidate_seed = derive_seed(seed, "ecnn.candidate");

  while (position < ranking.size()) {
    const std::size_t feature = ranking[position].feature;
    if (wired[feature]) {
      ++position;
      continue;
    }
    const std::size_t hidden = model.neurons.size();
    const auto p = static_cast<Eigen::Index>(hidden + 2);
    Eigen::MatrixXd ua(p, xa.cols());
    Eigen::MatrixXd ub(p, xb.cols());
    ua.topRows(static_cast<Eigen::Index>(hidden)) = za;
    ub.topRows(static_cast<Eigen::Index>(hidden)) = zb;
    ua.row(p - 2) = xa.row(base_row);
    ub.row(p - 2) = xb.row(base_row);
    ua.row(p - 1) = xa.row(static_cast<Eigen::Index>(feature));
    ub.row(p - 1) = xb.row(static_cast<Eigen::Index>(feature));

    Rng rng = make_rng(candidate_seed, d.feature_names[feature], hidden);
    FitResult fit = detail::fit_with_restarts(ua, ta, ub, tb, cfg, rng);

    CascadeNeuron candidate;
    candidate.layer = hidden + 1;
    for (std::size_t l = 0; l < hidden; ++l) candidate.inputs.push_back(InputSource::hidden(l));
    candidate.inputs.push_back(InputSource::feature(model.base_feature));
    candidate.inputs.push_back(InputSource::feature(feature));
    candidate.weights = fit.weights;
    candidate.bias = fit.bias;
    candidate.criterion = fit.criterion;

    const double previous = model.final_criterion();
    const bool accept = fit.criterion < previous;
    records.push_back({candidate.layer, feature, fit.criterion, previous, accept});

    if (accept) {
      za.conservativeResize(p - 1, Eigen::NoChange);
      zb.conservativeResize(p - 1, Eigen::NoChange);
      za.row(p - 2) = neuron_outputs(ua, fit.weights, fit.bias).transpose();
      zb.row(p - 2) = neuron_outputs(ub, fit.weights, fit.bias).transpose();
      model.neurons.push_back(std::move(candidate));
      wired[feature] = true;
      failures = 0;
      if (cfg.advance_on_accept) ++position;
      continue;
    }
    ++failures;
    if (cfg.max_failed_attempts && failures >= *cfg.max_failed_attempts) break;
    ++position;
  }

  if (trace) {
    trace->split = std::move(parts);
    trace->ranking = ranking;
    trace->candidates = std::move(records);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct Prediction {
  double probability = 0.5;
  int label = 0;
};

/// Output-neuron probabilities for every row of raw (unnormalized) `x`.
inline Eigen::VectorXd predict_probabilities(const CascadeModel& model, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_count())
    throw DataError("model expects " + std::to_string(model.input_count()) + " features, got " +
                    std::to_string(x.cols()));
  Eigen::MatrixXd xt(x.cols(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) xt.col(i) = model.norm.apply(Eigen::VectorXd(x.row(i).transpose()));
  if (model.neurons.empty()) {
    const Eigen::RowVectorXd base = xt.row(static_cast<Eigen::Index>(model.base_feature));
    return base.transpose().unaryExpr([&](double v) { return sigmoid(model.base_bias + model.base_weight * v); });
  }
  const Eigen::MatrixXd z = hidden_outputs(model, xt, model.neurons.size());
  return z.row(z.rows() - 1).transpose();
}

inline Prediction predict(const CascadeModel& model, const Eigen::Ref<const Eigen::VectorXd>& x, double threshold) {
  const Eigen::MatrixXd row = x.transpose();
  const double prob = predict_probabilities(model, row)[0];
  return {prob, prob >= threshold ? 1 : 0};
}

inline Prediction predict(const CascadeModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predict(model, x, model.threshold);
}

/// Fraction of rows whose predicted class differs from the label.
inline double evaluate(const CascadeModel& model, const Dataset& d, double threshold) {
  if (d.rows() == 0) throw DataError("cannot evaluate on an empty dataset");
  const Eigen::VectorXd prob = predict_probabilities(model, d.x);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < d.rows(); ++i)
    if ((prob[static_cast<Eigen::Index>(i)] >= threshold ? 1 : 0) != d.y[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(d.rows());
}

inline double evaluate(const CascadeModel& model, const Dataset& d) { return evaluate(model, d, model.threshold); }

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr int kCascadeFormatVersion = 1;

inline nlohmann::ordered_json to_json(const CascadeModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kCascadeFormatVersion;
  j["model"] = "ecnn";
  j["base_feature"] = model.base_feature;
  j["feature_names"] = model.feature_names;
  j["norm"] = model.norm.to_json();
  j["c0"] = model.c0;
  j["base_neuron"] = {{"weight", model.base_weight}, {"bias", model.base_bias}};
  auto neurons = nlohmann::ordered_json::array();
  for (const auto& n : model.neurons) {
    nlohmann::ordered_json jn;
    jn["layer"] = n.layer;
    auto inputs = nlohmann::ordered_json::array();
    for (const auto& s : n.inputs)
      inputs.push_back({{"kind", s.kind == InputSource::Kind::Feature ? "feature" : "hidden"}, {"index", s.index}});
    jn["inputs"] = std::move(inputs);
    jn["bias"] = n.bias;
    jn["weights"] = std::vector<double>(n.weights.data(), n.weights.data() + n.weights.size());
    jn["criterion"] = n.criterion;
    neurons.push_back(std::move(jn));
  }
  j["neurons"] = std::move(neurons);
  j["threshold"] = model.threshold;
  return j;
}

inline CascadeModel cascade_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format_version").get<int>() != kCascadeFormatVersion)
      throw DataError("unsupported cascade model format_version");
    CascadeModel model;
    model.base_feature = j.at("base_feature").get<std::size_t>();
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    model.norm = NormParams::from_json(j.at("norm"));
    model.c0 = j.at("c0").get<double>();
    model.base_weight = j.at("base_neuron").at("weight").get<double>();
    model.base_bias = j.at("base_neuron").at("bias").get<double>();
    model.threshold = j.at("threshold").get<double>();
    for (const auto& jn : j.at("neurons")) {
      CascadeNeuron n;
      n.layer = jn.at("layer").get<std::size_t>();
      for (const auto& s : jn.at("inputs")) {
        const auto kind = s.at("kind").get<std::string>();
        if (kind != "feature" && kind != "hidden") throw DataError("unknown input kind '" + kind + "'");
        n.inputs.push_back({kind == "feature" ? InputSource::Kind::Feature : InputSource::Kind::Hidden,
                            s.at("index").get<std::size_t>()});
      }
      auto w = jn.at("weights").get<std::vector<double>>();
      n.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
      n.bias = jn.at("bias").get<double>();
      n.criterion = jn.at("criterion").get<double>();
      model.neurons.push_back(std::move(n));
    }
    if (static_cast<std::size_t>(model.norm.mean.size()) != model.feature_names.size())
      throw DataError("normalization length does not match feature count");
    if (auto err = check_structure(model)) throw DataError("invalid cascade model: " + *err);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed cascade model: ") + e.what());
  }
}

}  // namespace ecnn
