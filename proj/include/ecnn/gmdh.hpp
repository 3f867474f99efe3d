#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ecnn/dataset.hpp"
#include "ecnn/error.hpp"
#include "ecnn/random.hpp"

namespace ecnn::gmdh {

/// Coefficients (w0, w1, w2, w3) of y = w0 + w1*u1 + w2*u2 + w3*u1*u2.
using Coeffs = std::array<double, 4>;

inline double poly_forward(const Coeffs& c, double u1, double u2) { return c[0] + c[1] * u1 + c[2] * u2 + c[3] * u1 * u2; }

struct Source {
  enum class Kind { Feature, Neuron };
  Kind kind = Kind::Feature;
  std::size_t index = 0;

  static Source feature(std::size_t j) { return {Kind::Feature, j}; }
  static Source neuron(std::size_t i) { return {Kind::Neuron, i}; }
  bool operator==(const Source&) const = default;
};

/// Seed neurons read one raw feature (parent_b empty, w2 = w3 = 0); offspring
/// read the outputs of two earlier neurons.
struct PolyNeuron {
  Source parent_a;
  std::optional<Source> parent_b;
  Coeffs coeffs{};
  double performance = 0.0;
};

struct GmdhConfig {
  std::size_t offspring_per_generation = 500;
  std::size_t max_serial_failures = 5;
  double fit_subsample = 0.5;
  std::size_t max_generations = 200;

  void validate() const {
    if (offspring_per_generation < 1) throw ConfigError("offspring_per_generation must be at least 1");
    if (max_serial_failures < 1) throw ConfigError("max_serial_failures must be at least 1");
    if (!(fit_subsample > 0.0 && fit_subsample <= 1.0)) throw ConfigError("fit_subsample must lie in (0, 1]");
    if (max_generations < 1) throw ConfigError("max_generations must be at least 1");
  }
};

struct GenerationRecord {
  std::size_t generation = 0;
  double best_performance = 0.0;
  std::size_t population_size = 0;
};

struct AcceptanceRecord {
  std::size_t generation = 0;
  double performance = 0.0;
  double parent_a_performance = 0.0;
  double parent_b_performance = 0.0;
};

struct EvolutionLog {
  std::vector<GenerationRecord> generations;
  std::vector<AcceptanceRecord> acceptances;

  std::string generations_csv() const {
    std::string out = "generation,best_performance,population_size\n";
    for (const auto& g : generations)
      out += std::to_string(g.generation) + "," + format_real(g.best_performance) + "," +
             std::to_string(g.population_size) + "\n";
    return out;
  }
};

/// The selected network: ancestors of the output neuron in creation order,
/// renumbered so that parents always precede children.
struct GmdhModel {
  std::vector<PolyNeuron> neurons;
  std::size_t output_id = 0;
  NormParams norm;
  std::vector<std::string> feature_names;

  std::size_t input_count() const { return feature_names.size(); }

  std::vector<std::size_t> referenced_features() const {
    std::vector<std::size_t> out;
    for (const auto& n : neurons)
      for (const auto& s : {std::optional<Source>(n.parent_a), n.parent_b})
        if (s && s->kind == Source::Kind::Feature) out.push_back(s->index);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
};

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<Eigen::Index> draw_rows(Eigen::Index q, double fraction, Rng& rng, Eigen::Index min_rows) {
  std::vector<Eigen::Index> rows(static_cast<std::size_t>(q));
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  const auto take = fraction >= 1.0 ? q : static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(q)));
  if (take < min_rows)
    throw DataError("least-squares fit needs at least " + std::to_string(min_rows) + " rows, subsample has " +
                    std::to_string(take));
  if (take < q) {
    for (Eigen::Index k = 0; k < take; ++k) {
      std::uniform_int_distribution<Eigen::Index> pick(k, q - 1);
      std::swap(rows[static_cast<std::size_t>(k)], rows[static_cast<std::size_t>(pick(rng))]);
    }
    rows.resize(static_cast<std::size_t>(take));
    std::sort(rows.begin(), rows.end());
  }
  return rows;
}

/// Minimum-norm least-squares solution of basis * c = targets.
inline Eigen::VectorXd min_norm_solve(const Eigen::MatrixXd& basis, const Eigen::VectorXd& targets) {
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(basis);
  Eigen::VectorXd c = cod.solve(targets);
  if (!c.allFinite()) throw NumericError("least-squares solution is not finite");
  return c;
}

}  // namespace detail

/// Least-squares fit of the two-input polynomial on a random row subsample.
/// Rank-deficient systems get the minimum-norm solution.
inline Coeffs fit_ls(const Eigen::Ref<const Eigen::VectorXd>& u1, const Eigen::Ref<const Eigen::VectorXd>& u2,
                     const Eigen::Ref<const Eigen::VectorXd>& targets, double subsample, Rng& rng) {
  if (u1.size() != u2.size() || u1.size() != targets.size()) throw DataError("fit_ls: dimension mismatch");
  const auto rows = detail::draw_rows(u1.size(), subsample, rng, 4);
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(rows.size()), 4);
  Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto i = rows[k];
    const auto r = static_cast<Eigen::Index>(k);
    basis(r, 0) = 1.0;
    basis(r, 1) = u1[i];
    basis(r, 2) = u2[i];
    basis(r, 3) = u1[i] * u2[i];
    t[r] = targets[i];
  }
  const Eigen::VectorXd c = detail::min_norm_solve(basis, t);
  return {c[0], c[1], c[2], c[3]};
}

/// Single-input fit y = w0 + w1*u; returned as (w0, w1, 0, 0).
inline Coeffs fit_ls_single(const Eigen::Ref<const Eigen::VectorXd>& u, const Eigen::Ref<const Eigen::VectorXd>& targets,
                            double subsample, Rng& rng) {
  if (u.size() != targets.size()) throw DataError("fit_ls_single: dimension mismatch");
  const auto rows = detail::draw_rows(u.size(), subsample, rng, 2);
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(rows.size()), 2);
  Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(k);
    basis(r, 0) = 1.0;
    basis(r, 1) = u[rows[k]];
    t[r] = targets[rows[k]];
  }
  const Eigen::VectorXd c = detail::min_norm_solve(basis, t);
  return {c[0], c[1], 0.0, 0.0};
}

/// Fraction of rows where (output >= 0.5) matches the label.
inline double performance(const Eigen::Ref<const Eigen::VectorXd>& outputs, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if ((outputs[static_cast<Eigen::Index>(i)] >= 0.5 ? 1 : 0) == labels[i]) ++hits;
  return labels.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(labels.size());
}

namespace detail {

inline Eigen::VectorXd neuron_output(const PolyNeuron& n, const Eigen::Ref<const Eigen::MatrixXd>& xt,
                                     const std::vector<Eigen::VectorXd>& outputs) {
  auto value = [&](const Source& s) -> Eigen::VectorXd {
    return s.kind == Source::Kind::Feature ? Eigen::VectorXd(xt.row(static_cast<Eigen::Index>(s.index)).transpose())
                                           : outputs[s.index];
  };
  const Eigen::VectorXd a = value(n.parent_a);
  const Eigen::VectorXd b = n.parent_b ? value(*n.parent_b) : Eigen::VectorXd::Zero(a.size());
  const auto& c = n.coeffs;
  return (c[0] + c[1] * a.array() + c[2] * b.array() + c[3] * a.array() * b.array()).matrix();
}

/// Ancestor closure (including `id`) over neuron parents, sorted by id.
inline std::vector<std::size_t> ancestors(const std::vector<PolyNeuron>& population, std::size_t id) {
  std::vector<bool> seen(population.size(), false);
  std::vector<std::size_t> stack{id};
  while (!stack.empty()) {
    const auto k = stack.back();
    stack.pop_back();
    if (seen[k]) continue;
    seen[k] = true;
    for (const auto& s : {std::optional<Source>(population[k].parent_a), population[k].parent_b})
      if (s && s->kind == Source::Kind::Neuron) stack.push_back(s->index);
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (seen[k]) out.push_back(k);
  return out;
}

}  // namespace detail

/// Evolves a GMDH-type polynomial network.
///
/// The population starts with one single-input neuron per feature. Each
/// generation mates `offspring_per_generation` random pairs of distinct
/// members of the current population; an offspring joins iff its validation
/// performance beats both parents. Evolution stops after
/// `max_serial_failures` consecutive generations that do not raise the best
/// performance. The result is the best performer with the fewest ancestors.
inline GmdhModel evolve(const Dataset& d_train, const Dataset& d_valid, const GmdhConfig& cfg, std::uint64_t seed,
                        EvolutionLog* log = nullptr) {
  cfg.validate();
  validate(d_train, 2, 1);
  validate(d_valid, 1, 1);
  if (d_train.features() != d_valid.features()) throw DataError("training and validation feature counts differ");
  if (!has_both_classes(d_train) || !has_both_classes(d_valid))
    throw DataError("GMDH needs both classes in training and validation data");

  auto [train_n, norm] = fit_normalize(d_train);
  const Dataset valid_n = norm.apply(d_valid);
  const Eigen::MatrixXd xt_train = train_n.x.transpose();
  const Eigen::MatrixXd xt_valid = valid_n.x.transpose();
  const Eigen::VectorXd t_train = train_n.targets();

  std::vector<PolyNeuron> population;
  std::vector<Eigen::VectorXd> out_train;
  std::vector<Eigen::VectorXd> out_valid;
  EvolutionLog local_log;

  auto admit = [&](PolyNeuron n) {
    Eigen::VectorXd ot = detail::neuron_output(n, xt_train, out_train);
    Eigen::VectorXd ov = detail::neuron_output(n, xt_valid, out_valid);
    n.performance = performance(ov, valid_n.y);
    population.push_back(std::move(n));
    out_train.push_back(std::move(ot));
    out_valid.push_back(std::move(ov));
  };

  for (std::size_t j = 0; j < d_train.features(); ++j) {
    Rng rng = make_rng(seed, "gmdh.seed", j);
    PolyNeuron n;
    n.parent_a = Source::feature(j);
    n.coeffs = fit_ls_single(xt_train.row(static_cast<Eigen::Index>(j)).transpose(), t_train, cfg.fit_subsample, rng);
    admit(std::move(n));
  }

  auto best_performance = [&] {
    double b = 0.0;
    for (const auto& n : population) b = std::max(b, n.performance);
    return b;
  };
  double best = best_performance();
  local_log.generations.push_back({0, best, population.size()});

  std::size_t failures = 0;
  for (std::size_t gen = 1; gen <= cfg.max_generations && failures < cfg.max_serial_failures; ++gen) {
    const std::size_t size = population.size();
    if (size < 2) break;
    Rng pair_rng = make_rng(seed, "gmdh.pairs", gen);
    std::uniform_int_distribution<std::size_t> pick(0, size - 1);
    std::uniform_int_distribution<std::size_t> pick_other(0, size - 2);

    std::vector<PolyNeuron> accepted;
    for (std::size_t k = 0; k < cfg.offspring_per_generation; ++k) {
      const std::size_t a = pick(pair_rng);
      std::size_t b = pick_other(pair_rng);
      if (b >= a) ++b;
      Rng fit_rng = make_rng(derive_seed(seed, "gmdh.offspring", gen), "fit", k);
      PolyNeuron child;
      child.parent_a = Source::neuron(a);
      child.parent_b = Source::neuron(b);
      child.coeffs = fit_ls(out_train[a], out_train[b], t_train, cfg.fit_subsample, fit_rng);
      const Eigen::VectorXd ov = detail::neuron_output(child, xt_valid, out_valid);
      child.performance = performance(ov, valid_n.y);
      const double pa = population[a].performance;
      const double pb = population[b].performance;
      if (child.performance > std::max(pa, pb)) {
        local_log.acceptances.push_back({gen, child.performance, pa, pb});
        accepted.push_back(std::move(child));
      }
    }
    for (auto& n : accepted) admit(std::move(n));

    const double now = best_performance();
    failures = now > best ? 0 : failures + 1;
    best = now;
    local_log.generations.push_back({gen, best, population.size()});
  }

  // Best performer; ties go to the fewest ancestors, then the earliest.
  std::size_t winner = 0;
  std::size_t winner_size = detail::ancestors(population, 0).size();
  for (std::size_t k = 1; k < population.size(); ++k) {
    if (population[k].performance < population[winner].performance) continue;
    const std::size_t size = detail::ancestors(population, k).size();
    if (population[k].performance > population[winner].performance || size < winner_size) {
      winner = k;
      winner_size = size;
    }
  }

  GmdhModel model;
  model.norm = norm;
  model.feature_names = d_train.feature_names;
  const auto keep = detail::ancestors(population, winner);
  std::vector<std::size_t> remap(population.size(), 0);
  for (std::size_t k = 0; k < keep.size(); ++k) remap[keep[k]] = k;
  for (auto id : keep) {
    PolyNeuron n = population[id];
    if (n.parent_a.kind == Source::Kind::Neuron) n.parent_a.index = remap[n.parent_a.index];
    if (n.parent_b && n.parent_b->kind == Source::Kind::Neuron) n.parent_b->index = remap[n.parent_b->index];
    model.neurons.push_back(std::move(n));
  }
  model.output_id = remap[winner];
  if (log) *log = std::move(local_log);
  return model;
}

// ---------------------------------------------------------------------------
// Inference and model file
// ---------------------------------------------------------------------------

struct GmdhPrediction {
  double score = 0.0;
  int label = 0;
};

/// Polynomial outputs of the output neuron for every row of raw `x`.
inline Eigen::VectorXd predict_scores(const GmdhModel& model, const Eigen::Ref<const Eigen::MatrixXd>& x) {
  if (static_cast<std::size_t>(x.cols()) != model.input_count())
    throw DataError("model expects " + std::to_string(model.input_count()) + " features, got " +
                    std::to_string(x.cols()));
  Eigen::MatrixXd xt(x.cols(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) xt.col(i) = model.norm.apply(Eigen::VectorXd(x.row(i).transpose()));
  std::vector<Eigen::VectorXd> outputs;
  for (std::size_t k = 0; k <= model.output_id; ++k) outputs.push_back(detail::neuron_output(model.neurons[k], xt, outputs));
  return outputs[model.output_id];
}

inline GmdhPrediction gmdh_predict(const GmdhModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  const Eigen::MatrixXd row = x.transpose();
  const double s = predict_scores(model, row)[0];
  return {s, s >= 0.5 ? 1 : 0};
}

inline double error_rate(const GmdhModel& model, const Dataset& d) {
  if (d.rows() == 0) throw DataError("cannot evaluate on an empty dataset");
  const Eigen::VectorXd s = predict_scores(model, d.x);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < d.rows(); ++i)
    if ((s[static_cast<Eigen::Index>(i)] >= 0.5 ? 1 : 0) != d.y[i]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(d.rows());
}

inline constexpr int kGmdhFormatVersion = 1;

inline nlohmann::ordered_json to_json(const GmdhModel& model) {
  auto source = [](const std::optional<Source>& s) -> nlohmann::ordered_json {
    if (!s) return nullptr;
    return {{"kind", s->kind == Source::Kind::Feature ? "feature" : "neuron"}, {"index", s->index}};
  };
  nlohmann::ordered_json j;
  j["format_version"] = kGmdhFormatVersion;
  j["model"] = "gmdh";
  j["feature_names"] = model.feature_names;
  auto neurons = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < model.neurons.size(); ++k) {
    const auto& n = model.neurons[k];
    neurons.push_back({{"id", k},
                       {"parent_a", source(n.parent_a)},
                       {"parent_b", source(n.parent_b)},
                       {"coeffs", n.coeffs},
                       {"performance", n.performance}});
  }
  j["neurons"] = std::move(neurons);
  j["output_id"] = model.output_id;
  j["norm"] = model.norm.to_json();
  return j;
}

inline GmdhModel gmdh_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format_version").get<int>() != kGmdhFormatVersion) throw DataError("unsupported GMDH format_version");
    GmdhModel model;
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    model.norm = NormParams::from_json(j.at("norm"));
    model.output_id = j.at("output_id").get<std::size_t>();
    const auto& neurons = j.at("neurons");
    auto source = [&](const nlohmann::ordered_json& s, std::size_t self) -> std::optional<Source> {
      if (s.is_null()) return std::nullopt;
      const auto kind = s.at("kind").get<std::string>();
      const auto index = s.at("index").get<std::size_t>();
      if (kind == "feature") {
        if (index >= model.feature_names.size()) throw DataError("GMDH neuron references unknown feature");
        return Source::feature(index);
      }
      if (kind != "neuron" || index >= self) throw DataError("GMDH neuron parent must precede it");
      return Source::neuron(index);
    };
    for (std::size_t k = 0; k < neurons.size(); ++k) {
      const auto& jn = neurons[k];
      if (jn.at("id").get<std::size_t>() != k) throw DataError("GMDH neuron ids must be consecutive");
      PolyNeuron n;
      auto a = source(jn.at("parent_a"), k);
      if (!a) throw DataError("GMDH neuron lacks parent_a");
      n.parent_a = *a;
      n.parent_b = source(jn.at("parent_b"), k);
      n.coeffs = jn.at("coeffs").get<Coeffs>();
      n.performance = jn.value("performance", 0.0);
      model.neurons.push_back(n);
    }
    if (model.output_id >= model.neurons.size()) throw DataError("GMDH output_id out of range");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed GMDH model: ") + e.what());
  }
}

}  // namespace ecnn::gmdh
