#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ecnn/dataset.hpp"
#include "ecnn/error.hpp"
#include "ecnn/random.hpp"

namespace ecnn::dt {

struct DtConfig {
  std::size_t n_s = 25;      // thresholds drawn per variable at each node
  double p_min = 0.06;       // nodes with at most p_min * n rows become leaves

  void validate() const {
    if (n_s < 1) throw ConfigError("n_s must be at least 1");
    if (!(p_min > 0.0 && p_min < 1.0)) throw ConfigError("p_min must lie in (0, 1)");
  }
};

using ClassCounts = std::array<std::size_t, 2>;

/// Shannon entropy in bits of a class histogram.
inline double entropy(std::span<const std::size_t> counts) {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw DataError("entropy of an empty histogram");
  double h = 0.0;
  for (auto c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

inline double entropy(const ClassCounts& counts) { return entropy(std::span<const std::size_t>(counts)); }

/// Parent entropy minus the size-weighted child entropies.
inline double info_gain(const ClassCounts& parent, const ClassCounts& left, const ClassCounts& right) {
  const std::size_t n = parent[0] + parent[1];
  if (n == 0) throw DataError("information gain of an empty node");
  if (left[0] + right[0] != parent[0] || left[1] + right[1] != parent[1])
    throw DataError("child counts do not add up to the parent");
  double g = entropy(parent);
  for (const auto* child : {&left, &right}) {
    const std::size_t c = (*child)[0] + (*child)[1];
    if (c > 0) g -= static_cast<double>(c) / static_cast<double>(n) * entropy(*child);
  }
  return std::max(g, 0.0);
}

inline ClassCounts count_labels(std::span<const int> labels) {
  ClassCounts c{0, 0};
  for (int y : labels) ++c[static_cast<std::size_t>(y)];
  return c;
}

inline double info_gain(std::span<const int> parent, std::span<const int> left, std::span<const int> right) {
  return info_gain(count_labels(parent), count_labels(left), count_labels(right));
}

/// Uniform draw over [min, max] of the node-local values.
inline double sample_threshold(std::span<const double> values, Rng& rng) {
  if (values.empty()) throw DataError("sample_threshold: no values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (*lo == *hi) return *lo;
  std::uniform_real_distribution<double> u(*lo, *hi);
  return std::clamp(u(rng), *lo, *hi);
}

struct Partition {
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = 0.0;
};

/// Best (feature, threshold) at a node: n_s uniform thresholds per variable,
/// the best gain kept per variable, then the best variable overall. Ties go
/// to the lower feature index, then the smaller threshold.
inline Partition best_partition(const Dataset& d, std::span<const std::size_t> rows, const DtConfig& cfg, Rng& rng) {
  Partition best;
  bool have = false;
  ClassCounts parent{0, 0};
  for (auto i : rows) ++parent[static_cast<std::size_t>(d.y[i])];
  std::vector<double> values(rows.size());
  for (std::size_t j = 0; j < d.features(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    for (std::size_t k = 0; k < rows.size(); ++k) values[k] = d.x(static_cast<Eigen::Index>(rows[k]), col);
    for (std::size_t s = 0; s < cfg.n_s; ++s) {
      const double q = sample_threshold(values, rng);
      ClassCounts left{0, 0};
      for (std::size_t k = 0; k < rows.size(); ++k)
        if (values[k] <= q) ++left[static_cast<std::size_t>(d.y[rows[k]])];
      const ClassCounts right{parent[0] - left[0], parent[1] - left[1]};
      const double g = info_gain(parent, left, right);
      const bool better = !have || g > best.gain || (g == best.gain && j == best.feature && q < best.threshold);
      if (better) {
        best = {j, q, g};
        have = true;
      }
    }
  }
  return best;
}

struct Node;

struct SplitNode {
  std::size_t feature = 0;
  double threshold = 0.0;
  std::unique_ptr<Node> left;
  std::unique_ptr<Node> right;
};

struct LeafNode {
  int label = 0;
  ClassCounts counts{0, 0};
};

struct Node {
  using Split = SplitNode;
  using Leaf = LeafNode;
  std::variant<Leaf, Split> value;

  bool is_leaf() const { return std::holds_alternative<Leaf>(value); }
};

struct DtModel {
  std::unique_ptr<Node> root;
  std::vector<std::string> feature_names;

  std::size_t input_count() const { return feature_names.size(); }
};

namespace detail {

inline std::unique_ptr<Node> make_leaf(const ClassCounts& counts) {
  auto node = std::make_unique<Node>();
  node->value = Node::Leaf{counts[1] > counts[0] ? 1 : 0, counts};
  return node;
}

inline std::unique_ptr<Node> grow(const Dataset& d, std::vector<std::size_t> rows, double min_rows,
                                  const DtConfig& cfg, Rng& rng) {
  ClassCounts counts{0, 0};
  for (auto i : rows) ++counts[static_cast<std::size_t>(d.y[i])];
  const bool pure = counts[0] == 0 || counts[1] == 0;
  if (pure || static_cast<double>(rows.size()) <= min_rows) return make_leaf(counts);

  const Partition part = best_partition(d, rows, cfg, rng);
  if (!(part.gain > 0.0)) return make_leaf(counts);

  std::vector<std::size_t> left, right;
  const auto col = static_cast<Eigen::Index>(part.feature);
  for (auto i : rows) (d.x(static_cast<Eigen::Index>(i), col) <= part.threshold ? left : right).push_back(i);
  rows.clear();
  rows.shrink_to_fit();

  auto node = std::make_unique<Node>();
  Node::Split split{part.feature, part.threshold, nullptr, nullptr};
  split.left = grow(d, std::move(left), min_rows, cfg, rng);
  split.right = grow(d, std::move(right), min_rows, cfg, rng);
  node->value = std::move(split);
  return node;
}

}  // namespace detail

/// Recursive partitioning; a node becomes a leaf when it holds at most
/// p_min * n rows, is pure, or no sampled split has positive gain. Leaves
/// predict the majority class (ties: class 0).
inline DtModel build(const Dataset& d, const DtConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  validate(d, 2, 1);
  Rng rng = make_rng(seed, "dt.build");
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  DtModel model;
  model.feature_names = d.feature_names;
  model.root = detail::grow(d, std::move(rows), cfg.p_min * static_cast<double>(d.rows()), cfg, rng);
  return model;
}

/// Routes a row to its leaf; x[feature] <= threshold goes left.
inline const Node::Leaf& route(const DtModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (static_cast<std::size_t>(x.size()) != model.input_count())
    throw DataError("model expects " + std::to_string(model.input_count()) + " features, got " +
                    std::to_string(x.size()));
  const Node* node = model.root.get();
  while (const auto* s = std::get_if<Node::Split>(&node->value))
    node = x[static_cast<Eigen::Index>(s->feature)] <= s->threshold ? s->left.get() : s->right.get();
  return std::get<Node::Leaf>(node->value);
}

inline int dt_predict(const DtModel& model, const Eigen::Ref<const Eigen::VectorXd>& x) { return route(model, x).label; }

inline double error_rate(const DtModel& model, const Dataset& d) {
  if (d.rows() == 0) throw DataError("cannot evaluate on an empty dataset");
  std::size_t wrong = 0;
  for (Eigen::Index i = 0; i < d.x.rows(); ++i)
    if (dt_predict(model, d.x.row(i).transpose()) != d.y[static_cast<std::size_t>(i)]) ++wrong;
  return static_cast<double>(wrong) / static_cast<double>(d.rows());
}

inline std::size_t node_count(const Node& n) {
  if (const auto* s = std::get_if<Node::Split>(&n.value)) return 1 + node_count(*s->left) + node_count(*s->right);
  return 1;
}

inline std::size_t split_count(const Node& n) {
  if (const auto* s = std::get_if<Node::Split>(&n.value)) return 1 + split_count(*s->left) + split_count(*s->right);
  return 0;
}

inline void collect_leaves(const Node& n, std::vector<const Node::Leaf*>& out) {
  if (const auto* s = std::get_if<Node::Split>(&n.value)) {
    collect_leaves(*s->left, out);
    collect_leaves(*s->right, out);
  } else {
    out.push_back(&std::get<Node::Leaf>(n.value));
  }
}

inline std::vector<std::size_t> referenced_features(const DtModel& model) {
  std::vector<std::size_t> out;
  std::vector<const Node*> stack{model.root.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    if (const auto* s = std::get_if<Node::Split>(&n->value)) {
      out.push_back(s->feature);
      stack.push_back(s->left.get());
      stack.push_back(s->right.get());
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Model file
// ---------------------------------------------------------------------------

inline constexpr int kDtFormatVersion = 1;

inline nlohmann::ordered_json node_to_json(const Node& n) {
  nlohmann::ordered_json j;
  if (const auto* s = std::get_if<Node::Split>(&n.value)) {
    j["split"] = {{"feature", s->feature},
                  {"threshold", s->threshold},
                  {"left", node_to_json(*s->left)},
                  {"right", node_to_json(*s->right)}};
  } else {
    const auto& leaf = std::get<Node::Leaf>(n.value);
    j["leaf"] = {{"class", leaf.label}, {"counts", leaf.counts}};
  }
  return j;
}

inline std::unique_ptr<Node> node_from_json(const nlohmann::ordered_json& j, std::size_t m) {
  auto node = std::make_unique<Node>();
  if (j.contains("split")) {
    const auto& s = j.at("split");
    Node::Split split;
    split.feature = s.at("feature").get<std::size_t>();
    if (split.feature >= m) throw DataError("tree split references unknown feature");
    split.threshold = s.at("threshold").get<double>();
    split.left = node_from_json(s.at("left"), m);
    split.right = node_from_json(s.at("right"), m);
    node->value = std::move(split);
  } else {
    const auto& l = j.at("leaf");
    const int label = l.at("class").get<int>();
    if (label != 0 && label != 1) throw DataError("tree leaf class must be 0 or 1");
    node->value = Node::Leaf{label, l.at("counts").get<ClassCounts>()};
  }
  return node;
}

inline nlohmann::ordered_json to_json(const DtModel& model) {
  nlohmann::ordered_json j;
  j["format_version"] = kDtFormatVersion;
  j["model"] = "dt";
  j["feature_names"] = model.feature_names;
  j["root"] = node_to_json(*model.root);
  return j;
}

inline DtModel dt_from_json(const nlohmann::ordered_json& j) {
  try {
    if (j.at("format_version").get<int>() != kDtFormatVersion) throw DataError("unsupported tree format_version");
    DtModel model;
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    model.root = node_from_json(j.at("root"), model.feature_names.size());
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed tree model: ") + e.what());
  }
}

}  // namespace ecnn::dt
