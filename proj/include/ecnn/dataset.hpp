#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ecnn/error.hpp"
#include "ecnn/io.hpp"
#include "ecnn/random.hpp"

namespace ecnn {

/// Binary-classification data: rows are examples, columns are features.
struct Dataset {
  Eigen::MatrixXd x;
  std::vector<int> y;
  std::vector<std::string> feature_names;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t features() const { return static_cast<std::size_t>(x.cols()); }

  Eigen::VectorXd targets() const {
    Eigen::VectorXd t(static_cast<Eigen::Index>(y.size()));
    for (std::size_t i = 0; i < y.size(); ++i) t[static_cast<Eigen::Index>(i)] = y[i];
    return t;
  }

  bool operator==(const Dataset& o) const {
    return x.rows() == o.x.rows() && x.cols() == o.x.cols() && x == o.x && y == o.y &&
           feature_names == o.feature_names;
  }
};

inline std::vector<std::string> default_feature_names(std::size_t m) {
  std::vector<std::string> names;
  names.reserve(m);
  for (std::size_t j = 0; j < m; ++j) names.push_back("f" + std::to_string(j));
  return names;
}

/// Throws DataError unless the dataset satisfies the structural invariants.
inline void validate(const Dataset& d, std::size_t min_rows = 1, std::size_t min_features = 1) {
  if (d.y.size() != d.rows()) throw DataError("target count does not match row count");
  if (d.feature_names.size() != d.features()) throw DataError("feature name count does not match column count");
  if (d.rows() < min_rows)
    throw DataError("dataset has " + std::to_string(d.rows()) + " rows, need at least " + std::to_string(min_rows));
  if (d.features() < min_features)
    throw DataError("dataset has " + std::to_string(d.features()) + " features, need at least " +
                    std::to_string(min_features));
  for (std::size_t i = 0; i < d.rows(); ++i) {
    if (d.y[i] != 0 && d.y[i] != 1) throw DataError("row " + std::to_string(i) + ": target must be 0 or 1");
  }
  if (!d.x.allFinite()) throw DataError("feature matrix contains non-finite values");
}

inline std::size_t count_positive(const Dataset& d) {
  return static_cast<std::size_t>(std::count(d.y.begin(), d.y.end(), 1));
}

inline bool has_both_classes(const Dataset& d) {
  const auto pos = count_positive(d);
  return pos > 0 && pos < d.rows();
}

/// Row subset in the given index order.
inline Dataset subset(const Dataset& d, const std::vector<std::size_t>& rows) {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), d.x.cols());
  out.y.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.x.row(static_cast<Eigen::Index>(k)) = d.x.row(static_cast<Eigen::Index>(rows[k]));
    out.y.push_back(d.y[rows[k]]);
  }
  out.feature_names = d.feature_names;
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Target column selected by header name or 0-based index.
using TargetColumn = std::variant<std::string, std::size_t>;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string{} : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const char* first = s.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Loads a dataset from comma-separated text. The first line is taken as a
/// header when any of its cells is not a number.
inline Dataset load_csv(const std::string& path, const TargetColumn& target) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");

  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(detail::split_csv_line(line));
  }
  if (lines.empty()) throw DataError("'" + path + "' is empty");

  const std::size_t width = lines.front().size();
  bool has_header = false;
  for (const auto& c : lines.front())
    if (!detail::parse_real(c)) has_header = true;

  std::size_t target_col = 0;
  if (const auto* name = std::get_if<std::string>(&target)) {
    if (!has_header) throw DataError("target column '" + *name + "' requested but '" + path + "' has no header");
    auto it = std::find(lines.front().begin(), lines.front().end(), *name);
    if (it == lines.front().end()) throw DataError("target column '" + *name + "' not found in header");
    target_col = static_cast<std::size_t>(it - lines.front().begin());
  } else {
    target_col = std::get<std::size_t>(target);
    if (target_col >= width)
      throw DataError("target column index " + std::to_string(target_col) + " out of range (" +
                      std::to_string(width) + " columns)");
  }
  if (width < 3) throw DataError("need at least 2 feature columns besides the target");

  const std::size_t first_row = has_header ? 1 : 0;
  const std::size_t n = lines.size() - first_row;
  const std::size_t m = width - 1;

  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  d.y.resize(n);
  if (has_header) {
    for (std::size_t c = 0; c < width; ++c)
      if (c != target_col) d.feature_names.push_back(lines.front()[c]);
  } else {
    d.feature_names = default_feature_names(m);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const auto& cells = lines[first_row + i];
    const std::size_t file_row = first_row + i + 1;
    if (cells.size() != width)
      throw DataError("row " + std::to_string(file_row) + ": expected " + std::to_string(width) + " cells, got " +
                      std::to_string(cells.size()));
    std::size_t j = 0;
    for (std::size_t c = 0; c < width; ++c) {
      auto v = detail::parse_real(cells[c]);
      if (!v || !std::isfinite(*v))
        throw DataError("row " + std::to_string(file_row) + ", column " + std::to_string(c) + ": cannot parse '" +
                        cells[c] + "' as a real");
      if (c == target_col) {
        if (*v != 0.0 && *v != 1.0)
          throw DataError("row " + std::to_string(file_row) + ": target value '" + cells[c] + "' is not 0 or 1");
        d.y[i] = static_cast<int>(*v);
      } else {
        d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j++)) = *v;
      }
    }
  }
  return d;
}

/// Header row of feature names followed by "label"; reals at round-trip precision.
inline std::string to_csv(const Dataset& d) {
  std::string out;
  for (const auto& name : d.feature_names) out += name + ",";
  out += "label\n";
  for (std::size_t i = 0; i < d.rows(); ++i) {
    for (std::size_t j = 0; j < d.features(); ++j) {
      out += format_real(d.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
      out += ',';
    }
    out += std::to_string(d.y[i]);
    out += '\n';
  }
  return out;
}

inline void save_csv(const Dataset& d, const std::string& path) { write_file_atomic(path, to_csv(d)); }

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Per-column affine map to zero mean and unit population variance.
struct NormParams {
  Eigen::VectorXd mean;
  Eigen::VectorXd std;
  std::vector<bool> constant;

  static constexpr double kConstantThreshold = 1e-12;

  double apply(std::size_t j, double v) const {
    const auto k = static_cast<Eigen::Index>(j);
    return constant[j] ? 0.0 : (v - mean[k]) / std[k];
  }

  Eigen::VectorXd apply(const Eigen::VectorXd& row) const {
    Eigen::VectorXd out(row.size());
    for (Eigen::Index j = 0; j < row.size(); ++j) out[j] = apply(static_cast<std::size_t>(j), row[j]);
    return out;
  }

  Dataset apply(const Dataset& d) const {
    if (d.features() != static_cast<std::size_t>(mean.size()))
      throw DataError("normalization expects " + std::to_string(mean.size()) + " features, got " +
                      std::to_string(d.features()));
    Dataset out = d;
    for (Eigen::Index i = 0; i < d.x.rows(); ++i) out.x.row(i) = apply(Eigen::VectorXd(d.x.row(i).transpose()));
    return out;
  }

  /// Inverse map; constant columns come back as their mean.
  Dataset invert(const Dataset& d) const {
    Dataset out = d;
    for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
      if (constant[static_cast<std::size_t>(j)])
        out.x.col(j).setConstant(mean[j]);
      else
        out.x.col(j) = (d.x.col(j).array() * std[j] + mean[j]).matrix();
    }
    return out;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["mean"] = std::vector<double>(mean.data(), mean.data() + mean.size());
    j["std"] = std::vector<double>(std.data(), std.data() + std.size());
    j["constant_flags"] = constant;
    return j;
  }

  static NormParams from_json(const nlohmann::ordered_json& j) {
    NormParams p;
    auto mean = j.at("mean").get<std::vector<double>>();
    auto sd = j.at("std").get<std::vector<double>>();
    p.constant = j.at("constant_flags").get<std::vector<bool>>();
    if (mean.size() != sd.size() || mean.size() != p.constant.size())
      throw DataError("normalization block has inconsistent lengths");
    p.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    p.std = Eigen::Map<Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
    return p;
  }
};

/// Fits NormParams on `d` and returns the normalized copy alongside them.
/// Columns whose population std is below 1e-12 map to zeros and are flagged.
inline std::pair<Dataset, NormParams> fit_normalize(const Dataset& d) {
  if (d.rows() < 2) throw DataError("normalization needs at least 2 rows");
  NormParams p;
  const auto m = d.x.cols();
  const auto n = static_cast<double>(d.x.rows());
  p.mean = d.x.colwise().mean().transpose();
  p.std.resize(m);
  p.constant.assign(static_cast<std::size_t>(m), false);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double var = (d.x.col(j).array() - p.mean[j]).square().sum() / n;
    const double sd = std::sqrt(var);
    if (sd < NormParams::kConstantThreshold) {
      p.constant[static_cast<std::size_t>(j)] = true;
      p.std[j] = 1.0;
    } else {
      p.std[j] = sd;
    }
  }
  return {p.apply(d), std::move(p)};
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

struct SplitPair {
  std::vector<std::size_t> a_indices;
  std::vector<std::size_t> b_indices;
  double fraction_a = 0.5;
};

/// Stratified random split into parts A and B; index lists are sorted.
inline SplitPair split(const Dataset& d, double fraction_a, std::uint64_t seed) {
  if (!(fraction_a > 0.0 && fraction_a < 1.0)) throw ConfigError("split fraction must lie in (0, 1)");
  Rng rng = make_rng(seed, "split");
  SplitPair out;
  out.fraction_a = fraction_a;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.rows(); ++i)
      if (d.y[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    auto take = static_cast<std::size_t>(std::llround(fraction_a * static_cast<double>(idx.size())));
    if (idx.size() >= 2) take = std::clamp<std::size_t>(take, 1, idx.size() - 1);
    out.a_indices.insert(out.a_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    out.b_indices.insert(out.b_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end());
  }
  if (out.a_indices.empty() || out.b_indices.empty())
    throw DataError("split with fraction " + format_real(fraction_a) + " of " + std::to_string(d.rows()) +
                    " rows leaves an empty part");
  std::sort(out.a_indices.begin(), out.a_indices.end());
  std::sort(out.b_indices.begin(), out.b_indices.end());
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic feature-selection tasks
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t n = 2000;
  std::size_t m = 72;
  std::vector<std::size_t> relevant{9, 22, 35, 59};
  double noise_std = 0.0;
  double label_flip = 0.0;
  std::uint64_t seed = 0;
};

/// What the generator knows: the relevant columns and their coefficients.
struct GroundTruth {
  std::vector<std::size_t> relevant;
  std::vector<double> coefficients;
  std::uint64_t seed = 0;
  std::size_t flip_count = 0;

  /// Generating score: sum of c_j * x_j over the relevant columns.
  double score(const Eigen::Ref<const Eigen::RowVectorXd>& row) const {
    double s = 0.0;
    for (std::size_t k = 0; k < relevant.size(); ++k) s += coefficients[k] * row[static_cast<Eigen::Index>(relevant[k])];
    return s;
  }

  /// Class assigned by the generating rule (sigmoid(score) >= 0.5).
  int classify(const Eigen::Ref<const Eigen::RowVectorXd>& row) const { return score(row) >= 0.0 ? 1 : 0; }

  double error_rate(const Dataset& d) const {
    std::size_t wrong = 0;
    for (Eigen::Index i = 0; i < d.x.rows(); ++i)
      if (classify(d.x.row(i)) != d.y[static_cast<std::size_t>(i)]) ++wrong;
    return static_cast<double>(wrong) / static_cast<double>(d.rows());
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["relevant"] = relevant;
    j["coefficients"] = coefficients;
    j["seed"] = seed;
    j["flip_count"] = flip_count;
    return j;
  }

  static GroundTruth from_json(const nlohmann::ordered_json& j) {
    GroundTruth g;
    g.relevant = j.at("relevant").get<std::vector<std::size_t>>();
    g.coefficients = j.at("coefficients").get<std::vector<double>>();
    g.seed = j.at("seed").get<std::uint64_t>();
    g.flip_count = j.at("flip_count").get<std::size_t>();
    return g;
  }
};

/// Draws i.i.d. standard-normal features, labels rows by the sign of a random
/// linear score over `relevant`, then adds feature noise and flips labels.
inline std::pair<Dataset, GroundTruth> synth_generate(const SynthSpec& spec) {
  if (spec.relevant.empty()) throw ConfigError("relevant feature set is empty");
  for (auto j : spec.relevant)
    if (j >= spec.m)
      throw ConfigError("relevant index " + std::to_string(j) + " out of range for m=" + std::to_string(spec.m));
  {
    auto sorted = spec.relevant;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw ConfigError("relevant indices must be distinct");
  }
  if (spec.n < 10 * spec.relevant.size())
    throw ConfigError("n must be at least 10 times the number of relevant features");
  if (spec.noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (!(spec.label_flip >= 0.0 && spec.label_flip <= 1.0)) throw ConfigError("label_flip must lie in [0, 1]");

  GroundTruth truth;
  truth.relevant = spec.relevant;
  truth.seed = spec.seed;
  {
    Rng rng = make_rng(spec.seed, "synth.coefficients");
    std::uniform_real_distribution<double> mag(0.5, 1.5);
    std::bernoulli_distribution neg(0.5);
    for (std::size_t k = 0; k < spec.relevant.size(); ++k) {
      const double c = mag(rng);
      truth.coefficients.push_back(neg(rng) ? -c : c);
    }
  }

  const auto n = static_cast<Eigen::Index>(spec.n);
  const auto m = static_cast<Eigen::Index>(spec.m);
  Dataset d;
  d.x.resize(n, m);
  d.y.resize(spec.n);
  d.feature_names = default_feature_names(spec.m);
  {
    Rng rng = make_rng(spec.seed, "synth.features");
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) d.x(i, j) = gauss(rng);
  }
  for (Eigen::Index i = 0; i < n; ++i) d.y[static_cast<std::size_t>(i)] = truth.classify(d.x.row(i));

  if (spec.noise_std > 0.0) {
    Rng rng = make_rng(spec.seed, "synth.noise");
    std::normal_distribution<double> gauss(0.0, spec.noise_std);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < m; ++j) d.x(i, j) += gauss(rng);
  }
  if (spec.label_flip > 0.0) {
    Rng rng = make_rng(spec.seed, "synth.flip");
    std::bernoulli_distribution flip(spec.label_flip);
    for (auto& label : d.y) {
      if (flip(rng)) {
        label = 1 - label;
        ++truth.flip_count;
      }
    }
  }
  return {std::move(d), std::move(truth)};
}

}  // namespace ecnn
