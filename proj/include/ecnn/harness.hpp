#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ecnn/cascade.hpp"
#include "ecnn/dataset.hpp"
#include "ecnn/dtree.hpp"
#include "ecnn/error.hpp"
#include "ecnn/gmdh.hpp"
#include "ecnn/io.hpp"
#include "ecnn/projection.hpp"
#include "ecnn/random.hpp"

namespace ecnn::harness {

/// Calls f(i) for i in [0, count) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t count, std::size_t jobs, F&& f) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) f(i);
    });
  for (auto& th : pool) th.join();
}

enum class Method { Ecnn, Gmdh, Dt };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Ecnn: return "ecnn";
    case Method::Gmdh: return "gmdh";
    case Method::Dt: return "dt";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "ecnn") return Method::Ecnn;
  if (s == "gmdh") return Method::Gmdh;
  if (s == "dt") return Method::Dt;
  throw ConfigError("unknown method '" + s + "' (expected ecnn, gmdh or dt)");
}

struct MethodConfig {
  GrowthConfig ecnn;
  gmdh::GmdhConfig gmdh;
  dt::DtConfig dt;
  double fit_fraction = 0.5;   // baselines: share of training rows fitted, the rest validates

  void validate() const {
    ecnn.validate();
    gmdh.validate();
    dt.validate();
    if (!(fit_fraction > 0.0 && fit_fraction < 1.0)) throw ConfigError("fit fraction must lie in (0, 1)");
  }
};

/// Result of one training run. `validation_score` is lower-is-better: the
/// cascade's final criterion, or the baselines' validation error rate.
struct RunOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double validation_score = std::numeric_limits<double>::infinity();
  double train_error = 0.0;
  double test_error = 0.0;
  std::size_t model_size = 0;
  std::vector<std::size_t> feature_set;
  std::vector<double> criterion_trace;
  nlohmann::ordered_json model;
};

/// Deserializes any model file produced here and predicts a label per row of `d`.
inline std::vector<int> predict_labels_json(const nlohmann::ordered_json& j, const Dataset& d) {
  const auto kind = j.value("model", std::string{});
  std::vector<int> out(d.rows());
  if (kind == "ecnn") {
    const CascadeModel model = cascade_from_json(j);
    const Eigen::VectorXd p = predict_probabilities(model, d.x);
    for (std::size_t i = 0; i < d.rows(); ++i) out[i] = p[static_cast<Eigen::Index>(i)] >= model.threshold ? 1 : 0;
  } else if (kind == "gmdh") {
    const Eigen::VectorXd s = gmdh::predict_scores(gmdh::gmdh_from_json(j), d.x);
    for (std::size_t i = 0; i < d.rows(); ++i) out[i] = s[static_cast<Eigen::Index>(i)] >= 0.5 ? 1 : 0;
  } else if (kind == "dt") {
    const dt::DtModel model = dt::dt_from_json(j);
    for (std::size_t i = 0; i < d.rows(); ++i)
      out[i] = dt::dt_predict(model, d.x.row(static_cast<Eigen::Index>(i)).transpose());
  } else {
    throw DataError("unknown model kind '" + kind + "'");
  }
  return out;
}

/// Deserializes any model file produced here and returns its error rate on `d`.
inline double evaluate_model_json(const nlohmann::ordered_json& j, const Dataset& d) {
  const auto kind = j.value("model", std::string{});
  if (kind == "ecnn") return evaluate(cascade_from_json(j), d);
  if (kind == "gmdh") return gmdh::error_rate(gmdh::gmdh_from_json(j), d);
  if (kind == "dt") return dt::error_rate(dt::dt_from_json(j), d);
  throw DataError("unknown model kind '" + kind + "'");
}

/// Trains one model with `method` on `train` and scores it on `test`.
inline RunOutcome train_and_score(Method method, const MethodConfig& cfg, const Dataset& train, const Dataset& test,
                                  std::uint64_t seed) {
  RunOutcome out;
  out.seed = seed;
  switch (method) {
    case Method::Ecnn: {
      const CascadeModel model = ecnn::train(train, cfg.ecnn, seed);
      out.validation_score = model.final_criterion();
      out.train_error = evaluate(model, train);
      out.test_error = evaluate(model, test);
      out.model_size = model.neurons.size();
      out.feature_set = model.referenced_features();
      out.criterion_trace = model.criterion_trace();
      out.model = to_json(model);
      break;
    }
    case Method::Gmdh: {
      const SplitPair parts = split(train, cfg.fit_fraction, derive_seed(seed, "gmdh.split"));
      const Dataset fit = subset(train, parts.a_indices);
      const Dataset valid = subset(train, parts.b_indices);
      gmdh::EvolutionLog log;
      const gmdh::GmdhModel model = gmdh::evolve(fit, valid, cfg.gmdh, seed, &log);
      out.validation_score = gmdh::error_rate(model, valid);
      out.train_error = gmdh::error_rate(model, train);
      out.test_error = gmdh::error_rate(model, test);
      out.model_size = model.neurons.size();
      out.feature_set = model.referenced_features();
      for (const auto& g : log.generations) out.criterion_trace.push_back(1.0 - g.best_performance);
      out.model = to_json(model);
      break;
    }
    case Method::Dt: {
      const SplitPair parts = split(train, cfg.fit_fraction, derive_seed(seed, "dt.split"));
      const Dataset fit = subset(train, parts.a_indices);
      const Dataset valid = subset(train, parts.b_indices);
      const dt::DtModel model = dt::build(fit, cfg.dt, seed);
      out.validation_score = dt::error_rate(model, valid);
      out.train_error = dt::error_rate(model, train);
      out.test_error = dt::error_rate(model, test);
      out.model_size = dt::node_count(*model.root);
      out.feature_set = dt::referenced_features(model);
      out.model = to_json(model);
      break;
    }
  }
  out.ok = true;
  return out;
}

// ---------------------------------------------------------------------------
// Multi-restart
// ---------------------------------------------------------------------------

struct RestartReport {
  std::vector<RunOutcome> runs;
  std::size_t best_run = 0;
  std::vector<std::string> feature_names;

  const RunOutcome& best() const { return runs[best_run]; }

  std::size_t succeeded() const {
    return static_cast<std::size_t>(std::count_if(runs.begin(), runs.end(), [](const auto& r) { return r.ok; }));
  }

  std::string runs_csv() const {
    auto join = [](const auto& xs, auto fmt) {
      std::string s;
      for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ";" : "") + fmt(xs[i]);
      return s;
    };
    std::string out = "run,seed,status,validation_score,train_error,test_error,model_size,features,criterion_trace\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto& r = runs[i];
      out += std::to_string(i) + "," + std::to_string(r.seed) + "," + (r.ok ? "ok" : "failed") + ",";
      if (r.ok) {
        out += format_real(r.validation_score) + "," + format_real(r.train_error) + "," + format_real(r.test_error) +
               "," + std::to_string(r.model_size) + "," +
               join(r.feature_set, [](std::size_t v) { return std::to_string(v); }) + "," +
               join(r.criterion_trace, [](double v) { return format_real(v); });
      } else {
        out += ",,,,,";
      }
      out += "\n";
    }
    return out;
  }

  /// How many successful runs referenced each feature.
  std::string feature_freq_csv() const {
    std::vector<std::size_t> freq(feature_names.size(), 0);
    for (const auto& r : runs)
      if (r.ok)
        for (auto j : r.feature_set)
          if (j < freq.size()) ++freq[j];
    std::string out = "feature,name,count\n";
    for (std::size_t j = 0; j < freq.size(); ++j)
      out += std::to_string(j) + "," + feature_names[j] + "," + std::to_string(freq[j]) + "\n";
    return out;
  }

  std::string size_hist_csv() const {
    std::map<std::size_t, std::size_t> hist;
    for (const auto& r : runs)
      if (r.ok) ++hist[r.model_size];
    std::string out = "model_size,count\n";
    for (const auto& [size, count] : hist) out += std::to_string(size) + "," + std::to_string(count) + "\n";
    return out;
  }

  /// Error histogram in one-percentage-point bins [k/100, (k+1)/100).
  std::string error_hist_csv() const {
    std::map<long, std::pair<std::size_t, std::size_t>> hist;
    auto bin = [](double e) { return static_cast<long>(std::floor(e * 100.0 + 1e-9)); };
    for (const auto& r : runs) {
      if (!r.ok) continue;
      ++hist[bin(r.train_error)].first;
      ++hist[bin(r.test_error)].second;
    }
    std::string out = "bin_lower,bin_upper,train_count,test_count\n";
    for (const auto& [k, counts] : hist)
      out += format_real(static_cast<double>(k) / 100.0) + "," + format_real(static_cast<double>(k + 1) / 100.0) +
             "," + std::to_string(counts.first) + "," + std::to_string(counts.second) + "\n";
    return out;
  }
};

/// Runs `proc(train, test, seed)` `runs` times with derived seeds and keeps
/// the run with the lowest validation score (ties: lower index). Failed runs
/// are recorded; the call throws only if every run fails.
template <class TrainProc>
RestartReport multi_restart(TrainProc&& proc, const Dataset& d_train, const Dataset& d_test, std::size_t runs,
                            std::uint64_t base_seed, std::size_t jobs = 1) {
  if (runs < 1) throw ConfigError("runs must be at least 1");
  RestartReport report;
  report.feature_names = d_train.feature_names;
  report.runs.resize(runs);
  parallel_for(runs, jobs, [&](std::size_t i) {
    const std::uint64_t seed = derive_seed(base_seed, "restart", i);
    try {
      report.runs[i] = proc(d_train, d_test, seed);
      report.runs[i].seed = seed;
    } catch (const std::exception& e) {
      report.runs[i] = RunOutcome{};
      report.runs[i].seed = seed;
      report.runs[i].error = e.what();
    }
  });
  bool any = false;
  for (std::size_t i = 0; i < runs; ++i) {
    const auto& r = report.runs[i];
    if (!r.ok) continue;
    if (!any || r.validation_score < report.runs[report.best_run].validation_score) report.best_run = i;
    any = true;
  }
  if (!any) throw DataError("all " + std::to_string(runs) + " runs failed; first error: " + report.runs[0].error);
  return report;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
inline std::vector<std::vector<std::size_t>> stratified_folds(const Dataset& d, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("need at least 2 folds");
  if (d.rows() < k) throw DataError("cannot make " + std::to_string(k) + " folds from " + std::to_string(d.rows()) + " rows");
  Rng rng = make_rng(seed, "folds");
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t dealt = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < d.rows(); ++i)
      if (d.y[i] == cls) idx.push_back(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (auto i : idx) folds[dealt++ % k].push_back(i);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct FoldResult {
  std::size_t fold = 0;
  double performance = 0.0;   // 1 - test error of the best-on-validation model
  std::uint64_t best_seed = 0;
  double validation_score = 0.0;
  std::size_t model_size = 0;
};

struct CvReport {
  Method method = Method::Ecnn;
  std::vector<FoldResult> folds;
  double mean = 0.0;
  double variance = 0.0;   // population variance over folds

  static std::string csv_header() { return "method,fold,performance,test_error,model_size,best_seed,validation_score\n"; }

  std::string csv_rows() const {
    std::string out;
    for (const auto& f : folds)
      out += to_string(method) + "," + std::to_string(f.fold) + "," + format_real(f.performance) + "," +
             format_real(1.0 - f.performance) + "," + std::to_string(f.model_size) + "," +
             std::to_string(f.best_seed) + "," + format_real(f.validation_score) + "\n";
    return out;
  }

  static std::string summary_header() { return "method,folds,mean_performance,variance\n"; }

  std::string summary_row() const {
    return to_string(method) + "," + std::to_string(folds.size()) + "," + format_real(mean) + "," +
           format_real(variance) + "\n";
  }
};

inline std::pair<double, double> mean_and_variance(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, var / static_cast<double>(xs.size())};
}

/// k-fold cross-validation: per fold, `inner_runs` restarts on the remaining
/// rows pick the best-on-validation model, which is then scored on the fold.
inline CvReport kfold(const Dataset& d, std::size_t k, Method method, const MethodConfig& cfg, std::size_t inner_runs,
                      std::uint64_t seed, std::size_t jobs = 1) {
  cfg.validate();
  validate(d, 2, 1);
  const auto folds = stratified_folds(d, k, seed);
  CvReport report;
  report.method = method;
  std::vector<double> perf;
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<std::size_t> rest;
    for (std::size_t g = 0; g < k; ++g)
      if (g != f) rest.insert(rest.end(), folds[g].begin(), folds[g].end());
    std::sort(rest.begin(), rest.end());
    const Dataset train = subset(d, rest);
    const Dataset test = subset(d, folds[f]);
    if (!has_both_classes(train)) throw DataError("fold " + std::to_string(f) + ": a class is absent from the training rows");
    auto proc = [&](const Dataset& tr, const Dataset& te, std::uint64_t s) { return train_and_score(method, cfg, tr, te, s); };
    const RestartReport restarts = multi_restart(proc, train, test, inner_runs, derive_seed(seed, "fold", f), jobs);
    const auto& best = restarts.best();
    report.folds.push_back({f, 1.0 - best.test_error, best.seed, best.validation_score, best.model_size});
    perf.push_back(1.0 - best.test_error);
  }
  std::tie(report.mean, report.variance) = mean_and_variance(perf);
  return report;
}

// ---------------------------------------------------------------------------
// Learning-rate sweep
// ---------------------------------------------------------------------------

inline const std::vector<double>& default_chis() {
  static const std::vector<double> chis{1.25, 1.5, 1.75, 2.0};
  return chis;
}

struct ChiTrace {
  double chi = 0.0;
  FitResult fit;
};

inline std::string chi_traces_csv(const std::vector<ChiTrace>& traces) {
  std::string out = "chi,step,e_b\n";
  for (const auto& t : traces)
    for (std::size_t k = 0; k < t.fit.rse_trace_b.size(); ++k)
      out += format_real(t.chi) + "," + std::to_string(k) + "," + format_real(t.fit.rse_trace_b[k]) + "\n";
  return out;
}

/// Fits one neuron over all features of `d` for each learning rate, from the
/// same initial weights and the same fitting/validation split.
inline std::vector<ChiTrace> chi_sweep(const Dataset& d, const std::vector<double>& chis, const TrainConfig& cfg,
                                       std::uint64_t seed, double split_fraction = 0.5) {
  if (chis.empty()) throw ConfigError("chi list is empty");
  for (double c : chis)
    if (!(c > 0.0 && c <= 2.0)) throw ConfigError("each chi must lie in (0, 2], got " + format_real(c));
  validate(d, 2, 1);
  auto [dn, norm] = fit_normalize(d);
  const SplitPair parts = split(dn, split_fraction, derive_seed(seed, "chi.split"));
  const Dataset a = subset(dn, parts.a_indices);
  const Dataset b = subset(dn, parts.b_indices);
  Rng rng = make_rng(seed, "chi.init");
  const Eigen::VectorXd w0 = initial_weights(static_cast<Eigen::Index>(d.features()), cfg.init_std, rng);
  std::vector<ChiTrace> out;
  for (double c : chis) {
    TrainConfig run = cfg;
    run.chi = c;
    out.push_back({c, fit_neuron_from(a.x.transpose(), a.targets(), b.x.transpose(), b.targets(), run, w0)});
  }
  return out;
}

}  // namespace ecnn::harness
