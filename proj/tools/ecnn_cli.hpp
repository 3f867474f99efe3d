#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ecnn/ecnn.hpp"

namespace ecnn::cli {

using json = nlohmann::ordered_json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// ---------------------------------------------------------------------------
// Option registry: every option of a command is bound to a variable and can
// report its resolved value, which is what the manifest records.
// ---------------------------------------------------------------------------

template <class T>
json to_config_value(const T& v) {
  return v;
}

inline json to_config_value(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline json to_config_value(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }

class Registry {
 public:
  explicit Registry(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    fields_.emplace_back(name, [&var] { return to_config_value(var); });
    return app_->add_option("--" + name, var, desc)->capture_default_str();
  }

  json resolved() const {
    json j = json::object();
    for (const auto& [name, get] : fields_) j[name] = get();
    return j;
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<json()>>> fields_;
};

/// Turns a config object back into command-line arguments; null entries are skipped.
inline std::vector<std::string> config_to_args(const json& config) {
  if (!config.is_object()) throw ConfigError("config must be a JSON object of option names to values");
  std::vector<std::string> args;
  for (const auto& [key, value] : config.items()) {
    if (value.is_null()) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_number_float()) {
      text = format_real(value.get<double>());
    } else if (value.is_number_integer() || value.is_boolean()) {
      text = value.dump();
    } else {
      throw ConfigError("config entry '" + key + "' must be a string, number or boolean");
    }
    args.push_back("--" + key);
    args.push_back(text);
  }
  return args;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

inline std::vector<std::size_t> parse_index_list(const std::string& s, const std::string& what) {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(s)) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || item.front() == '-') throw ConfigError(what + ": '" + item + "' is not a non-negative integer");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError(what + " is empty");
  return out;
}

inline std::vector<double> parse_real_list(const std::string& s, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(s)) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) throw ConfigError(what + ": '" + item + "' is not a number");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(what + " is empty");
  return out;
}

inline TargetColumn parse_target(const std::string& s) {
  if (!s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); }))
    return static_cast<std::size_t>(std::stoull(s));
  return s;
}

inline std::size_t default_jobs() {
  if (const char* env = std::getenv("ECNN_JOBS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("ECNN_JOBS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

// ---------------------------------------------------------------------------
// Shared option groups
// ---------------------------------------------------------------------------

struct TrainerFlags {
  TrainConfig cfg;

  void add(Registry& reg, bool with_chi = true) {
    if (with_chi) reg.add("chi", cfg.chi, "Projection learning rate chi");
    reg.add("delta", cfg.delta, "Stop when the validation error improves by less than this");
    reg.add("epsilon", cfg.epsilon, "Stop when the validation error reaches this level");
    reg.add("max-steps", cfg.max_steps, "Cap on projection steps per neuron");
    reg.add("init-std", cfg.init_std, "Standard deviation of the initial weights");
  }
};

struct MethodFlags {
  TrainerFlags trainer;
  harness::MethodConfig method;

  void add(Registry& reg) {
    trainer.add(reg);
    reg.add("split-a", method.ecnn.split_fraction, "ECNN: share of training rows used for fitting");
    reg.add("max-failed", method.ecnn.max_failed_attempts, "ECNN: stop after this many rejected candidates in a row");
    reg.add("neuron-restarts", method.ecnn.restarts_per_candidate, "ECNN: weight initializations per candidate");
    reg.add("offspring", method.gmdh.offspring_per_generation, "GMDH: offspring per generation");
    reg.add("max-failures", method.gmdh.max_serial_failures, "GMDH: generations without acceptance before stopping");
    reg.add("subsample", method.gmdh.fit_subsample, "GMDH: share of fitting rows drawn per least-squares fit");
    reg.add("max-generations", method.gmdh.max_generations, "GMDH: cap on generations");
    reg.add("n-s", method.dt.n_s, "DT: thresholds sampled per variable at each node");
    reg.add("p-min", method.dt.p_min, "DT: nodes with at most this share of rows become leaves");
    reg.add("fit-fraction", method.fit_fraction, "GMDH/DT: share of training rows fitted, the rest validates");
  }

  harness::MethodConfig resolved() const {
    harness::MethodConfig m = method;
    m.ecnn.trainer = trainer.cfg;
    m.validate();
    return m;
  }
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct Manifest {
  std::string command;
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json artifacts = json::object();
  json results = json::object();

  void add_input(const std::string& path) { inputs[path] = content_digest(read_file(path)); }

  void write_artifact(const std::string& path, const std::string& contents) {
    write_file_atomic(path, contents);
    artifacts[path] = content_digest(contents);
  }

  json to_json(double wall_clock) const {
    json j;
    j["format_version"] = 1;
    j["command"] = command;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["artifacts"] = artifacts;
    j["results"] = results;
    j["wall_clock_seconds"] = wall_clock;
    return j;
  }
};

inline std::string sibling_manifest(const std::string& out) { return out + ".manifest.json"; }

inline std::string in_dir(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline json features_json(const std::vector<std::size_t>& features, const std::vector<std::string>& names) {
  json j = json::array();
  for (auto f : features) j.push_back(f < names.size() ? names[f] : std::to_string(f));
  return j;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct Context {
  std::ostream& out;
  std::ostream& err;
};

struct SynthCmd {
  std::size_t n = 2000;
  std::size_t m = 72;
  std::string relevant = "9,22,35,59";
  double noise_std = 0.0;
  double flip = 0.0;
  std::uint64_t seed = 0;
  std::string out;

  void add(Registry& reg) {
    reg.add("n", n, "Number of rows");
    reg.add("m", m, "Number of features");
    reg.add("relevant", relevant, "Comma-separated indices of the informative features");
    reg.add("noise-std", noise_std, "Gaussian noise added to every feature");
    reg.add("flip", flip, "Probability of flipping each label");
    reg.add("seed", seed, "Random seed");
    reg.add("out", out, "Output dataset CSV (ground truth goes to <out>.truth.json)")->required();
  }

  void run(Manifest& mf, Context& ctx) const {
    SynthSpec spec;
    spec.n = n;
    spec.m = m;
    spec.relevant = parse_index_list(relevant, "--relevant");
    spec.noise_std = noise_std;
    spec.label_flip = flip;
    spec.seed = seed;
    auto [d, truth] = synth_generate(spec);
    mf.seeds["seed"] = seed;
    mf.write_artifact(out, to_csv(d));
    mf.write_artifact(out + ".truth.json", truth.to_json().dump(2) + "\n");
    mf.results["rows"] = d.rows();
    mf.results["positives"] = count_positive(d);
    mf.results["flip_count"] = truth.flip_count;
    ctx.out << "wrote " << out << " (" << d.rows() << " rows, " << d.features() << " features)\n";
  }
};

struct TrainCmd {
  std::string data;
  std::string target = "label";
  std::string method = "ecnn";
  MethodFlags flags;
  std::uint64_t seed = 0;
  std::size_t restarts = 1;
  std::size_t jobs = 1;
  std::string out;

  void add(Registry& reg) {
    reg.add("data", data, "Training dataset CSV")->required();
    reg.add("target", target, "Target column name or index");
    reg.add("method", method, "ecnn, gmdh or dt");
    flags.add(reg);
    reg.add("seed", seed, "Random seed");
    reg.add("restarts", restarts, "Independent training runs; the best on validation is kept");
    reg.add("jobs", jobs, "Parallel runs (default: ECNN_JOBS or 1)");
    reg.add("out", out, "Output model JSON")->required();
  }

  void run(Manifest& mf, Context& ctx) const {
    const auto m = harness::parse_method(method);
    const auto cfg = flags.resolved();
    if (m == harness::Method::Ecnn)
      for (const auto& w : cfg.ecnn.trainer.warnings()) ctx.err << "warning: " << w << "\n";
    if (restarts < 1) throw ConfigError("--restarts must be at least 1");
    const Dataset d = load_csv(data, parse_target(target));
    mf.add_input(data);
    auto proc = [&](const Dataset& tr, const Dataset& te, std::uint64_t s) {
      return harness::train_and_score(m, cfg, tr, te, s);
    };
    const auto report = harness::multi_restart(proc, d, d, restarts, seed, jobs);
    const auto& best = report.best();
    mf.seeds["seed"] = seed;
    mf.seeds["best_run_seed"] = best.seed;
    mf.write_artifact(out, best.model.dump(2) + "\n");
    mf.results["method"] = method;
    mf.results["best_run"] = report.best_run;
    mf.results["runs_ok"] = report.succeeded();
    mf.results["validation_score"] = best.validation_score;
    mf.results["train_error"] = best.train_error;
    mf.results["model_size"] = best.model_size;
    mf.results["features"] = features_json(best.feature_set, d.feature_names);
    ctx.out << method << ": train error " << format_real(best.train_error) << ", " << best.feature_set.size()
            << " features, size " << best.model_size << " -> " << out << "\n";
  }
};

struct EvaluateCmd {
  std::string model;
  std::string data;
  std::string target = "label";
  std::string out;

  void add(Registry& reg) {
    reg.add("model", model, "Model JSON")->required();
    reg.add("data", data, "Dataset CSV")->required();
    reg.add("target", target, "Target column name or index");
    reg.add("out", out, "Metrics JSON (default: print to stdout)");
  }

  void run(Manifest& mf, Context& ctx) const {
    json j;
    try {
      j = json::parse(read_file(model));
    } catch (const json::exception& e) {
      throw DataError("'" + model + "' is not valid JSON: " + e.what());
    }
    const Dataset d = load_csv(data, parse_target(target));
    mf.add_input(model);
    mf.add_input(data);
    const auto labels = harness::predict_labels_json(j, d);
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < d.rows(); ++i) {
      if (labels[i] == 1) (d.y[i] == 1 ? tp : fp)++;
      else (d.y[i] == 0 ? tn : fn)++;
    }
    json metrics;
    metrics["model"] = j.value("model", std::string{});
    metrics["rows"] = d.rows();
    metrics["error_rate"] = static_cast<double>(fp + fn) / static_cast<double>(d.rows());
    metrics["confusion"] = {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}};
    mf.results = metrics;
    if (out.empty()) ctx.out << metrics.dump(2) << "\n";
    else mf.write_artifact(out, metrics.dump(2) + "\n");
  }
};

struct CompareCmd {
  std::string data;
  std::string target = "label";
  std::string methods = "ecnn,gmdh,dt";
  std::size_t folds = 5;
  std::size_t inner_runs = 30;
  MethodFlags flags;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out_dir;

  void add(Registry& reg) {
    reg.add("data", data, "Dataset CSV")->required();
    reg.add("target", target, "Target column name or index");
    reg.add("methods", methods, "Comma-separated methods to compare");
    reg.add("folds", folds, "Cross-validation folds");
    reg.add("inner-runs", inner_runs, "Training runs per fold; the best on validation is scored");
    flags.add(reg);
    reg.add("seed", seed, "Random seed");
    reg.add("jobs", jobs, "Parallel runs (default: ECNN_JOBS or 1)");
    reg.add("out-dir", out_dir, "Directory for cv_report.csv and cv_summary.csv")->required();
  }

  void run(Manifest& mf, Context& ctx) const {
    std::vector<harness::Method> ms;
    for (const auto& s : split_list(methods)) ms.push_back(harness::parse_method(s));
    if (ms.empty()) throw ConfigError("--methods is empty");
    if (inner_runs < 1) throw ConfigError("--inner-runs must be at least 1");
    const auto cfg = flags.resolved();
    const Dataset d = load_csv(data, parse_target(target));
    mf.add_input(data);
    std::string report = harness::CvReport::csv_header();
    std::string summary = harness::CvReport::summary_header();
    for (auto m : ms) {
      const auto cv = harness::kfold(d, folds, m, cfg, inner_runs, seed, jobs);
      report += cv.csv_rows();
      summary += cv.summary_row();
      mf.results[harness::to_string(m)] = {{"mean_performance", cv.mean}, {"variance", cv.variance}};
      ctx.out << harness::to_string(m) << ": mean performance " << format_real(cv.mean) << ", variance "
              << format_real(cv.variance) << "\n";
    }
    mf.seeds["seed"] = seed;
    mf.write_artifact(in_dir(out_dir, "cv_report.csv"), report);
    mf.write_artifact(in_dir(out_dir, "cv_summary.csv"), summary);
  }
};

struct ChiSweepCmd {
  std::string data;
  std::string target = "label";
  std::string chis = "1.25,1.5,1.75,2";
  TrainerFlags trainer;
  double split_a = 0.5;
  std::uint64_t seed = 0;
  std::string out;

  void add(Registry& reg) {
    reg.add("data", data, "Dataset CSV")->required();
    reg.add("target", target, "Target column name or index");
    reg.add("chis", chis, "Comma-separated learning rates");
    trainer.add(reg, false);
    reg.add("split-a", split_a, "Share of rows used for fitting");
    reg.add("seed", seed, "Random seed");
    reg.add("out", out, "Output trace CSV")->required();
  }

  void run(Manifest& mf, Context& ctx) const {
    const auto list = parse_real_list(chis, "--chis");
    const Dataset d = load_csv(data, parse_target(target));
    mf.add_input(data);
    const auto traces = harness::chi_sweep(d, list, trainer.cfg, seed, split_a);
    mf.seeds["seed"] = seed;
    mf.write_artifact(out, harness::chi_traces_csv(traces));
    json finals = json::array();
    for (const auto& t : traces) {
      finals.push_back({{"chi", t.chi}, {"steps", t.fit.steps_taken}, {"final_e_b", t.fit.criterion}});
      ctx.out << "chi " << format_real(t.chi) << ": " << t.fit.steps_taken << " steps, e_B "
              << format_real(t.fit.criterion) << "\n";
    }
    mf.results["traces"] = finals;
  }
};

struct RestartsCmd {
  std::string data;
  std::string test_data;
  std::string target = "label";
  double test_fraction = 0.2;
  std::string method = "ecnn";
  MethodFlags flags;
  std::size_t runs = 30;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::string out_dir;

  void add(Registry& reg) {
    reg.add("data", data, "Training dataset CSV")->required();
    reg.add("test-data", test_data, "Test dataset CSV (default: hold out --test-fraction of --data)");
    reg.add("target", target, "Target column name or index");
    reg.add("test-fraction", test_fraction, "Held-out share when no --test-data is given");
    reg.add("method", method, "ecnn, gmdh or dt");
    flags.add(reg);
    reg.add("runs", runs, "Independent training runs");
    reg.add("seed", seed, "Random seed");
    reg.add("jobs", jobs, "Parallel runs (default: ECNN_JOBS or 1)");
    reg.add("out-dir", out_dir, "Directory for the run report, histograms and best model")->required();
  }

  void run(Manifest& mf, Context& ctx) const {
    const auto m = harness::parse_method(method);
    const auto cfg = flags.resolved();
    const auto target_col = parse_target(target);
    Dataset train, test;
    const Dataset d = load_csv(data, target_col);
    mf.add_input(data);
    if (test_data.empty()) {
      if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("--test-fraction must lie in (0, 1)");
      const SplitPair parts = split(d, 1.0 - test_fraction, derive_seed(seed, "test.split"));
      train = subset(d, parts.a_indices);
      test = subset(d, parts.b_indices);
    } else {
      train = d;
      test = load_csv(test_data, target_col);
      mf.add_input(test_data);
    }
    auto proc = [&](const Dataset& tr, const Dataset& te, std::uint64_t s) {
      return harness::train_and_score(m, cfg, tr, te, s);
    };
    const auto report = harness::multi_restart(proc, train, test, runs, seed, jobs);
    const auto& best = report.best();
    mf.seeds["seed"] = seed;
    mf.seeds["best_run_seed"] = best.seed;
    mf.write_artifact(in_dir(out_dir, "restart_report.csv"), report.runs_csv());
    mf.write_artifact(in_dir(out_dir, "feature_freq.csv"), report.feature_freq_csv());
    mf.write_artifact(in_dir(out_dir, "size_hist.csv"), report.size_hist_csv());
    mf.write_artifact(in_dir(out_dir, "error_hist.csv"), report.error_hist_csv());
    mf.write_artifact(in_dir(out_dir, "best_model.json"), best.model.dump(2) + "\n");
    mf.results["best_run"] = report.best_run;
    mf.results["runs_ok"] = report.succeeded();
    mf.results["train_error"] = best.train_error;
    mf.results["test_error"] = best.test_error;
    mf.results["features"] = features_json(best.feature_set, train.feature_names);
    ctx.out << report.succeeded() << "/" << runs << " runs succeeded; best run " << report.best_run << " test error "
            << format_real(best.test_error) << "\n";
  }
};

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

namespace detail {

/// Expands `--config FILE` into the options it stores. The file may be a
/// manifest (its "config" object is used) or a bare config object. Expanded
/// options come first so explicit flags override them.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> head, tail;
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw ConfigError("--config needs a file argument");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      (head.empty() ? head : tail).push_back(args[i]);
    }
  }
  if (!path) return args;
  json j;
  try {
    j = json::parse(read_file(*path));
  } catch (const json::exception& e) {
    throw ConfigError("config file '" + *path + "' is not valid JSON: " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  const json& config = j.contains("config") ? j.at("config") : j;
  if (head.empty() && j.contains("command")) head.push_back(j.at("command").get<std::string>());
  if (head.empty()) throw ConfigError("no subcommand given");
  std::vector<std::string> expanded = head;
  for (auto& a : config_to_args(config)) expanded.push_back(std::move(a));
  expanded.insert(expanded.end(), tail.begin(), tail.end());
  return expanded;
}

inline int replay(const std::string& manifest_path, Context& ctx) {
  json j;
  try {
    j = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    throw DataError("'" + manifest_path + "' is not valid JSON: " + e.what());
  }
  if (!j.contains("command") || !j.contains("config")) throw DataError("'" + manifest_path + "' is not a run manifest");
  const json recorded = j.value("artifacts", json::object());
  std::vector<std::string> args{j.at("command").get<std::string>()};
  for (auto& a : config_to_args(j.at("config"))) args.push_back(std::move(a));
  args.push_back("--manifest");
  args.push_back(manifest_path);
  const int code = run(args, ctx.out, ctx.err);
  if (code != kExitOk) return code;
  std::size_t mismatched = 0;
  for (const auto& [path, digest] : recorded.items()) {
    const std::string now = content_digest(read_file(path));
    if (now != digest.get<std::string>()) {
      ctx.err << "replay: " << path << " differs from the recorded run\n";
      ++mismatched;
    }
  }
  if (mismatched) throw DataError("replay reproduced " + std::to_string(recorded.size() - mismatched) + " of " +
                                  std::to_string(recorded.size()) + " artifacts");
  ctx.out << "replay: all " << recorded.size() << " artifacts identical\n";
  return kExitOk;
}

}  // namespace detail

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  Context ctx{out, err};
  try {
    args = detail::expand_config(args);

    CLI::App app{"Evolving cascade neural networks with GMDH and decision-tree baselines"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.set_version_flag("--version", "ecnn 1.0");

    std::string manifest_override;
    std::string replay_path;
    const std::size_t jobs = default_jobs();

    SynthCmd synth;
    TrainCmd train;
    EvaluateCmd evaluate;
    CompareCmd compare;
    ChiSweepCmd chi;
    RestartsCmd restarts;
    train.jobs = compare.jobs = restarts.jobs = jobs;

    struct Entry {
      CLI::App* app;
      Registry reg;
      std::function<void(Manifest&)> run;
      std::function<std::string()> manifest_path;
    };
    std::vector<Entry> entries;
    auto make = [&](const std::string& name, const std::string& desc, auto& cmd, auto manifest_path) {
      CLI::App* sub = app.add_subcommand(name, desc);
      Entry e{sub, Registry(sub), [&cmd, &ctx](Manifest& mf) { cmd.run(mf, ctx); }, manifest_path};
      cmd.add(e.reg);
      sub->add_option("--manifest", manifest_override, "Where to write the run manifest");
      entries.push_back(std::move(e));
    };
    make("synth", "Generate a synthetic feature-selection dataset", synth, [&] { return sibling_manifest(synth.out); });
    make("train", "Train a model", train, [&] { return sibling_manifest(train.out); });
    make("evaluate", "Score a model on a dataset", evaluate,
         [&] { return evaluate.out.empty() ? std::string{} : sibling_manifest(evaluate.out); });
    make("compare", "Cross-validate ECNN against the baselines", compare,
         [&] { return in_dir(compare.out_dir, "manifest.json"); });
    make("chi-sweep", "Record validation-error traces for several learning rates", chi,
         [&] { return sibling_manifest(chi.out); });
    make("restarts", "Repeat training from independent seeds and summarize", restarts,
         [&] { return in_dir(restarts.out_dir, "manifest.json"); });
    CLI::App* replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest and compare outputs");
    replay->add_option("manifest", replay_path, "Manifest JSON")->required();

    try {
      std::vector<std::string> reversed(args.rbegin(), args.rend());
      app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForVersion& e) {
      out << e.what() << "\n";
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() == 0) {
        out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return kExitOk;
      }
      err << "error: " << e.what() << "\n";
      return kExitConfig;
    }

    if (replay->parsed()) return detail::replay(replay_path, ctx);

    for (auto& e : entries) {
      if (!e.app->parsed()) continue;
      const auto start = std::chrono::steady_clock::now();
      Manifest mf;
      mf.command = e.app->get_name();
      mf.config = e.reg.resolved();
      e.run(mf);
      const std::string path = manifest_override.empty() ? e.manifest_path() : manifest_override;
      if (!path.empty()) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_file_atomic(path, mf.to_json(secs).dump(2) + "\n");
      }
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace ecnn::cli
