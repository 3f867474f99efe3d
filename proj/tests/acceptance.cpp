// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// figures. Exit status is non-zero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ecnn/ecnn.hpp"
#include "ecnn_cli.hpp"

using namespace ecnn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Pinned tolerances and budgets
// ---------------------------------------------------------------------------

constexpr double kOracleTol = 1e-12;           // 1: projection step vs loop implementation
constexpr std::size_t kOracleCases = 1000;
constexpr double kBudget1 = 5.0;

constexpr std::size_t kCalibSeeds = 100;       // 2, 3: separable 1-D task
constexpr std::size_t kCalibRows = 100;
constexpr std::size_t kMaxSteps = 30;
constexpr double kStepShare = 0.95;
constexpr double kBudget2 = 10.0;
constexpr double kChiTol = 1e-6;
constexpr double kBudget3 = 5.0;

constexpr std::size_t kStructureRuns = 100;    // 4
constexpr double kBudget4 = 120.0;

constexpr std::size_t kRecoverySeeds = 20;     // 5
constexpr double kOracleErrorMax = 0.07;
constexpr std::size_t kMaxFeatures = 10;
constexpr std::size_t kMinRelevant = 2;
constexpr double kRelevantShare = 0.80;
constexpr double kHeldOutErrorMax = 0.15;
constexpr double kBudget5 = 300.0;

constexpr double kResidualMax = 1e-8;          // 6
constexpr double kXorPerformance = 0.98;
constexpr double kBudget6 = 60.0;

constexpr std::size_t kTreeSeeds = 100;        // 7
constexpr double kTreeShare = 0.95;
constexpr double kBudget7 = 60.0;

constexpr double kRoundTripTol = 1e-12;        // 8
constexpr std::size_t kProbeRows = 1000;

constexpr double kCompareMargin = 0.02;        // 9
constexpr double kBudget9 = 900.0;

// ---------------------------------------------------------------------------
// Task generators
// ---------------------------------------------------------------------------

/// One feature, classes at -U(0.5, 2) and +U(0.5, 2): linearly separable
/// with a gap of width 1 around the origin.
Dataset separable_task(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "acceptance.separable");
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 1);
  d.y.resize(n);
  d.feature_names = {"x"};
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    d.y[i] = c;
    d.x(static_cast<Eigen::Index>(i), 0) = (c ? 1.0 : -1.0) * u(rng);
  }
  return d;
}

/// 1-D threshold task on [0, 1] whose class gap (0.4, 0.6) is 20% of the range.
Dataset margin_task(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "acceptance.margin");
  std::uniform_real_distribution<double> lo(0.0, 0.4), hi(0.6, 1.0);
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 1);
  d.y.resize(n);
  d.feature_names = {"x"};
  for (std::size_t i = 0; i < n; ++i) {
    const int c = static_cast<int>(i % 2);
    d.y[i] = c;
    d.x(static_cast<Eigen::Index>(i), 0) = c ? hi(rng) : lo(rng);
  }
  d.x(0, 0) = 0.0;
  d.x(1, 0) = 1.0;
  return d;
}

/// Label = 1 iff x0 and x1 share a sign; two further pure-noise features.
Dataset xor_task(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "acceptance.xor");
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.x.resize(static_cast<Eigen::Index>(n), 4);
  d.y.resize(n);
  d.feature_names = default_feature_names(4);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    d.x(r, 0) = u(rng);
    d.x(r, 1) = u(rng);
    d.x(r, 2) = g(rng);
    d.x(r, 3) = g(rng);
    d.y[i] = d.x(r, 0) * d.x(r, 1) > 0.0 ? 1 : 0;
  }
  return d;
}

SynthSpec feature_task(std::uint64_t seed, std::size_t n) {
  SynthSpec spec;
  spec.n = n;
  spec.m = 72;
  spec.relevant = {9, 22, 35, 59};
  spec.noise_std = 0.1;
  spec.label_flip = 0.05;
  spec.seed = seed;
  return spec;
}

std::string pct(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::fixed << 100.0 * v << "%";
  return s.str();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

Outcome projection_oracle() {
  Rng rng(20240601);
  std::uniform_int_distribution<int> dim(1, 8), cnt(1, 40);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> chi(0.05, 2.0);
  double worst = 0.0;
  for (std::size_t t = 0; t < kOracleCases; ++t) {
    const int p = dim(rng), q = cnt(rng);
    Eigen::MatrixXd u(p, q);
    Eigen::VectorXd w(p), eta(q);
    for (int i = 0; i < p; ++i) w[i] = g(rng);
    for (int i = 0; i < p; ++i)
      for (int k = 0; k < q; ++k) u(i, k) = g(rng);
    for (int k = 0; k < q; ++k) eta[k] = g(rng);
    const double c = chi(rng);
    // Loop form of w' = w - chi * ||U||_F^-2 * U * eta.
    double norm2 = 0.0;
    for (int i = 0; i < p; ++i)
      for (int k = 0; k < q; ++k) norm2 += u(i, k) * u(i, k);
    const Eigen::VectorXd got = projection_step(w, u, eta, c);
    for (int i = 0; i < p; ++i) {
      double s = 0.0;
      for (int k = 0; k < q; ++k) s += u(i, k) * eta[k];
      worst = std::max(worst, std::abs(got[i] - (w[i] - c / norm2 * s)));
    }
  }
  return {worst <= kOracleTol, std::to_string(kOracleCases) + " instances, max abs deviation " + num(worst)};
}

Outcome convergence_envelope() {
  std::size_t within = 0, decreased = 0, max_steps = 0;
  std::vector<std::size_t> steps;
  for (std::uint64_t s = 0; s < kCalibSeeds; ++s) {
    const Dataset d = separable_task(kCalibRows, s);
    const SplitPair parts = split(d, 0.5, derive_seed(s, "acceptance.split"));
    const Dataset a = subset(d, parts.a_indices), b = subset(d, parts.b_indices);
    Rng rng = make_rng(s, "acceptance.init");
    const FitResult f = fit_neuron(a.x.transpose(), a.targets(), b.x.transpose(), b.targets(), TrainConfig{}, rng);
    within += f.steps_taken <= kMaxSteps;
    decreased += f.criterion < f.rse_trace_b.front();
    max_steps = std::max(max_steps, f.steps_taken);
    steps.push_back(f.steps_taken);
  }
  std::sort(steps.begin(), steps.end());
  const double share = static_cast<double>(within) / kCalibSeeds;
  return {share >= kStepShare && decreased == kCalibSeeds,
          "stopped within " + std::to_string(kMaxSteps) + " steps in " + std::to_string(within) + "/" +
              std::to_string(kCalibSeeds) + " seeds (median " + std::to_string(steps[steps.size() / 2]) + ", max " +
              std::to_string(max_steps) + "); e_B decreased in " + std::to_string(decreased) + "/" +
              std::to_string(kCalibSeeds)};
}

Outcome chi_ordering() {
  std::size_t ordered = 0;
  double worst = -std::numeric_limits<double>::infinity();
  bool shared_start = true;
  for (std::uint64_t s = 0; s < kCalibSeeds; ++s) {
    const auto traces = harness::chi_sweep(separable_task(kCalibRows, s), harness::default_chis(), TrainConfig{}, s);
    for (const auto& t : traces) shared_start &= t.fit.rse_trace_b.front() == traces.front().fit.rse_trace_b.front();
    const double gap = traces.back().fit.criterion - traces.front().fit.criterion;
    ordered += gap <= kChiTol;
    worst = std::max(worst, gap);
  }
  return {ordered == kCalibSeeds && shared_start,
          "e_B(2.0) <= e_B(1.25) + 1e-6 in " + std::to_string(ordered) + "/" + std::to_string(kCalibSeeds) +
              " seeds (largest e_B(2.0) - e_B(1.25) = " + num(worst) + "); identical start: " +
              (shared_start ? "yes" : "no")};
}

Outcome cascade_structure() {
  std::size_t good = 0, empty = 0, neurons = 0;
  std::string first_problem;
  for (std::uint64_t s = 0; s < kStructureRuns; ++s) {
    const Dataset d = synth_generate(feature_task(1000 + s, 1000)).first;
    const CascadeModel m = train(d, GrowthConfig{}, s);
    bool ok = !check_structure(m).has_value();
    const auto trace = m.criterion_trace();
    for (std::size_t k = 1; k < trace.size(); ++k) ok &= trace[k] < trace[k - 1];
    for (std::size_t l = 0; l < m.neurons.size(); ++l) {
      const auto& n = m.neurons[l];
      ok &= n.layer == l + 1 && n.inputs.size() == n.layer + 1;
      for (std::size_t k = 0; k + 2 < n.inputs.size(); ++k) ok &= n.inputs[k] == InputSource::hidden(k);
      ok &= n.inputs[n.inputs.size() - 2] == InputSource::feature(m.base_feature);
    }
    empty += m.neurons.empty();
    neurons += m.neurons.size();
    if (ok) ++good;
    else if (first_problem.empty()) first_problem = "; first violation at seed " + std::to_string(s);
  }
  return {good == kStructureRuns, std::to_string(good) + "/" + std::to_string(kStructureRuns) +
                                      " models valid, " + std::to_string(neurons) + " neurons in total, " +
                                      std::to_string(empty) + " models without accepted neurons" + first_problem};
}

Outcome feature_recovery() {
  // The oracle comes first: the generating rule on the noise-free features.
  double oracle_worst = 0.0, observed_worst = 0.0;
  for (std::uint64_t s = 0; s < kRecoverySeeds; ++s) {
    SynthSpec spec = feature_task(100 + s, 3000);
    const auto [observed, truth] = synth_generate(spec);
    spec.noise_std = 0.0;
    Dataset latent = synth_generate(spec).first;
    latent.y = observed.y;
    oracle_worst = std::max(oracle_worst, truth.error_rate(latent));
    observed_worst = std::max(observed_worst, truth.error_rate(observed));
  }
  const bool oracle_ok = oracle_worst <= kOracleErrorMax;
  std::cout << "     oracle: generating rule errs at most " << pct(oracle_worst) << " on latent features ("
            << pct(observed_worst) << " on the noisy observed ones)\n";

  harness::MethodConfig cfg;
  cfg.ecnn.trainer.delta = 1e-5;
  cfg.ecnn.trainer.max_steps = 2000;
  cfg.ecnn.max_failed_attempts = 3;
  std::size_t small = 0, relevant = 0, accurate = 0;
  double worst_error = 0.0;
  std::size_t most_features = 0;
  for (std::uint64_t s = 0; s < kRecoverySeeds; ++s) {
    const auto [d, truth] = synth_generate(feature_task(100 + s, 3000));
    const SplitPair parts = split(d, 2.0 / 3.0, derive_seed(s, "acceptance.holdout"));
    const Dataset train = subset(d, parts.a_indices), test = subset(d, parts.b_indices);
    auto proc = [&](const Dataset& a, const Dataset& b, std::uint64_t seed) {
      return harness::train_and_score(harness::Method::Ecnn, cfg, a, b, seed);
    };
    const auto best = harness::multi_restart(proc, train, test, 3, s).best();
    std::size_t hits = 0;
    for (auto f : best.feature_set)
      hits += std::count(truth.relevant.begin(), truth.relevant.end(), f) > 0;
    small += best.feature_set.size() <= kMaxFeatures;
    relevant += hits >= kMinRelevant;
    accurate += best.test_error <= kHeldOutErrorMax;
    worst_error = std::max(worst_error, best.test_error);
    most_features = std::max(most_features, best.feature_set.size());
  }
  const bool pass = oracle_ok && small == kRecoverySeeds && accurate == kRecoverySeeds &&
                    static_cast<double>(relevant) / kRecoverySeeds >= kRelevantShare;
  return {pass, "oracle <= 7%: " + std::string(oracle_ok ? "yes" : "no") + "; <= 10 features in " +
                    std::to_string(small) + "/20 (max " + std::to_string(most_features) + "), >= 2 relevant in " +
                    std::to_string(relevant) + "/20, held-out error <= 15% in " + std::to_string(accurate) +
                    "/20 (worst " + pct(worst_error) + ")"};
}

Outcome paper_default_recovery() {
  // Informational: the same task with the untouched trainer defaults.
  std::size_t small = 0, relevant = 0, accurate = 0;
  for (std::uint64_t s = 0; s < kRecoverySeeds; ++s) {
    const auto [d, truth] = synth_generate(feature_task(100 + s, 3000));
    const SplitPair parts = split(d, 2.0 / 3.0, derive_seed(s, "acceptance.holdout"));
    const Dataset train = subset(d, parts.a_indices), test = subset(d, parts.b_indices);
    auto proc = [&](const Dataset& a, const Dataset& b, std::uint64_t seed) {
      return harness::train_and_score(harness::Method::Ecnn, harness::MethodConfig{}, a, b, seed);
    };
    const auto best = harness::multi_restart(proc, train, test, 3, s).best();
    std::size_t hits = 0;
    for (auto f : best.feature_set) hits += std::count(truth.relevant.begin(), truth.relevant.end(), f) > 0;
    small += best.feature_set.size() <= kMaxFeatures;
    relevant += hits >= kMinRelevant;
    accurate += best.test_error <= kHeldOutErrorMax;
  }
  return {true, "with default trainer settings: <= 10 features in " + std::to_string(small) + "/20, >= 2 relevant in " +
                    std::to_string(relevant) + "/20, error <= 15% in " + std::to_string(accurate) + "/20"};
}

Outcome gmdh_recovery() {
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  const gmdh::Coeffs truth{0.4, -1.1, 0.8, 1.7};
  Eigen::VectorXd u1(200), u2(200), t(200);
  for (int i = 0; i < 200; ++i) {
    u1[i] = g(rng);
    u2[i] = g(rng);
    t[i] = gmdh::poly_forward(truth, u1[i], u2[i]);
  }
  const gmdh::Coeffs c = gmdh::fit_ls(u1, u2, t, 1.0, rng);
  double rss = 0.0;
  for (int i = 0; i < 200; ++i) rss += std::pow(gmdh::poly_forward(c, u1[i], u2[i]) - t[i], 2);
  const double residual = std::sqrt(rss);

  const gmdh::GmdhModel model = gmdh::evolve(xor_task(800, 1), xor_task(400, 2), gmdh::GmdhConfig{}, 1);
  const double perf = 1.0 - gmdh::error_rate(model, xor_task(400, 2));
  return {residual < kResidualMax && perf >= kXorPerformance,
          "least-squares residual " + num(residual) + ", interaction task validation performance " + pct(perf)};
}

Outcome tree_contract() {
  bool exact = true;
  for (std::size_t a = 1; a <= 50; ++a)
    for (std::size_t b = 1; b <= 50; ++b) exact &= dt::info_gain({a, b}, {a, 0}, {0, b}) == dt::entropy(dt::ClassCounts{a, b});
  std::size_t perfect = 0;
  for (std::uint64_t s = 0; s < kTreeSeeds; ++s) {
    const Dataset d = margin_task(1000, s);
    perfect += dt::error_rate(dt::build(d, dt::DtConfig{}, s), d) == 0.0;
  }
  return {exact && static_cast<double>(perfect) / kTreeSeeds >= kTreeShare,
          std::string("pure-split gain equals parent entropy: ") + (exact ? "yes" : "no") +
              "; training accuracy 1.0 in " + std::to_string(perfect) + "/" + std::to_string(kTreeSeeds) + " seeds"};
}

Outcome determinism_round_trip() {
  const Dataset d = synth_generate(feature_task(77, 800)).first;
  const SplitPair parts = split(d, 0.75, 77);
  const Dataset train = subset(d, parts.a_indices), test = subset(d, parts.b_indices);
  harness::MethodConfig cfg;
  cfg.gmdh.offspring_per_generation = 100;

  bool identical = true;
  for (auto m : {harness::Method::Ecnn, harness::Method::Gmdh, harness::Method::Dt})
    identical &= harness::train_and_score(m, cfg, train, test, 5).model.dump() ==
                 harness::train_and_score(m, cfg, train, test, 5).model.dump();
  auto proc = [&](const Dataset& a, const Dataset& b, std::uint64_t seed) {
    return harness::train_and_score(harness::Method::Ecnn, cfg, a, b, seed);
  };
  identical &= harness::multi_restart(proc, train, test, 4, 9).runs_csv() ==
               harness::multi_restart(proc, train, test, 4, 9, 3).runs_csv();
  identical &= harness::kfold(d, 3, harness::Method::Dt, cfg, 2, 9).csv_rows() ==
               harness::kfold(d, 3, harness::Method::Dt, cfg, 2, 9).csv_rows();
  identical &= harness::chi_traces_csv(harness::chi_sweep(d, harness::default_chis(), TrainConfig{}, 3)) ==
               harness::chi_traces_csv(harness::chi_sweep(d, harness::default_chis(), TrainConfig{}, 3));

  Rng rng(31);
  std::normal_distribution<double> g(0.0, 2.0);
  Eigen::MatrixXd probe(kProbeRows, d.features());
  for (Eigen::Index i = 0; i < probe.rows(); ++i)
    for (Eigen::Index j = 0; j < probe.cols(); ++j) probe(i, j) = g(rng);

  double worst = 0.0;
  std::size_t label_mismatch = 0;
  const CascadeModel cm = ecnn::train(train, cfg.ecnn, 5);
  const auto cm2 = cascade_from_json(nlohmann::ordered_json::parse(to_json(cm).dump()));
  worst = std::max(worst, (predict_probabilities(cm2, probe) - predict_probabilities(cm, probe)).cwiseAbs().maxCoeff());
  const auto split_g = split(train, 0.5, 5);
  const gmdh::GmdhModel gm = gmdh::evolve(subset(train, split_g.a_indices), subset(train, split_g.b_indices), cfg.gmdh, 5);
  const auto gm2 = gmdh::gmdh_from_json(nlohmann::ordered_json::parse(to_json(gm).dump()));
  worst = std::max(worst, (gmdh::predict_scores(gm2, probe) - gmdh::predict_scores(gm, probe)).cwiseAbs().maxCoeff());
  const dt::DtModel tm = dt::build(train, cfg.dt, 5);
  const auto tm2 = dt::dt_from_json(nlohmann::ordered_json::parse(to_json(tm).dump()));
  for (Eigen::Index i = 0; i < probe.rows(); ++i)
    label_mismatch += dt::dt_predict(tm2, probe.row(i).transpose()) != dt::dt_predict(tm, probe.row(i).transpose());

  return {identical && worst <= kRoundTripTol && label_mismatch == 0,
          std::string("repeat runs byte-identical: ") + (identical ? "yes" : "no") + "; max output deviation after reload " +
              num(worst) + " over " + std::to_string(kProbeRows) + " inputs; tree label mismatches " +
              std::to_string(label_mismatch)};
}

Outcome comparative_harness() {
  const auto dir = std::filesystem::temp_directory_path() / "ecnn_acceptance_compare";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const auto data = (dir / "task.csv").string();
  save_csv(synth_generate(feature_task(2024, 2000)).first, data);
  std::ostringstream out, err;
  const int code = cli::run({"compare", "--data", data, "--folds", "5", "--inner-runs", "30", "--seed", "1",
                             "--out-dir", (dir / "cv").string()},
                            out, err);
  if (code != 0) return {false, "compare exited with " + std::to_string(code) + ": " + err.str()};
  std::map<std::string, double> mean_error;
  std::istringstream summary(read_file((dir / "cv" / "cv_summary.csv").string()));
  std::string line;
  std::getline(summary, line);
  while (std::getline(summary, line)) {
    const auto cells = ecnn::detail::split_csv_line(line);
    mean_error[cells[0]] = 1.0 - std::stod(cells[2]);
  }
  const double e = mean_error.at("ecnn"), g = mean_error.at("gmdh"), t = mean_error.at("dt");
  return {e <= t + kCompareMargin,
          "mean CV error: ECNN " + pct(e) + ", GMDH " + pct(g) + ", DT " + pct(t) + " (ECNN must be <= DT + 2pp)"};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::string name;
    std::function<Outcome()> run;
    double budget;   // seconds; 0 = no limit
  };
  const std::vector<Criterion> criteria{
      {1, "projection rule matches loop oracle", projection_oracle, kBudget1},
      {2, "convergence envelope on separable data", convergence_envelope, kBudget2},
      {3, "chi sweep ordering", chi_ordering, kBudget3},
      {4, "cascade structure over 100 trainings", cascade_structure, kBudget4},
      {5, "feature recovery on synthetic task", feature_recovery, kBudget5},
      {6, "GMDH exact recovery and interaction task", gmdh_recovery, kBudget6},
      {7, "decision-tree contract", tree_contract, kBudget7},
      {8, "determinism and model round trip", determinism_round_trip, 0.0},
      {9, "comparative harness (5 folds x 30 runs)", comparative_harness, kBudget9},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget == 0.0 || secs < c.budget;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s %d. %s -- %s [%.1fs%s]\n", pass ? "PASS" : "FAIL", c.id, c.name.c_str(), o.detail.c_str(), secs,
                c.budget == 0.0 ? "" : (in_time ? (" < " + num(c.budget) + "s").c_str() : (" over " + num(c.budget) + "s budget").c_str()));
    std::fflush(stdout);
    if (c.id == 5) {
      const Outcome info = paper_default_recovery();
      std::printf("INFO 5. %s\n", info.detail.c_str());
      std::fflush(stdout);
    }
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
