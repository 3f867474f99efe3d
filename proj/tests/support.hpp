#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "ecnn/ecnn.hpp"

namespace ecnn::testing {

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("ecnn_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// One feature, classes at -U(0.5, 2) and +U(0.5, 2): separable with margin 1.
inline Dataset separable_1d(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "test.separable");
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

inline Dataset small_synth(std::uint64_t seed, std::size_t n = 400, std::size_t m = 12, double flip = 0.05) {
  SynthSpec spec;
  spec.n = n;
  spec.m = m;
  spec.relevant = {0, 1};
  spec.noise_std = 0.1;
  spec.label_flip = flip;
  spec.seed = seed;
  return synth_generate(spec).first;
}

}  // namespace ecnn::testing
