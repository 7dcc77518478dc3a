#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>

#include "gbmo/core.hpp"
#include "gbmo/data.hpp"

namespace gbmo::synth {

inline constexpr std::size_t kFriedmanFeatures = 10;
inline constexpr std::size_t kFriedmanOutputs = 5;
inline constexpr std::size_t kProjectionFeatures = 4;
inline constexpr std::size_t kProjectionOutputs = 8;

/// sin(pi x1 x2) + 2 (x3 - 0.5)^2 + x4 + 0.5 x5; x6..x10 are unused.
inline double friedman1_target(std::span<const double> x) {
  return std::sin(std::numbers::pi * x[0] * x[1]) + 2.0 * (x[2] - 0.5) * (x[2] - 0.5) + x[3] +
         0.5 * x[4];
}

/// x ~ U(-1, 1)^10; each of the 5 outputs is f(x) plus its own 0.1 N(0, 1) noise.
inline RawDataset friedman1(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  RawDataset ds{RealMatrix(n, kFriedmanFeatures), RealMatrix(n, kFriedmanOutputs), {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : ds.features.row(i)) v = unif(rng);
    const double f = friedman1_target(ds.features.row(i));
    for (double& y : ds.targets.row(i)) y = f + 0.1 * noise(rng);
  }
  return ds;
}

/// y = W^T x with x ~ U(-1, 1)^4 and a 4 x 8 matrix W ~ U(-1, 1) drawn once
/// from the seed.
inline RawDataset random_projection(std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  RealMatrix w(kProjectionFeatures, kProjectionOutputs);
  for (double& v : w.values()) v = unif(rng);
  RawDataset ds{RealMatrix(n, kProjectionFeatures), RealMatrix(n, kProjectionOutputs), {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : ds.features.row(i)) v = unif(rng);
    for (std::size_t j = 0; j < kProjectionOutputs; ++j) {
      double y = 0.0;
      for (std::size_t p = 0; p < kProjectionFeatures; ++p) y += w(p, j) * ds.features(i, p);
      ds.targets(i, j) = y;
    }
  }
  return ds;
}

inline RawDataset generate(std::string_view kind, std::size_t n, std::uint64_t seed) {
  if (kind == "friedman1") return friedman1(n, seed);
  if (kind == "random_projection") return random_projection(n, seed);
  throw ConfigError("unknown synthetic dataset '" + std::string(kind) +
                    "' (expected friedman1 or random_projection)");
}

/// Repeats the target block `factor` times side by side.
inline RawDataset replicate_targets(const RawDataset& ds, std::size_t factor) {
  if (factor < 1) throw ConfigError("replication factor must be >= 1");
  const std::size_t d = ds.num_outputs();
  RawDataset out{ds.features, RealMatrix(ds.num_samples(), d * factor), ds.feature_names};
  for (std::size_t i = 0; i < ds.num_samples(); ++i) {
    for (std::size_t r = 0; r < factor; ++r) {
      for (std::size_t j = 0; j < d; ++j) out.targets(i, r * d + j) = ds.targets(i, j);
    }
  }
  return out;
}

}  // namespace gbmo::synth
