#pragma once

#include <vector>

#include "gbmo/booster.hpp"
#include "gbmo/synth.hpp"

namespace gbmo {

struct BenchRow {
  BoostMode mode;
  std::size_t num_outputs;
  std::size_t rounds;
  std::size_t workers;
  double seconds_per_round;
};

/// Mean wall time of `rounds` boosting rounds after one untimed warm-up
/// round. Early stopping is disabled; binning is excluded from the timing.
inline BenchRow bench_rounds(const RawDataset& ds, BoosterConfig cfg, std::size_t rounds) {
  if (rounds == 0) throw ConfigError("benchmark needs at least one round");
  cfg.early_stop_patience = 0;
  cfg.max_rounds = 1;
  (void)train(ds, nullptr, cfg);
  cfg.max_rounds = rounds;
  const auto result = train(ds, nullptr, cfg);
  double total = 0.0;
  for (const auto& h : result.history) total += h.seconds;
  return {cfg.mode, ds.num_outputs(), result.history.size(), cfg.workers,
          total / static_cast<double>(result.history.size())};
}

/// Seconds per round at d and at d * factor (targets replicated), and their
/// ratio.
struct ScalingResult {
  BenchRow base;
  BenchRow scaled;
  double ratio;
};

inline ScalingResult bench_output_scaling(const RawDataset& ds, const BoosterConfig& cfg,
                                          std::size_t rounds, std::size_t factor = 2) {
  const auto base = bench_rounds(ds, cfg, rounds);
  const auto scaled = bench_rounds(synth::replicate_targets(ds, factor), cfg, rounds);
  return {base, scaled, scaled.seconds_per_round / base.seconds_per_round};
}

}  // namespace gbmo
