#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gbmo/core.hpp"
#include "gbmo/data.hpp"
#include "gbmo/histogram.hpp"
#include "gbmo/losses.hpp"
#include "gbmo/tree.hpp"

namespace gbmo {

enum class BoostMode { kMoDense, kMoSparse, kMoRestricted, kMoExact, kSoBaseline };

inline std::string_view to_string(BoostMode m) {
  switch (m) {
    case BoostMode::kMoDense: return "mo_dense";
    case BoostMode::kMoSparse: return "mo_sparse";
    case BoostMode::kMoRestricted: return "mo_restricted";
    case BoostMode::kMoExact: return "mo_exact";
    case BoostMode::kSoBaseline: return "so_baseline";
  }
  return "?";
}

inline BoostMode parse_mode(std::string_view s) {
  if (s == "mo_dense") return BoostMode::kMoDense;
  if (s == "mo_sparse") return BoostMode::kMoSparse;
  if (s == "mo_restricted") return BoostMode::kMoRestricted;
  if (s == "mo_exact") return BoostMode::kMoExact;
  if (s == "so_baseline") return BoostMode::kSoBaseline;
  throw ConfigError("unknown mode '" + std::string(s) +
                    "' (expected mo_dense, mo_sparse, mo_restricted, mo_exact or so_baseline)");
}

inline SplitMode split_mode_for(BoostMode m) {
  switch (m) {
    case BoostMode::kMoSparse: return SplitMode::kSparse;
    case BoostMode::kMoRestricted: return SplitMode::kRestricted;
    case BoostMode::kMoExact: return SplitMode::kExact;
    default: return SplitMode::kDense;
  }
}

/// max_leaves default for a given depth: floor(0.75 * 2^depth), at least 2.
inline std::size_t default_max_leaves(std::size_t max_depth) {
  const double leaves = 0.75 * std::ldexp(1.0, static_cast<int>(std::min<std::size_t>(max_depth, 30)));
  return std::max<std::size_t>(2, static_cast<std::size_t>(leaves));
}

struct BoosterConfig {
  LossKind loss = LossKind::kMse;
  BoostMode mode = BoostMode::kMoDense;
  double learning_rate = 0.1;
  double lambda = 1.0;
  std::size_t max_depth = 5;
  std::size_t max_leaves = 0;  // 0 means default_max_leaves(max_depth)
  std::size_t min_samples = 16;
  double gain_threshold = 1e-3;
  std::size_t max_bins = 32;
  std::size_t sparse_k = 0;  // required by the sparse modes
  std::size_t max_rounds = 100;
  std::size_t early_stop_patience = 25;  // 0 disables early stopping
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::size_t node_store_limit = 48;
  std::size_t exact_dim_limit = kDefaultExactDimLimit;

  std::size_t effective_max_leaves() const {
    return max_leaves ? max_leaves : default_max_leaves(max_depth);
  }

  void validate(std::size_t d) const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw ConfigError("learning_rate must be a finite value >= 0");
    }
    if (max_bins < 2) throw ConfigError("max_bins must be >= 2");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    if ((mode == BoostMode::kMoSparse || mode == BoostMode::kMoRestricted) &&
        (sparse_k < 1 || sparse_k > d)) {
      throw ConfigError("mode " + std::string(to_string(mode)) + " needs 1 <= topk <= d (topk=" +
                        std::to_string(sparse_k) + ", d=" + std::to_string(d) + ")");
    }
    tree_config(d).validate(mode == BoostMode::kSoBaseline ? 1 : d);
  }

  TreeConfig tree_config(std::size_t d) const {
    TreeConfig t;
    t.mode = split_mode_for(mode);
    t.lambda = lambda;
    t.k = is_sparse(t.mode) ? sparse_k : std::max<std::size_t>(1, d);
    t.max_depth = max_depth;
    t.max_leaves = effective_max_leaves();
    t.min_samples = min_samples;
    t.gain_threshold = gain_threshold;
    t.node_store_limit = node_store_limit;
    t.exact_dim_limit = exact_dim_limit;
    t.workers = workers;
    return t;
  }
};

/// Additive tree ensemble: raw prediction = base_score + lr * sum of trees.
struct Ensemble {
  LossKind loss = LossKind::kMse;
  BoostMode mode = BoostMode::kMoDense;
  std::size_t num_features = 0;
  std::size_t num_outputs = 0;
  double learning_rate = 0.1;
  std::vector<double> base_score;
  std::vector<Tree> trees;

  std::size_t trees_per_round() const {
    return mode == BoostMode::kSoBaseline ? num_outputs : 1;
  }

  bool operator==(const Ensemble&) const = default;
};

/// Raw scores (logits for softmax models). With `probabilities`, softmax
/// models return class probabilities instead.
inline RealMatrix predict_raw(const Ensemble& ens, const RealMatrix& features,
                              bool probabilities = false, std::size_t workers = 1) {
  if (features.cols() != ens.num_features) {
    throw DataError("input has " + std::to_string(features.cols()) + " features, model expects " +
                    std::to_string(ens.num_features));
  }
  RealMatrix out(features.rows(), ens.num_outputs);
  const std::size_t n = features.rows();
  const std::size_t block = 256;
  parallel_for((n + block - 1) / block, workers, [&](std::size_t b) {
    const std::size_t end = std::min(n, (b + 1) * block);
    for (std::size_t i = b * block; i < end; ++i) {
      auto row = out.row(i);
      for (std::size_t j = 0; j < ens.num_outputs; ++j) row[j] = ens.base_score[j];
      for (const auto& t : ens.trees) t.predict_add(features.row(i), row, ens.learning_rate);
    }
  });
  if (probabilities && ens.loss == LossKind::kSoftmax) return softmax(out);
  return out;
}

struct HistoryRecord {
  std::size_t round = 0;
  double train_loss = 0.0;
  double eval_metric = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  Ensemble ensemble;
  std::vector<HistoryRecord> history;
  std::size_t best_round = 0;
  double best_score = 0.0;  // value of the monitored quantity at best_round
  bool monitored_eval = false;
  std::size_t exact_leaf_fallbacks = 0;
};

using HistoryCallback = std::function<void(const HistoryRecord&)>;

namespace detail {

inline GradHessBuffer column_grads(const GradHessBuffer& grads, std::size_t col) {
  const std::size_t n = grads.num_samples();
  GradHessBuffer out{RealMatrix(n, 1), RealMatrix(n, 1), std::nullopt};
  for (std::size_t i = 0; i < n; ++i) {
    out.g(i, 0) = grads.g(i, col);
    out.h(i, 0) = grads.h(i, col);
  }
  return out;
}

// Moves a one-output tree onto output `col` of a d-output ensemble.
inline Tree widen_single_output(Tree tree, std::size_t col, std::size_t d) {
  auto nodes = std::move(tree.mutable_nodes());
  for (auto& n : nodes) {
    if (!n.is_leaf()) continue;
    n.leaf.columns = {col};
    n.leaf.canonicalize(d);
  }
  return Tree(d, std::move(nodes));
}

inline void add_leaf_outputs(const GrowthStats& stats, const Tree& tree, double lr,
                             RealMatrix& pred) {
  for (std::size_t l = 0; l < stats.leaf_nodes.size(); ++l) {
    const auto& leaf = tree.nodes()[stats.leaf_nodes[l]].leaf;
    for (SampleIndex i : stats.leaf_samples[l]) leaf.add_to(pred.row(i), lr);
  }
}

}  // namespace detail

/// Boosting loop. Each round fits one multi-output tree (or, in the
/// single-output baseline, one tree per output from the same prediction
/// snapshot) to the loss gradients at the current predictions. Training stops
/// at max_rounds or when the monitored quantity has not improved for
/// early_stop_patience rounds; the returned ensemble is cut at the best round.
/// The eval metric is monitored when an eval set is given, else train loss.
inline TrainResult train(const RawDataset& train_set, const RawDataset* eval_set,
                         const BoosterConfig& cfg, const HistoryCallback& on_round = {}) {
  validate_dataset(train_set);
  const std::size_t n = train_set.num_samples();
  const std::size_t d = train_set.num_outputs();
  const std::size_t m = train_set.num_features();
  if (n > std::numeric_limits<SampleIndex>::max()) throw DataError("too many samples");
  cfg.validate(d);
  if (cfg.loss == LossKind::kSoftmax) check_one_hot(train_set.targets);
  if (eval_set) {
    validate_dataset(*eval_set);
    if (eval_set->num_features() != m || eval_set->num_outputs() != d) {
      throw DataError("eval set shape does not match the training set");
    }
    if (cfg.loss == LossKind::kSoftmax) check_one_hot(eval_set->targets);
  }

  const BinMapper mapper = build_bin_mapper(train_set.features, cfg.max_bins, cfg.workers);
  const BinnedMatrix binned = bin_matrix(mapper, train_set.features, cfg.workers);
  const bool exact = cfg.mode == BoostMode::kMoExact;
  const bool so = cfg.mode == BoostMode::kSoBaseline;
  const TreeConfig tree_cfg = cfg.tree_config(so ? 1 : d);
  const MetricKind metric = default_metric(cfg.loss);

  TrainResult result;
  Ensemble& ens = result.ensemble;
  ens.loss = cfg.loss;
  ens.mode = cfg.mode;
  ens.num_features = m;
  ens.num_outputs = d;
  ens.learning_rate = cfg.learning_rate;
  ens.base_score.assign(d, 0.0);
  result.monitored_eval = eval_set != nullptr;

  std::vector<SampleIndex> all(n);
  std::iota(all.begin(), all.end(), SampleIndex{0});
  RealMatrix pred(n, d, 0.0);
  RealMatrix eval_pred;
  if (eval_set) eval_pred = RealMatrix(eval_set->num_samples(), d, 0.0);

  const bool maximize = eval_set && higher_is_better(metric);
  double best = maximize ? -std::numeric_limits<double>::infinity()
                         : std::numeric_limits<double>::infinity();
  std::size_t best_round = 0;

  for (std::size_t round = 1; round <= cfg.max_rounds; ++round) {
    const auto start = std::chrono::steady_clock::now();
    const GradHessBuffer grads = grad_hess(cfg.loss, pred, train_set.targets, exact);
    std::vector<Tree> round_trees;
    if (so) {
      std::vector<std::pair<Tree, GrowthStats>> grown(d);
      for (std::size_t j = 0; j < d; ++j) {
        const auto col = detail::column_grads(grads, j);
        GrowthStats stats;
        Tree t = grow_tree(all, binned, mapper, col, tree_cfg, &stats);
        grown[j] = {detail::widen_single_output(std::move(t), j, d), std::move(stats)};
      }
      for (auto& [t, stats] : grown) {
        detail::add_leaf_outputs(stats, t, cfg.learning_rate, pred);
        round_trees.push_back(std::move(t));
      }
    } else {
      GrowthStats stats;
      Tree t = grow_tree(all, binned, mapper, grads, tree_cfg, &stats);
      result.exact_leaf_fallbacks += stats.exact_leaf_fallbacks;
      detail::add_leaf_outputs(stats, t, cfg.learning_rate, pred);
      round_trees.push_back(std::move(t));
    }
    if (eval_set) {
      for (std::size_t i = 0; i < eval_set->num_samples(); ++i) {
        for (const auto& t : round_trees) {
          t.predict_add(eval_set->features.row(i), eval_pred.row(i), cfg.learning_rate);
        }
      }
    }
    for (auto& t : round_trees) ens.trees.push_back(std::move(t));

    HistoryRecord rec;
    rec.round = round;
    rec.train_loss = mean_loss(cfg.loss, pred, train_set.targets);
    rec.eval_metric = eval_set ? evaluate_metric(metric, eval_pred, eval_set->targets)
                               : evaluate_metric(metric, pred, train_set.targets);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_round) on_round(rec);

    const double monitored = eval_set ? rec.eval_metric : rec.train_loss;
    if (maximize ? monitored > best : monitored < best) {
      best = monitored;
      best_round = round;
    } else if (cfg.early_stop_patience > 0 && round - best_round >= cfg.early_stop_patience) {
      break;
    }
  }

  result.best_round = best_round;
  result.best_score = best;
  ens.trees.resize(best_round * ens.trees_per_round());
  return result;
}

}  // namespace gbmo
