#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gbmo/core.hpp"
#include "gbmo/data.hpp"
#include "gbmo/histogram.hpp"
#include "gbmo/linalg.hpp"
#include "gbmo/split.hpp"
#include "gbmo/topk.hpp"

namespace gbmo {

/// Leaf output. Dense when `columns` is empty (weights has one entry per
/// output); otherwise weights[i] belongs to output columns[i] and every other
/// output is zero.
struct LeafValue {
  std::vector<std::size_t> columns;
  std::vector<double> weights;

  bool is_dense() const { return columns.empty(); }

  void add_to(std::span<double> out, double scale) const {
    if (columns.empty()) {
      for (std::size_t j = 0; j < weights.size(); ++j) out[j] += scale * weights[j];
    } else {
      for (std::size_t i = 0; i < columns.size(); ++i) out[columns[i]] += scale * weights[i];
    }
  }

  // A sparse leaf that stores every output in order is written as dense.
  void canonicalize(std::size_t d) {
    if (columns.size() != d) return;
    for (std::size_t j = 0; j < d; ++j) {
      if (columns[j] != j) return;
    }
    columns.clear();
  }

  bool operator==(const LeafValue&) const = default;
};

struct TreeNode {
  static constexpr std::int32_t kNone = -1;

  // Internal nodes: x[feature] <= threshold goes left.
  std::size_t feature = 0;
  std::size_t threshold_bin = 0;
  double threshold = 0.0;
  std::int32_t left = kNone;
  std::int32_t right = kNone;
  LeafValue leaf;

  bool is_leaf() const { return left == kNone; }
  bool operator==(const TreeNode&) const = default;
};

/// Binary tree with vector-valued leaves; node 0 is the root.
class Tree {
 public:
  Tree() = default;
  Tree(std::size_t num_outputs, std::vector<TreeNode> nodes)
      : num_outputs_(num_outputs), nodes_(std::move(nodes)) {}

  std::size_t num_outputs() const { return num_outputs_; }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  std::vector<TreeNode>& mutable_nodes() { return nodes_; }

  std::size_t num_leaves() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const TreeNode& n) { return n.is_leaf(); }));
  }

  std::size_t depth() const { return nodes_.empty() ? 0 : depth_from(0); }

  std::size_t leaf_index(std::span<const double> x) const {
    std::size_t id = 0;
    while (!nodes_[id].is_leaf()) {
      const auto& n = nodes_[id];
      id = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
    }
    return id;
  }

  void predict_add(std::span<const double> x, std::span<double> out, double scale) const {
    nodes_[leaf_index(x)].leaf.add_to(out, scale);
  }

  /// The single output this tree writes to, when every leaf stores exactly
  /// that one column (single-output trees); nullopt otherwise.
  std::optional<std::size_t> single_output() const {
    std::optional<std::size_t> col;
    for (const auto& n : nodes_) {
      if (!n.is_leaf()) continue;
      std::size_t c;
      if (n.leaf.is_dense()) {
        if (num_outputs_ != 1) return std::nullopt;
        c = 0;
      } else if (n.leaf.columns.size() == 1) {
        c = n.leaf.columns[0];
      } else {
        return std::nullopt;
      }
      if (col && *col != c) return std::nullopt;
      col = c;
    }
    return col;
  }

  bool operator==(const Tree&) const = default;

 private:
  std::size_t depth_from(std::size_t id) const {
    const auto& n = nodes_[id];
    if (n.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(n.left)),
                        depth_from(static_cast<std::size_t>(n.right)));
  }

  std::size_t num_outputs_ = 0;
  std::vector<TreeNode> nodes_;
};

// ---------------------------------------------------------------------------
// Leaf values

/// w_j = -G_j / (H_j + lambda); zero where the denominator is not positive.
inline std::vector<double> compute_leaf_diagonal(const GradStats& s, double lambda) {
  std::vector<double> w(s.dim(), 0.0);
  for (std::size_t j = 0; j < w.size(); ++j) {
    const double denom = s.H[j] + lambda;
    w[j] = denom > 0.0 ? -s.G[j] / denom : 0.0;
  }
  return w;
}

/// Keeps the k columns with the largest G^2/(H+lambda).
inline LeafValue compute_leaf_sparse(const GradStats& s, double lambda, std::size_t k,
                                     const std::vector<std::size_t>* preselected = nullptr) {
  detail::check_sparse_k(k, s.dim());
  LeafValue leaf;
  leaf.columns = preselected ? *preselected : top_k_indices(column_scores(s, lambda), k);
  const auto dense = compute_leaf_diagonal(s, lambda);
  for (std::size_t c : leaf.columns) leaf.weights.push_back(dense[c]);
  leaf.canonicalize(s.dim());
  return leaf;
}

/// Solves (full_H + lambda I) w = -G. nullopt when the jittered solve fails.
inline std::optional<std::vector<double>> compute_leaf_exact(const GradStats& s, double lambda) {
  if (!s.full_H) throw ConfigError("exact leaf needs full hessian statistics");
  std::vector<double> neg_g(s.G.size());
  bool zero = true;
  for (std::size_t j = 0; j < neg_g.size(); ++j) {
    neg_g[j] = -s.G[j];
    zero = zero && s.G[j] == 0.0;
  }
  if (zero) return std::vector<double>(s.dim(), 0.0);
  const std::size_t d = s.dim();
  bool diagonal = true;
  for (std::size_t a = 0; a < d && diagonal; ++a) {
    for (std::size_t b = 0; b < d; ++b) {
      if (a != b && (*s.full_H)[a * d + b] != 0.0) {
        diagonal = false;
        break;
      }
    }
  }
  if (diagonal) {
    GradStats diag = s;
    for (std::size_t j = 0; j < d; ++j) diag.H[j] = (*s.full_H)[j * d + j];
    return compute_leaf_diagonal(diag, lambda);
  }
  return solve_spd(*s.full_H, d, lambda, neg_g);
}

// ---------------------------------------------------------------------------
// Growth

struct TreeConfig {
  SplitMode mode = SplitMode::kDense;
  double lambda = 1.0;
  std::size_t k = 1;
  std::size_t max_depth = 5;
  std::size_t max_leaves = 24;
  std::size_t min_samples = 1;
  double gain_threshold = 0.0;
  std::size_t node_store_limit = 48;
  std::size_t exact_dim_limit = kDefaultExactDimLimit;
  std::size_t workers = 1;

  void validate(std::size_t d) const {
    if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
    if (max_leaves < 2) throw ConfigError("max_leaves must be >= 2");
    if (min_samples < 1) throw ConfigError("min_samples must be >= 1");
    if (lambda < 0.0) throw ConfigError("lambda must be >= 0");
    if (node_store_limit < 1) throw ConfigError("node_store_limit must be >= 1");
    if (is_sparse(mode)) detail::check_sparse_k(k, d);
    if (mode == SplitMode::kExact && d > exact_dim_limit) {
      throw ConfigError("exact mode supports at most " + std::to_string(exact_dim_limit) +
                        " outputs (got " + std::to_string(d) + ")");
    }
  }

  /// Output count the gain is averaged over before the threshold test.
  std::size_t involved_outputs(std::size_t d) const { return is_sparse(mode) ? k : d; }
};

/// Counters recorded while growing one tree.
struct GrowthStats {
  struct ChildBuild {
    std::size_t parent_size;
    std::size_t built_size;
  };
  std::vector<ChildBuild> subtraction_builds;  // smaller child built, sibling derived
  std::size_t full_rebuilds = 0;               // parent histograms had been released
  std::vector<double> expanded_gains;          // in expansion order
  std::vector<double> next_pending_gains;      // best gain still queued at each expansion
  std::size_t store_overflows = 0;
  std::size_t exact_leaf_fallbacks = 0;
  std::vector<std::vector<SampleIndex>> leaf_samples;  // indexed like leaf_nodes
  std::vector<std::size_t> leaf_nodes;
};

/// Sends samples with bin <= threshold_bin left, preserving input order.
inline std::pair<std::vector<SampleIndex>, std::vector<SampleIndex>> apply_split(
    std::span<const SampleIndex> samples, const BinnedMatrix& binned, const SplitInfo& split) {
  std::pair<std::vector<SampleIndex>, std::vector<SampleIndex>> out;
  binned.visit_column(split.feature, [&](auto bins) {
    for (SampleIndex i : samples) {
      (bins[i] <= split.threshold_bin ? out.first : out.second).push_back(i);
    }
  });
  if (out.first.empty() || out.second.empty()) {
    throw std::logic_error("apply_split produced an empty side for feature " +
                           std::to_string(split.feature) + " bin " +
                           std::to_string(split.threshold_bin));
  }
  return out;
}

namespace detail {

class TreeGrower {
 public:
  TreeGrower(const BinnedMatrix& binned, const BinMapper& mapper, const GradHessBuffer& grads,
             const TreeConfig& cfg, GrowthStats* stats)
      : binned_(binned), mapper_(mapper), grads_(grads), cfg_(cfg), stats_(stats) {
    split_opt_.mode = cfg.mode;
    split_opt_.lambda = cfg.lambda;
    split_opt_.k = cfg.k;
    split_opt_.min_child_samples = cfg.min_samples;
    split_opt_.exact_dim_limit = cfg.exact_dim_limit;
    exact_ = cfg.mode == SplitMode::kExact;
  }

  Tree grow(std::vector<SampleIndex> samples) {
    const std::size_t d = grads_.num_outputs();
    nodes_.emplace_back();
    GradStats root_stats = sum_stats(samples, grads_, exact_);
    std::optional<NodeHistograms> hists;
    if (can_split(samples.size(), 0)) {
      hists = build_node_histograms(samples, binned_, grads_, exact_, cfg_.workers);
    }
    consider(0, std::move(samples), std::move(root_stats), std::move(hists), 0, nullptr);

    std::size_t leaves = 1;
    while (!heap_.empty()) {
      const auto top = heap_.top();
      heap_.pop();
      Candidate cand = std::move(*pending_[top.slot]);
      pending_[top.slot].reset();
      if (cand.hists) --materialized_;
      if (leaves + 1 > cfg_.max_leaves) {
        finalize_leaf(cand.node, cand.samples, cand.stats, cand.shared_cols);
        continue;
      }
      if (stats_) {
        stats_->next_pending_gains.push_back(
            heap_.empty() ? -std::numeric_limits<double>::infinity() : heap_.top().gain);
      }
      expand(std::move(cand));
      ++leaves;
    }
    return Tree(d, std::move(nodes_));
  }

 private:
  struct Candidate {
    std::size_t node;
    std::vector<SampleIndex> samples;
    GradStats stats;
    std::optional<NodeHistograms> hists;
    SplitInfo split;
    std::size_t depth;
    // Column set chosen for this node by its parent's restricted split.
    std::optional<std::vector<std::size_t>> shared_cols;
  };

  struct HeapEntry {
    double gain;
    std::size_t node;
    std::size_t slot;
  };
  struct HeapOrder {
    bool operator()(const HeapEntry& a, const HeapEntry& b) const {
      return a.gain < b.gain || (a.gain == b.gain && a.node > b.node);
    }
  };

  bool can_split(std::size_t n, std::size_t depth) const {
    return depth < cfg_.max_depth && n >= 2 * cfg_.min_samples && n >= 2;
  }

  void consider(std::size_t node, std::vector<SampleIndex> samples, GradStats stats,
                std::optional<NodeHistograms> hists, std::size_t depth,
                const std::vector<std::size_t>* shared_cols) {
    std::optional<std::vector<std::size_t>> shared;
    if (shared_cols) shared = *shared_cols;
    if (hists) {
      SplitInfo split = find_best_split(*hists, split_opt_, cfg_.workers);
      const double involved = static_cast<double>(cfg_.involved_outputs(grads_.num_outputs()));
      if (split.valid && split.gain / involved > cfg_.gain_threshold) {
        if (materialized_ >= cfg_.node_store_limit) {
          hists.reset();
          if (stats_) ++stats_->store_overflows;
        } else {
          ++materialized_;
        }
        const std::size_t slot = pending_.size();
        heap_.push({split.gain, node, slot});
        pending_.push_back(Candidate{node, std::move(samples), std::move(stats), std::move(hists),
                                     std::move(split), depth, std::move(shared)});
        return;
      }
    }
    finalize_leaf(node, samples, stats, shared);
  }

  void expand(Candidate cand) {
    const SplitInfo& split = cand.split;
    if (stats_) stats_->expanded_gains.push_back(split.gain);
    auto [left_samples, right_samples] = apply_split(cand.samples, binned_, split);
    cand.samples.clear();
    cand.samples.shrink_to_fit();

    const auto left_id = nodes_.size();
    const auto right_id = left_id + 1;
    nodes_.emplace_back();
    nodes_.emplace_back();
    TreeNode& n = nodes_[cand.node];
    n.feature = split.feature;
    n.threshold_bin = split.threshold_bin;
    n.threshold = mapper_.boundaries(split.feature)[split.threshold_bin];
    n.left = static_cast<std::int32_t>(left_id);
    n.right = static_cast<std::int32_t>(right_id);

    const std::size_t depth = cand.depth + 1;
    const bool split_left = can_split(left_samples.size(), depth);
    const bool split_right = can_split(right_samples.size(), depth);
    std::optional<NodeHistograms> left_hists, right_hists;
    if (split_left || split_right) {
      const bool left_smaller = left_samples.size() <= right_samples.size();
      const auto& small = left_smaller ? left_samples : right_samples;
      auto& small_hists = left_smaller ? left_hists : right_hists;
      auto& large_hists = left_smaller ? right_hists : left_hists;
      const bool need_large = left_smaller ? split_right : split_left;
      small_hists = build_node_histograms(small, binned_, grads_, exact_, cfg_.workers);
      if (need_large) {
        if (cand.hists) {
          if (stats_) {
            stats_->subtraction_builds.push_back(
                {left_samples.size() + right_samples.size(), small.size()});
          }
          large_hists = subtract_node_histograms(*cand.hists, *small_hists, cfg_.workers);
        } else {
          if (stats_) ++stats_->full_rebuilds;
          const auto& large = left_smaller ? right_samples : left_samples;
          large_hists = build_node_histograms(large, binned_, grads_, exact_, cfg_.workers);
        }
      }
    }
    cand.hists.reset();

    const bool restricted = cfg_.mode == SplitMode::kRestricted;
    consider(left_id, std::move(left_samples), split.left,
             split_left ? std::move(left_hists) : std::nullopt, depth,
             restricted ? &split.left_cols : nullptr);
    consider(right_id, std::move(right_samples), split.right,
             split_right ? std::move(right_hists) : std::nullopt, depth,
             restricted ? &split.right_cols : nullptr);
  }

  void finalize_leaf(std::size_t node, const std::vector<SampleIndex>& samples,
                     const GradStats& stats,
                     const std::optional<std::vector<std::size_t>>& shared_cols) {
    LeafValue leaf;
    switch (cfg_.mode) {
      case SplitMode::kDense:
        leaf.weights = compute_leaf_diagonal(stats, cfg_.lambda);
        break;
      case SplitMode::kSparse:
        leaf = compute_leaf_sparse(stats, cfg_.lambda, cfg_.k);
        break;
      case SplitMode::kRestricted:
        leaf = compute_leaf_sparse(stats, cfg_.lambda, cfg_.k,
                                   shared_cols ? &*shared_cols : nullptr);
        break;
      case SplitMode::kExact: {
        auto w = compute_leaf_exact(stats, cfg_.lambda);
        if (!w) {
          if (stats_) ++stats_->exact_leaf_fallbacks;
          w = compute_leaf_diagonal(stats, cfg_.lambda);
        }
        leaf.weights = std::move(*w);
        break;
      }
    }
    nodes_[node].leaf = std::move(leaf);
    if (stats_) {
      stats_->leaf_nodes.push_back(node);
      stats_->leaf_samples.push_back(samples);
    }
  }

  const BinnedMatrix& binned_;
  const BinMapper& mapper_;
  const GradHessBuffer& grads_;
  const TreeConfig& cfg_;
  GrowthStats* stats_;
  SplitOptions split_opt_;
  bool exact_ = false;

  std::vector<TreeNode> nodes_;
  std::priority_queue<HeapEntry, std::vector<HeapEntry>, HeapOrder> heap_;
  std::vector<std::optional<Candidate>> pending_;
  std::size_t materialized_ = 0;
};

}  // namespace detail

/// Grows one tree best-first: the pending node with the largest split gain
/// is expanded next. A node stays a leaf at max_depth, when the leaf budget is
/// spent, when no split leaves min_samples on both sides, or when its gain
/// averaged over the involved outputs is not above gain_threshold. At most
/// node_store_limit pending nodes keep their histograms; a node whose
/// histograms were released rebuilds both children directly.
inline Tree grow_tree(std::vector<SampleIndex> samples, const BinnedMatrix& binned,
                      const BinMapper& mapper, const GradHessBuffer& grads, const TreeConfig& cfg,
                      GrowthStats* stats = nullptr) {
  cfg.validate(grads.num_outputs());
  if (samples.empty()) throw DataError("cannot grow a tree on zero samples");
  if (cfg.mode == SplitMode::kExact && !grads.full_h) {
    throw ConfigError("exact mode needs full hessians from the loss");
  }
  return detail::TreeGrower(binned, mapper, grads, cfg, stats).grow(std::move(samples));
}

}  // namespace gbmo
