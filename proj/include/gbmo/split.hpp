#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gbmo/core.hpp"
#include "gbmo/histogram.hpp"
#include "gbmo/linalg.hpp"
#include "gbmo/topk.hpp"

namespace gbmo {

enum class SplitMode { kDense, kSparse, kRestricted, kExact };

inline std::string_view to_string(SplitMode m) {
  switch (m) {
    case SplitMode::kDense: return "dense";
    case SplitMode::kSparse: return "sparse";
    case SplitMode::kRestricted: return "restricted";
    case SplitMode::kExact: return "exact";
  }
  return "?";
}

inline bool is_sparse(SplitMode m) { return m == SplitMode::kSparse || m == SplitMode::kRestricted; }

inline constexpr std::size_t kDefaultExactDimLimit = 64;

/// A candidate split: bins <= threshold_bin go left.
struct SplitInfo {
  bool valid = false;
  std::size_t feature = 0;
  std::size_t threshold_bin = 0;
  double gain = -std::numeric_limits<double>::infinity();
  // Sparse modes only; equal in restricted mode.
  std::vector<std::size_t> left_cols;
  std::vector<std::size_t> right_cols;
  GradStats left;
  GradStats right;
};

/// G^2 / (H + lambda), or 0 when the denominator is not positive.
inline double column_score(double G, double H, double lambda) {
  const double denom = H + lambda;
  return denom > 0.0 ? G * G / denom : 0.0;
}

inline std::vector<double> column_scores(const GradStats& s, double lambda) {
  std::vector<double> v(s.dim());
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = column_score(s.G[j], s.H[j], lambda);
  return v;
}

/// Sum over outputs of the left + right - parent column scores. The 1/2
/// factor of the objective is left out.
inline double dense_gain(const GradStats& left, const GradStats& right, double lambda) {
  double gain = 0.0;
  for (std::size_t j = 0; j < left.dim(); ++j) {
    gain += column_score(left.G[j], left.H[j], lambda) +
            column_score(right.G[j], right.H[j], lambda) -
            column_score(left.G[j] + right.G[j], left.H[j] + right.H[j], lambda);
  }
  return gain;
}

namespace detail {

inline void check_sparse_k(std::size_t k, std::size_t d) {
  if (k < 1 || k > d) {
    throw ConfigError("sparse k must satisfy 1 <= k <= d (k=" + std::to_string(k) +
                      ", d=" + std::to_string(d) + ")");
  }
}

inline double sum_selected(const std::vector<double>& v, const std::vector<std::size_t>& cols) {
  double total = 0.0;
  for (std::size_t j : cols) total += v[j];
  return total;
}

}  // namespace detail

struct SparseGain {
  double score = 0.0;
  std::vector<std::size_t> left_cols;
  std::vector<std::size_t> right_cols;
};

/// Top-k column scores of each side, selected independently. The parent
/// term is not subtracted.
inline SparseGain sparse_gain(const GradStats& left, const GradStats& right, double lambda,
                              std::size_t k) {
  detail::check_sparse_k(k, left.dim());
  const auto vl = column_scores(left, lambda);
  const auto vr = column_scores(right, lambda);
  SparseGain out{0.0, top_k_indices(vl, k), top_k_indices(vr, k)};
  out.score = detail::sum_selected(vl, out.left_cols) + detail::sum_selected(vr, out.right_cols);
  return out;
}

struct RestrictedGain {
  double score = 0.0;
  std::vector<std::size_t> cols;
};

/// Top-k columns of the summed left + right scores, shared by both sides.
inline RestrictedGain restricted_sparse_gain(const GradStats& left, const GradStats& right,
                                             double lambda, std::size_t k) {
  detail::check_sparse_k(k, left.dim());
  std::vector<double> v(left.dim());
  for (std::size_t j = 0; j < v.size(); ++j) {
    v[j] = column_score(left.G[j], left.H[j], lambda) + column_score(right.G[j], right.H[j], lambda);
  }
  RestrictedGain out{0.0, top_k_indices(v, k)};
  out.score = detail::sum_selected(v, out.cols);
  return out;
}

/// Sparse objective of a node that keeps its own top-k columns (the constant
/// subtracted from sparse split scores).
inline double sparse_node_score(const GradStats& s, double lambda, std::size_t k) {
  const auto v = column_scores(s, lambda);
  return detail::sum_selected(v, top_k_indices(v, k));
}

/// -1/2 G^T (full_H + lambda I)^{-1} G via a jittered Cholesky solve.
inline std::optional<double> exact_objective(const GradStats& s, double lambda) {
  if (!s.full_H) throw ConfigError("exact objective needs full hessian statistics");
  bool zero = true;
  for (double g : s.G) zero = zero && g == 0.0;
  if (zero) return 0.0;
  const auto w = solve_spd(*s.full_H, s.dim(), lambda, s.G);
  if (!w) return std::nullopt;
  double quad = 0.0;
  for (std::size_t j = 0; j < s.dim(); ++j) quad += s.G[j] * (*w)[j];
  return -0.5 * quad;
}

/// L*(parent) - L*(left) - L*(right) with the exact hessian; nullopt when a
/// solve fails.
inline std::optional<double> exact_gain(const GradStats& left, const GradStats& right,
                                        double lambda) {
  const auto parent = exact_objective(left + right, lambda);
  const auto l = exact_objective(left, lambda);
  const auto r = exact_objective(right, lambda);
  if (!parent || !l || !r) return std::nullopt;
  return *parent - (*l + *r);
}

struct SplitOptions {
  SplitMode mode = SplitMode::kDense;
  double lambda = 1.0;
  std::size_t k = 1;
  // Candidates leaving fewer samples on either side are skipped; 1 skips only
  // empty sides.
  std::size_t min_child_samples = 1;
  std::size_t exact_dim_limit = kDefaultExactDimLimit;
};

inline GradStats histogram_totals(const Histogram& hist) {
  GradStats s(hist.dim, hist.full_h_sum.has_value());
  for (std::size_t b = 0; b < hist.num_bins; ++b) {
    for (std::size_t j = 0; j < hist.dim; ++j) {
      s.G[j] += hist.g(b)[j];
      s.H[j] += hist.h(b)[j];
    }
    if (s.full_H) {
      const auto f = hist.full_h(b);
      for (std::size_t j = 0; j < f.size(); ++j) (*s.full_H)[j] += f[j];
    }
  }
  s.count = static_cast<std::size_t>(hist.total_count());
  return s;
}

/// Best split of a single feature. Scans bins left to right with running
/// left sums; the right side is total minus left.
inline SplitInfo find_best_split_feature(const Histogram& hist, const GradStats& total,
                                         double parent_score, const SplitOptions& opt) {
  SplitInfo best;
  best.feature = hist.feature;
  const std::size_t d = hist.dim;
  const bool exact = opt.mode == SplitMode::kExact;
  GradStats left(d, exact);
  GradStats right(d, exact);
  const std::size_t min_child = std::max<std::size_t>(opt.min_child_samples, 1);
  for (std::size_t t = 0; t + 1 < hist.num_bins; ++t) {
    for (std::size_t j = 0; j < d; ++j) {
      left.G[j] += hist.g(t)[j];
      left.H[j] += hist.h(t)[j];
    }
    if (exact) {
      const auto f = hist.full_h(t);
      for (std::size_t j = 0; j < f.size(); ++j) (*left.full_H)[j] += f[j];
    }
    left.count += static_cast<std::size_t>(hist.count[t]);
    if (left.count < min_child || total.count < left.count + min_child) continue;
    for (std::size_t j = 0; j < d; ++j) {
      right.G[j] = total.G[j] - left.G[j];
      right.H[j] = total.H[j] - left.H[j];
    }
    if (exact) {
      for (std::size_t j = 0; j < d * d; ++j) (*right.full_H)[j] = (*total.full_H)[j] - (*left.full_H)[j];
    }
    right.count = total.count - left.count;

    double gain = 0.0;
    std::vector<std::size_t> lcols, rcols;
    switch (opt.mode) {
      case SplitMode::kDense:
        gain = dense_gain(left, right, opt.lambda);
        break;
      case SplitMode::kSparse: {
        auto s = sparse_gain(left, right, opt.lambda, opt.k);
        gain = s.score - parent_score;
        lcols = std::move(s.left_cols);
        rcols = std::move(s.right_cols);
        break;
      }
      case SplitMode::kRestricted: {
        auto s = restricted_sparse_gain(left, right, opt.lambda, opt.k);
        gain = s.score - parent_score;
        lcols = s.cols;
        rcols = std::move(s.cols);
        break;
      }
      case SplitMode::kExact: {
        const auto l = exact_objective(left, opt.lambda);
        const auto r = exact_objective(right, opt.lambda);
        if (!l || !r) continue;
        gain = parent_score - (*l + *r);
        break;
      }
    }
    if (!best.valid || gain > best.gain) {
      best.valid = true;
      best.threshold_bin = t;
      best.gain = gain;
      best.left_cols = std::move(lcols);
      best.right_cols = std::move(rcols);
      best.left = left;
      best.right = right;
    }
  }
  return best;
}

/// Best split over all features of one node. Ties go to the lower feature,
/// then the lower bin. Returns an invalid SplitInfo when no candidate leaves
/// enough samples on both sides.
inline SplitInfo find_best_split(const NodeHistograms& hists, const SplitOptions& opt,
                                 std::size_t workers = 1) {
  if (hists.empty()) return {};
  const std::size_t d = hists.front().dim;
  if (is_sparse(opt.mode)) detail::check_sparse_k(opt.k, d);
  if (opt.mode == SplitMode::kExact) {
    if (d > opt.exact_dim_limit) {
      throw ConfigError("exact mode supports at most " + std::to_string(opt.exact_dim_limit) +
                        " outputs (got " + std::to_string(d) + ")");
    }
    if (!hists.front().full_h_sum) throw ConfigError("exact mode needs full hessian histograms");
  }
  const GradStats total = histogram_totals(hists.front());
  double parent_score = 0.0;
  if (is_sparse(opt.mode)) {
    parent_score = sparse_node_score(total, opt.lambda, opt.k);
  } else if (opt.mode == SplitMode::kExact) {
    const auto p = exact_objective(total, opt.lambda);
    if (!p) return {};
    parent_score = *p;
  }

  std::vector<SplitInfo> per_feature(hists.size());
  parallel_for(hists.size(), workers, [&](std::size_t f) {
    per_feature[f] = find_best_split_feature(hists[f], total, parent_score, opt);
  });
  SplitInfo best;
  for (auto& s : per_feature) {
    if (s.valid && (!best.valid || s.gain > best.gain)) best = std::move(s);
  }
  return best;
}

}  // namespace gbmo
