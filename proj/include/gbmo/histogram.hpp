#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbmo/core.hpp"
#include "gbmo/data.hpp"
#include "gbmo/losses.hpp"

namespace gbmo {

using SampleIndex = std::uint32_t;

/// Summed gradient statistics of a set of samples.
struct GradStats {
  std::vector<double> G;
  std::vector<double> H;
  std::optional<std::vector<double>> full_H;  // d x d row-major
  std::size_t count = 0;

  GradStats() = default;
  explicit GradStats(std::size_t d, bool with_full = false)
      : G(d, 0.0), H(d, 0.0), count(0) {
    if (with_full) full_H = std::vector<double>(d * d, 0.0);
  }

  std::size_t dim() const { return G.size(); }
  bool has_full() const { return full_H.has_value(); }

  GradStats& operator+=(const GradStats& o) {
    for (std::size_t j = 0; j < G.size(); ++j) {
      G[j] += o.G[j];
      H[j] += o.H[j];
    }
    if (full_H && o.full_H) {
      for (std::size_t j = 0; j < full_H->size(); ++j) (*full_H)[j] += (*o.full_H)[j];
    }
    count += o.count;
    return *this;
  }

  friend GradStats operator+(GradStats a, const GradStats& b) { return a += b; }
};

/// Sums the statistics of `samples` directly from the gradient buffer.
inline GradStats sum_stats(std::span<const SampleIndex> samples, const GradHessBuffer& grads,
                           bool with_full) {
  const std::size_t d = grads.num_outputs();
  GradStats s(d, with_full && grads.full_h.has_value());
  for (SampleIndex i : samples) {
    const auto g = grads.g.row(i);
    const auto h = grads.h.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      s.G[j] += g[j];
      s.H[j] += h[j];
    }
    if (s.full_H) {
      const auto block = grads.full_hessian(i);
      for (std::size_t j = 0; j < block.size(); ++j) (*s.full_H)[j] += block[j];
    }
  }
  s.count = samples.size();
  return s;
}

/// Per-bin gradient sums of one feature. Bins-major: the d outputs of a bin
/// are contiguous.
struct Histogram {
  std::size_t feature = 0;
  std::size_t num_bins = 0;
  std::size_t dim = 0;
  std::vector<double> g_sum;   // num_bins x dim
  std::vector<double> h_sum;   // num_bins x dim
  std::vector<std::int64_t> count;  // num_bins
  std::optional<std::vector<double>> full_h_sum;  // num_bins x dim x dim

  Histogram() = default;
  Histogram(std::size_t feature_id, std::size_t bins, std::size_t d, bool with_full)
      : feature(feature_id),
        num_bins(bins),
        dim(d),
        g_sum(bins * d, 0.0),
        h_sum(bins * d, 0.0),
        count(bins, 0) {
    if (with_full) full_h_sum = std::vector<double>(bins * d * d, 0.0);
  }

  std::span<const double> g(std::size_t bin) const { return {g_sum.data() + bin * dim, dim}; }
  std::span<const double> h(std::size_t bin) const { return {h_sum.data() + bin * dim, dim}; }
  std::span<const double> full_h(std::size_t bin) const {
    return {full_h_sum->data() + bin * dim * dim, dim * dim};
  }

  std::int64_t total_count() const {
    std::int64_t total = 0;
    for (auto c : count) total += c;
    return total;
  }
};

/// Accumulates each sample's g and h rows into the bin of `feature`.
inline Histogram build_histogram(std::span<const SampleIndex> samples, std::size_t feature,
                                 const BinnedMatrix& binned, const GradHessBuffer& grads,
                                 bool with_full = false) {
  const std::size_t d = grads.num_outputs();
  with_full = with_full && grads.full_h.has_value();
  Histogram hist(feature, binned.num_bins(feature), d, with_full);
  binned.visit_column(feature, [&](auto bins) {
    const double* g = grads.g.values().data();
    const double* h = grads.h.values().data();
    double* gs = hist.g_sum.data();
    double* hs = hist.h_sum.data();
    for (SampleIndex i : samples) {
      const std::size_t bin = bins[i];
      ++hist.count[bin];
      const double* gi = g + static_cast<std::size_t>(i) * d;
      const double* hi = h + static_cast<std::size_t>(i) * d;
      double* gb = gs + bin * d;
      double* hb = hs + bin * d;
      for (std::size_t j = 0; j < d; ++j) {
        gb[j] += gi[j];
        hb[j] += hi[j];
      }
    }
    if (with_full) {
      const std::size_t dd = d * d;
      for (SampleIndex i : samples) {
        const auto block = grads.full_hessian(i);
        double* fb = hist.full_h_sum->data() + static_cast<std::size_t>(bins[i]) * dd;
        for (std::size_t j = 0; j < dd; ++j) fb[j] += block[j];
      }
    }
  });
  return hist;
}

/// parent - child, element-wise. Used to derive a sibling without scanning it.
inline Histogram subtract_histogram(const Histogram& parent, const Histogram& child) {
  if (parent.feature != child.feature || parent.num_bins != child.num_bins ||
      parent.dim != child.dim || parent.full_h_sum.has_value() != child.full_h_sum.has_value()) {
    throw std::invalid_argument("subtract_histogram: histograms have different shapes");
  }
  Histogram out = parent;
  for (std::size_t k = 0; k < out.g_sum.size(); ++k) {
    out.g_sum[k] -= child.g_sum[k];
    out.h_sum[k] -= child.h_sum[k];
  }
  for (std::size_t b = 0; b < out.count.size(); ++b) {
    out.count[b] -= child.count[b];
    if (out.count[b] < 0) {
      throw std::logic_error("subtract_histogram: child has more samples than parent in bin " +
                             std::to_string(b));
    }
  }
  if (out.full_h_sum) {
    for (std::size_t k = 0; k < out.full_h_sum->size(); ++k) {
      (*out.full_h_sum)[k] -= (*child.full_h_sum)[k];
    }
  }
  return out;
}

/// Histograms for every feature of one node.
using NodeHistograms = std::vector<Histogram>;

inline NodeHistograms build_node_histograms(std::span<const SampleIndex> samples,
                                            const BinnedMatrix& binned,
                                            const GradHessBuffer& grads, bool with_full,
                                            std::size_t workers) {
  NodeHistograms hists(binned.cols());
  parallel_for(binned.cols(), workers, [&](std::size_t j) {
    hists[j] = build_histogram(samples, j, binned, grads, with_full);
  });
  return hists;
}

inline NodeHistograms subtract_node_histograms(const NodeHistograms& parent,
                                               const NodeHistograms& child, std::size_t workers) {
  NodeHistograms out(parent.size());
  parallel_for(parent.size(), workers,
               [&](std::size_t j) { out[j] = subtract_histogram(parent[j], child[j]); });
  return out;
}

}  // namespace gbmo
