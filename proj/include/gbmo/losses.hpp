#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gbmo/core.hpp"

namespace gbmo {

/// Per-sample first and diagonal second derivatives of the loss with respect
/// to the raw prediction, plus optional full d x d hessians.
struct GradHessBuffer {
  RealMatrix g;  // n x d
  RealMatrix h;  // n x d
  // n blocks of d*d, row-major, present only when the exact hessian is requested.
  std::optional<std::vector<double>> full_h;

  std::size_t num_samples() const { return g.rows(); }
  std::size_t num_outputs() const { return g.cols(); }
  std::span<const double> full_hessian(std::size_t i) const {
    const std::size_t dd = num_outputs() * num_outputs();
    return {full_h->data() + i * dd, dd};
  }
};

enum class LossKind { kMse, kSoftmax };
enum class MetricKind { kRmse, kTop1Accuracy };

inline std::string_view to_string(LossKind k) { return k == LossKind::kMse ? "mse" : "softmax"; }
inline std::string_view to_string(MetricKind k) {
  return k == MetricKind::kRmse ? "rmse" : "top1_accuracy";
}

inline LossKind parse_loss(std::string_view s) {
  if (s == "mse") return LossKind::kMse;
  if (s == "softmax" || s == "softmax_ce" || s == "ce") return LossKind::kSoftmax;
  throw ConfigError("unknown loss '" + std::string(s) + "' (expected mse or softmax)");
}

inline MetricKind default_metric(LossKind k) {
  return k == LossKind::kMse ? MetricKind::kRmse : MetricKind::kTop1Accuracy;
}

inline bool higher_is_better(MetricKind k) { return k == MetricKind::kTop1Accuracy; }

namespace detail {

inline void check_same_shape(const RealMatrix& a, const RealMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError("shape mismatch: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                    " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace detail

/// l = 1/2 |pred - target|^2, so g = pred - target and h = 1.
inline GradHessBuffer mse_grad_hess(const RealMatrix& pred, const RealMatrix& target,
                                    bool full_hessian = false) {
  detail::check_same_shape(pred, target);
  const std::size_t n = pred.rows(), d = pred.cols();
  GradHessBuffer out{RealMatrix(n, d), RealMatrix(n, d, 1.0), std::nullopt};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.g(i, j) = pred(i, j) - target(i, j);
  }
  if (full_hessian) {
    std::vector<double> full(n * d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) full[i * d * d + j * d + j] = 1.0;
    }
    out.full_h = std::move(full);
  }
  return out;
}

/// Max-shifted softmax of one row.
inline void softmax_row(std::span<const double> logits, std::span<double> p) {
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p[j] = std::exp(logits[j] - top);
    total += p[j];
  }
  for (double& v : p) v /= total;
}

inline RealMatrix softmax(const RealMatrix& logits) {
  RealMatrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) softmax_row(logits.row(i), p.row(i));
  return p;
}

inline void check_one_hot(const RealMatrix& target) {
  for (std::size_t i = 0; i < target.rows(); ++i) {
    int ones = 0;
    for (double v : target.row(i)) {
      if (v == 1.0) {
        ++ones;
      } else if (v != 0.0) {
        ones = -1;
        break;
      }
    }
    if (ones != 1) throw DataError("target row " + std::to_string(i) + " is not one-hot");
  }
}

/// Cross-entropy on softmax(logits): g = p - y, h = p(1 - p), and the exact
/// hessian diag(p) - p p^T when requested.
inline GradHessBuffer softmax_grad_hess(const RealMatrix& logits, const RealMatrix& target,
                                        bool full_hessian = false) {
  detail::check_same_shape(logits, target);
  check_one_hot(target);
  const std::size_t n = logits.rows(), d = logits.cols();
  GradHessBuffer out{RealMatrix(n, d), RealMatrix(n, d), std::nullopt};
  std::vector<double> full;
  if (full_hessian) full.assign(n * d * d, 0.0);
  std::vector<double> p(d);
  for (std::size_t i = 0; i < n; ++i) {
    softmax_row(logits.row(i), p);
    for (std::size_t j = 0; j < d; ++j) {
      out.g(i, j) = p[j] - target(i, j);
      out.h(i, j) = p[j] * (1.0 - p[j]);
    }
    if (full_hessian) {
      double* block = full.data() + i * d * d;
      for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = 0; b < d; ++b) block[a * d + b] = -p[a] * p[b];
        block[a * d + a] = out.h(i, a);
      }
    }
  }
  if (full_hessian) out.full_h = std::move(full);
  return out;
}

inline GradHessBuffer grad_hess(LossKind kind, const RealMatrix& pred, const RealMatrix& target,
                                bool full_hessian = false) {
  return kind == LossKind::kMse ? mse_grad_hess(pred, target, full_hessian)
                                : softmax_grad_hess(pred, target, full_hessian);
}

/// Mean per-sample loss: 1/2 |pred - y|^2 for mse, -log p_c for softmax.
inline double mean_loss(LossKind kind, const RealMatrix& pred, const RealMatrix& target) {
  detail::check_same_shape(pred, target);
  if (pred.rows() == 0) return 0.0;
  double total = 0.0;
  if (kind == LossKind::kMse) {
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      for (std::size_t j = 0; j < pred.cols(); ++j) {
        const double r = pred(i, j) - target(i, j);
        total += 0.5 * r * r;
      }
    }
  } else {
    for (std::size_t i = 0; i < pred.rows(); ++i) {
      const auto z = pred.row(i);
      const double top = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - top);
      const double log_norm = top + std::log(sum);
      for (std::size_t j = 0; j < pred.cols(); ++j) total += target(i, j) * (log_norm - z[j]);
    }
  }
  return total / static_cast<double>(pred.rows());
}

inline std::size_t argmax(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

/// rmse averages over all n*d entries; accuracy compares row argmaxes with
/// ties going to the lowest index.
inline double evaluate_metric(MetricKind kind, const RealMatrix& pred, const RealMatrix& target) {
  detail::check_same_shape(pred, target);
  if (pred.rows() == 0) return 0.0;
  if (kind == MetricKind::kRmse) {
    double total = 0.0;
    for (std::size_t i = 0; i < pred.values().size(); ++i) {
      const double r = pred.values()[i] - target.values()[i];
      total += r * r;
    }
    return std::sqrt(total / static_cast<double>(pred.values().size()));
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.rows(); ++i) hits += argmax(pred.row(i)) == argmax(target.row(i));
  return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

}  // namespace gbmo
