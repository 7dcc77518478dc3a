#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

namespace gbmo {

/// Diagonal shifts tried in order when a Cholesky factorization fails.
inline constexpr std::array<double, 4> kJitterSchedule{0.0, 1e-10, 1e-8, 1e-6};

/// In-place lower Cholesky factor of an n x n row-major SPD matrix. Returns
/// false when a pivot is not strictly positive.
inline bool cholesky_factor(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double diag = a[j * n + j];
    for (std::size_t p = 0; p < j; ++p) diag -= a[j * n + p] * a[j * n + p];
    if (!(diag > 0.0) || !std::isfinite(diag)) return false;
    const double l = std::sqrt(diag);
    a[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = a[i * n + j];
      for (std::size_t p = 0; p < j; ++p) v -= a[i * n + p] * a[j * n + p];
      a[i * n + j] = v / l;
    }
  }
  return true;
}

inline std::vector<double> cholesky_solve(const std::vector<double>& factor, std::size_t n,
                                          std::span<const double> rhs) {
  std::vector<double> x(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < i; ++p) x[i] -= factor[i * n + p] * x[p];
    x[i] /= factor[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t p = i + 1; p < n; ++p) x[i] -= factor[p * n + i] * x[p];
    x[i] /= factor[i * n + i];
  }
  return x;
}

/// Solves (A + shift*I) x = rhs for symmetric A, escalating the jitter
/// schedule until the factorization succeeds. nullopt when every shift fails.
inline std::optional<std::vector<double>> solve_spd(std::span<const double> a, std::size_t n,
                                                    double shift, std::span<const double> rhs) {
  for (double jitter : kJitterSchedule) {
    std::vector<double> work(a.begin(), a.end());
    for (std::size_t i = 0; i < n; ++i) work[i * n + i] += shift + jitter;
    if (cholesky_factor(work, n)) {
      auto x = cholesky_solve(work, n, rhs);
      bool finite = true;
      for (double v : x) finite = finite && std::isfinite(v);
      if (finite) return x;
    }
  }
  return std::nullopt;
}

}  // namespace gbmo
