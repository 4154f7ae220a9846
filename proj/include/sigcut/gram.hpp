#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace sigcut {

/// Normal-equation system for coefficient refits with the sign factors held
/// fixed: gram[i][j] = prod over sign axes of <factor_i, factor_j> (integer
/// valued, built from bit-packed dots) and rhs[j*channels + ch] =
/// <j-th sign outer product, channel ch of the input>. The Gram matrix is
/// symmetric positive semidefinite with every diagonal entry equal to the
/// number of entries covered by the sign axes.
struct GramSystem {
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> gram;  // width x width, row-major
  std::vector<double> rhs;   // width x channels, term-major

  double& g(std::size_t i, std::size_t j) { return gram[i * width + j]; }
  double g(std::size_t i, std::size_t j) const { return gram[i * width + j]; }

  /// Grows the system by one term given its Gram column against all kept
  /// terms (length width+1, last entry the diagonal) and its rhs block.
  void extend(std::span<const double> gram_column, std::span<const double> rhs_block) {
    if (gram_column.size() != width + 1 || rhs_block.size() != channels) {
      throw std::invalid_argument("GramSystem::extend: block size mismatch");
    }
    std::vector<double> grown((width + 1) * (width + 1));
    for (std::size_t i = 0; i < width; ++i) {
      for (std::size_t j = 0; j < width; ++j) grown[i * (width + 1) + j] = g(i, j);
      grown[i * (width + 1) + width] = gram_column[i];
      grown[width * (width + 1) + i] = gram_column[i];
    }
    grown[width * (width + 1) + width] = gram_column[width];
    gram = std::move(grown);
    rhs.insert(rhs.end(), rhs_block.begin(), rhs_block.end());
    ++width;
  }
};

namespace detail {

/// In-place lower Cholesky; returns false on a non-positive pivot.
inline bool cholesky(std::vector<double>& m, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = m[j * n + j];
    for (std::size_t p = 0; p < j; ++p) d -= m[j * n + p] * m[j * n + p];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double l = std::sqrt(d);
    m[j * n + j] = l;
    for (std::size_t i = j + 1; i < n; ++i) {
      double v = m[i * n + j];
      for (std::size_t p = 0; p < j; ++p) v -= m[i * n + p] * m[j * n + p];
      m[i * n + j] = v / l;
    }
  }
  return true;
}

inline void cholesky_solve(const std::vector<double>& l, std::size_t n, std::span<double> x) {
  for (std::size_t i = 0; i < n; ++i) {  // forward
    double v = x[i];
    for (std::size_t p = 0; p < i; ++p) v -= l[i * n + p] * x[p];
    x[i] = v / l[i * n + i];
  }
  for (std::size_t i = n; i-- > 0;) {  // backward (L^T)
    double v = x[i];
    for (std::size_t p = i + 1; p < n; ++p) v -= l[p * n + i] * x[p];
    x[i] = v / l[i * n + i];
  }
}

}  // namespace detail

/// Solves G c = b for each rhs channel with one symmetric positive-definite
/// factorization. Duplicate or near-duplicate sign terms make G singular; on
/// factorization failure a ridge of 1e-10 * diag is added and doubled up to
/// three times before giving up.
inline std::vector<double> solve_gram(const GramSystem& sys) {
  const std::size_t w = sys.width;
  if (w == 0) return {};
  const double base_ridge = 1e-10 * sys.g(0, 0);  // diagonal = entry count
  std::vector<double> factor;
  bool ok = false;
  for (int attempt = 0; attempt < 5 && !ok; ++attempt) {
    factor = sys.gram;
    if (attempt > 0) {
      const double ridge = base_ridge * static_cast<double>(1 << (attempt - 1));
      for (std::size_t j = 0; j < w; ++j) factor[j * w + j] += ridge;
    }
    ok = detail::cholesky(factor, w);
  }
  if (!ok) throw std::runtime_error("solve_gram: factorization failed");
  // rhs is term-major; solve channel by channel
  std::vector<double> out(sys.rhs.size());
  std::vector<double> x(w);
  for (std::size_t ch = 0; ch < sys.channels; ++ch) {
    for (std::size_t j = 0; j < w; ++j) x[j] = sys.rhs[j * sys.channels + ch];
    detail::cholesky_solve(factor, w, x);
    for (std::size_t j = 0; j < w; ++j) out[j * sys.channels + ch] = x[j];
  }
  return out;
}

}  // namespace sigcut
