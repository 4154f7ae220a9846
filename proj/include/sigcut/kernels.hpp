#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigcut/dense_tensor.hpp"
#include "sigcut/sign_vector.hpp"

namespace sigcut {

/// Returns x with its sign flipped when negate_bit is 1. The inner reductions
/// below are built from this: sign-flip + add, never a multiply.
inline double flip_sign_if(double x, std::uint64_t negate_bit) noexcept {
  return std::bit_cast<double>(std::bit_cast<std::uint64_t>(x) ^ (negate_bit << 63));
}

/// sum_i s_i * x_i. Reduction order: sequential within each 64-entry word
/// block, block sums accumulated sequentially, so results are reproducible.
inline double signed_dot(const SignVector& s, std::span<const double> x) {
  if (s.size() != x.size()) throw std::invalid_argument("signed_dot: length mismatch");
  const auto words = s.words();
  double total = 0.0;
  std::size_t i = 0;
  for (std::size_t u = 0; u < words.size(); ++u) {
    const std::uint64_t w = words[u];
    const std::size_t block_end = std::min(x.size(), i + kWordBits);
    double block = 0.0;
    for (std::size_t b = 0; i < block_end; ++i, ++b) {
      block += flip_sign_if(x[i], (w >> b) & 1u);
    }
    total += block;
  }
  return total;
}

/// Scalar reference semantics for signed_dot: one sequential accumulator,
/// entry by entry. Kept as the comparison baseline for kernel tests.
inline double signed_dot_ref(const SignVector& s, std::span<const double> x) {
  if (s.size() != x.size()) throw std::invalid_argument("signed_dot_ref: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    acc += s.is_negative(i) ? -x[i] : x[i];
  }
  return acc;
}

namespace detail {

inline void require_matrix(const DenseTensor& a, const char* who) {
  if (a.order() != 2) throw std::invalid_argument(std::string(who) + ": matrix required");
}

}  // namespace detail

/// y = A t for an m x n matrix and t in {-1,+1}^n; one signed_dot per row.
inline std::vector<double> matvec_signed(const DenseTensor& a, const SignVector& t) {
  detail::require_matrix(a, "matvec_signed");
  const std::size_t m = a.rows(), n = a.cols();
  if (t.size() != n) throw std::invalid_argument("matvec_signed: dimension mismatch");
  std::vector<double> y(m);
  const auto data = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    y[i] = signed_dot(t, data.subspan(i * n, n));
  }
  return y;
}

/// y = A^T s; column reductions accumulated row by row (fixed order).
inline std::vector<double> matvec_signed_t(const DenseTensor& a, const SignVector& s) {
  detail::require_matrix(a, "matvec_signed_t");
  const std::size_t m = a.rows(), n = a.cols();
  if (s.size() != m) throw std::invalid_argument("matvec_signed_t: dimension mismatch");
  std::vector<double> y(n, 0.0);
  const auto data = a.data();
  for (std::size_t i = 0; i < m; ++i) {
    const std::uint64_t neg = s.is_negative(i) ? 1u : 0u;
    const double* row = data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      y[j] += flip_sign_if(row[j], neg);
    }
  }
  return y;
}

/// In-place y += A (t_new - t_old): only columns whose sign flipped are
/// touched, each contributing +-2 * A[:,j].
inline void delta_matvec_inplace(const DenseTensor& a, std::span<double> y,
                                 const SignVector& t_new, const SignVector& t_old) {
  detail::require_matrix(a, "delta_matvec");
  const std::size_t m = a.rows(), n = a.cols();
  if (t_new.size() != n || t_old.size() != n || y.size() != m) {
    throw std::invalid_argument("delta_matvec: dimension mismatch");
  }
  const auto wn = t_new.words();
  const auto wo = t_old.words();
  const auto data = a.data();
  for (std::size_t u = 0; u < wn.size(); ++u) {
    std::uint64_t diff = wn[u] ^ wo[u];
    while (diff != 0) {
      const int b = std::countr_zero(diff);
      diff &= diff - 1;
      const std::size_t j = u * kWordBits + static_cast<std::size_t>(b);
      const std::uint64_t neg = (wn[u] >> b) & 1u;  // new sign decides the direction
      for (std::size_t i = 0; i < m; ++i) {
        const double col = data[i * n + j];
        y[i] += flip_sign_if(col + col, neg);
      }
    }
  }
}

/// Returns A t_new given y_prev = A t_old.
inline std::vector<double> delta_matvec(const DenseTensor& a, std::span<const double> y_prev,
                                        const SignVector& t_new, const SignVector& t_old) {
  std::vector<double> y(y_prev.begin(), y_prev.end());
  delta_matvec_inplace(a, y, t_new, t_old);
  return y;
}

/// In-place y += A^T (s_new - s_old); flipped rows contribute +-2 * A[i,:].
inline void delta_matvec_t_inplace(const DenseTensor& a, std::span<double> y,
                                   const SignVector& s_new, const SignVector& s_old) {
  detail::require_matrix(a, "delta_matvec_t");
  const std::size_t m = a.rows(), n = a.cols();
  if (s_new.size() != m || s_old.size() != m || y.size() != n) {
    throw std::invalid_argument("delta_matvec_t: dimension mismatch");
  }
  const auto wn = s_new.words();
  const auto wo = s_old.words();
  const auto data = a.data();
  for (std::size_t u = 0; u < wn.size(); ++u) {
    std::uint64_t diff = wn[u] ^ wo[u];
    while (diff != 0) {
      const int b = std::countr_zero(diff);
      diff &= diff - 1;
      const std::size_t i = u * kWordBits + static_cast<std::size_t>(b);
      const std::uint64_t neg = (wn[u] >> b) & 1u;
      const double* row = data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        y[j] += flip_sign_if(row[j] + row[j], neg);
      }
    }
  }
}

inline std::vector<double> delta_matvec_t(const DenseTensor& a, std::span<const double> y_prev,
                                          const SignVector& s_new, const SignVector& s_old) {
  std::vector<double> y(y_prev.begin(), y_prev.end());
  delta_matvec_t_inplace(a, y, s_new, s_old);
  return y;
}

/// R -= alpha * s t^T, in place. The caller owns R exclusively.
inline void rank1_update(DenseTensor& r, double alpha, const SignVector& s,
                         const SignVector& t) {
  detail::require_matrix(r, "rank1_update");
  const std::size_t m = r.rows(), n = r.cols();
  if (s.size() != m || t.size() != n) {
    throw std::invalid_argument("rank1_update: dimension mismatch");
  }
  auto data = r.data();
  const auto tw = t.words();
  for (std::size_t i = 0; i < m; ++i) {
    const double row_alpha = flip_sign_if(alpha, s.is_negative(i) ? 1u : 0u);
    double* row = data.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] -= flip_sign_if(row_alpha, (tw[j / kWordBits] >> (j % kWordBits)) & 1u);
    }
  }
}

/// Contraction of `a` against sign vectors on every axis except `axis`:
/// out[p] = sum over multi-indices with idx[axis] = p of a[idx] * prod signs.
/// `signs` has one entry per axis; signs[axis] is ignored (may be empty).
inline std::vector<double> axial_contract(const DenseTensor& a, std::size_t axis,
                                          std::span<const SignVector> signs) {
  const auto& shape = a.shape();
  const std::size_t k = shape.size();
  if (axis >= k) throw std::invalid_argument("axial_contract: axis out of range");
  if (signs.size() != k) throw std::invalid_argument("axial_contract: need one SignVector per axis");
  for (std::size_t i = 0; i < k; ++i) {
    if (i != axis && signs[i].size() != shape[i]) {
      throw std::invalid_argument("axial_contract: sign length mismatch");
    }
  }
  std::vector<double> out(shape[axis], 0.0);
  std::vector<std::size_t> idx(k, 0);
  std::uint64_t xbit = 0;  // XOR of sign bits over all non-axis coordinates
  for (std::size_t i = 0; i < k; ++i) {
    if (i != axis) xbit ^= signs[i].is_negative(0) ? 1u : 0u;
  }
  const auto data = a.data();
  for (std::size_t e = 0; e < data.size(); ++e) {
    out[idx[axis]] += flip_sign_if(data[e], xbit);
    for (std::size_t d = k; d-- > 0;) {  // row-major odometer, last axis fastest
      if (d != axis) xbit ^= signs[d].is_negative(idx[d]) ? 1u : 0u;
      if (++idx[d] < shape[d]) {
        if (d != axis) xbit ^= signs[d].is_negative(idx[d]) ? 1u : 0u;
        break;
      }
      idx[d] = 0;
      if (d != axis) xbit ^= signs[d].is_negative(0) ? 1u : 0u;
    }
  }
  return out;
}

/// Full inner product <s_1 x ... x s_k, a> against one sign vector per axis.
inline double signed_contract(const DenseTensor& a, std::span<const SignVector> signs) {
  const auto& shape = a.shape();
  const std::size_t k = shape.size();
  if (signs.size() != k) throw std::invalid_argument("signed_contract: need one SignVector per axis");
  for (std::size_t i = 0; i < k; ++i) {
    if (signs[i].size() != shape[i]) {
      throw std::invalid_argument("signed_contract: sign length mismatch");
    }
  }
  std::vector<std::size_t> idx(k, 0);
  std::uint64_t xbit = 0;
  for (std::size_t i = 0; i < k; ++i) xbit ^= signs[i].is_negative(0) ? 1u : 0u;
  const auto data = a.data();
  double acc = 0.0;
  for (std::size_t e = 0; e < data.size(); ++e) {
    acc += flip_sign_if(data[e], xbit);
    for (std::size_t d = k; d-- > 0;) {
      xbit ^= signs[d].is_negative(idx[d]) ? 1u : 0u;
      if (++idx[d] < shape[d]) {
        xbit ^= signs[d].is_negative(idx[d]) ? 1u : 0u;
        break;
      }
      idx[d] = 0;
      xbit ^= signs[d].is_negative(0) ? 1u : 0u;
    }
  }
  return acc;
}

}  // namespace sigcut
