#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sigcut/dense_tensor.hpp"
#include "sigcut/gram.hpp"
#include "sigcut/kernels.hpp"
#include "sigcut/metrics.hpp"
#include "sigcut/search.hpp"
#include "sigcut/sign_vector.hpp"

namespace sigcut {

/// Width-w signed cut decomposition: one bit-packed sign factor per sign
/// axis plus the expansion multipliers. Coefficients store the multiplier
/// that actually scales each term in expand() (for greedy output,
/// alpha_j = c_j / prod n_i), so expansion needs no hidden rescaling.
///
/// channel_axis == -1 puts sign vectors on every axis with one coefficient
/// per term. channel_axis >= 0 selects the scalar-channel variant: sign
/// factors on the remaining axes only, shared across channels, and one
/// coefficient per channel per term (term-major layout).
struct CutDecomposition {
  std::vector<std::size_t> shape;
  std::vector<SignMatrix> factors;   // one per sign axis, ascending axis order
  std::vector<double> coefficients;  // width x channels, term-major
  int channel_axis = -1;

  static CutDecomposition with_shape(std::vector<std::size_t> shape, int channel_axis = -1) {
    DenseTensor::checked_numel(shape);
    if (channel_axis >= 0 && static_cast<std::size_t>(channel_axis) >= shape.size()) {
      throw std::invalid_argument("CutDecomposition: channel axis out of range");
    }
    CutDecomposition d;
    d.channel_axis = channel_axis;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (static_cast<int>(i) != channel_axis) d.factors.emplace_back(shape[i]);
    }
    d.shape = std::move(shape);
    return d;
  }

  std::size_t order() const noexcept { return shape.size(); }
  std::size_t channels() const {
    return channel_axis >= 0 ? shape[static_cast<std::size_t>(channel_axis)] : 1;
  }
  std::size_t width() const { return channels() == 0 ? 0 : coefficients.size() / channels(); }

  /// Axes carrying sign factors, ascending.
  std::vector<std::size_t> sign_axes() const {
    std::vector<std::size_t> axes;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (static_cast<int>(i) != channel_axis) axes.push_back(i);
    }
    return axes;
  }

  const double* term_coefficients(std::size_t term) const {
    return coefficients.data() + term * channels();
  }

  void append_term(std::span<const SignVector> signs_per_sign_axis,
                   std::span<const double> coeffs) {
    if (signs_per_sign_axis.size() != factors.size() || coeffs.size() != channels()) {
      throw std::invalid_argument("CutDecomposition::append_term: arity mismatch");
    }
    for (std::size_t i = 0; i < factors.size(); ++i) factors[i].append(signs_per_sign_axis[i]);
    coefficients.insert(coefficients.end(), coeffs.begin(), coeffs.end());
  }

  /// Structural consistency check (used after deserialization).
  void validate() const {
    DenseTensor::checked_numel(shape);
    const auto axes = sign_axes();
    if (factors.size() != axes.size()) {
      throw std::invalid_argument("CutDecomposition: factor count mismatch");
    }
    const std::size_t w = width();
    for (std::size_t i = 0; i < axes.size(); ++i) {
      if (factors[i].rows() != shape[axes[i]] || factors[i].width() != w) {
        throw std::invalid_argument("CutDecomposition: factor shape mismatch");
      }
    }
    if (coefficients.size() != w * channels()) {
      throw std::invalid_argument("CutDecomposition: coefficient count mismatch");
    }
    for (double c : coefficients) {
      if (!std::isfinite(c)) throw std::invalid_argument("CutDecomposition: non-finite coefficient");
    }
  }

  friend bool operator==(const CutDecomposition&, const CutDecomposition&) = default;
};

/// First `new_width` terms of a decomposition.
inline CutDecomposition truncated(const CutDecomposition& d, std::size_t new_width) {
  if (new_width > d.width()) {
    throw std::invalid_argument("truncated: width exceeds stored width");
  }
  CutDecomposition out = CutDecomposition::with_shape(d.shape, d.channel_axis);
  for (std::size_t i = 0; i < d.factors.size(); ++i) {
    for (std::size_t j = 0; j < new_width; ++j) out.factors[i].append(d.factors[i].column(j));
  }
  out.coefficients.assign(d.coefficients.begin(),
                          d.coefficients.begin() +
                              static_cast<std::ptrdiff_t>(new_width * d.channels()));
  return out;
}

namespace detail {

/// Lightweight view of one rank-1 sign term for the fused accumulators.
struct TermView {
  std::vector<const SignVector*> signs;  // one per sign axis, ascending
  const double* coeffs = nullptr;        // `channels` values
};

/// out += scale * sum_j coeff_j(channel) * (outer product of term signs).
/// One pass over the tensor; per-term sign parities are maintained
/// incrementally as the row-major odometer advances.
inline void accumulate_terms(DenseTensor& out, std::span<const std::size_t> sign_axes,
                             int channel_axis, std::size_t channels,
                             std::span<const TermView> terms, double scale) {
  if (terms.empty()) return;
  const auto& shape = out.shape();
  const std::size_t k = shape.size();
  const std::size_t w = terms.size();
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> axis_slot(k, npos);
  for (std::size_t i = 0; i < sign_axes.size(); ++i) axis_slot[sign_axes[i]] = i;

  // pre-scaled coefficients so the element loop is sign-flip + add only
  std::vector<double> scaled(w * channels);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t ch = 0; ch < channels; ++ch) scaled[j * channels + ch] = scale * terms[j].coeffs[ch];
  }
  std::vector<std::uint64_t> xbits(w, 0);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < sign_axes.size(); ++i) {
      xbits[j] ^= terms[j].signs[i]->is_negative(0) ? 1u : 0u;
    }
  }
  std::vector<std::size_t> idx(k, 0);
  auto data = out.data();
  for (std::size_t e = 0; e < data.size(); ++e) {
    const std::size_t ch = channel_axis >= 0 ? idx[static_cast<std::size_t>(channel_axis)] : 0;
    double acc = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      acc += flip_sign_if(scaled[j * channels + ch], xbits[j]);
    }
    data[e] += acc;
    for (std::size_t d = k; d-- > 0;) {  // row-major odometer
      const std::size_t slot = axis_slot[d];
      const std::size_t old = idx[d];
      if (++idx[d] < shape[d]) {
        if (slot != npos) {
          for (std::size_t j = 0; j < w; ++j) {
            const SignVector& sv = *terms[j].signs[slot];
            xbits[j] ^= (sv.is_negative(old) ? 1u : 0u) ^ (sv.is_negative(idx[d]) ? 1u : 0u);
          }
        }
        break;
      }
      idx[d] = 0;
      if (slot != npos) {
        for (std::size_t j = 0; j < w; ++j) {
          const SignVector& sv = *terms[j].signs[slot];
          xbits[j] ^= (sv.is_negative(old) ? 1u : 0u) ^ (sv.is_negative(0) ? 1u : 0u);
        }
      }
    }
  }
}

inline void accumulate_expansion(DenseTensor& out, const CutDecomposition& d, double scale,
                                 std::size_t first_term = 0) {
  const std::size_t w = d.width();
  if (first_term >= w) return;
  const auto axes = d.sign_axes();
  std::vector<TermView> views;
  views.reserve(w - first_term);
  for (std::size_t j = first_term; j < w; ++j) {
    TermView v;
    v.signs.reserve(d.factors.size());
    for (const SignMatrix& f : d.factors) v.signs.push_back(&f.column(j));
    v.coeffs = d.term_coefficients(j);
    views.push_back(std::move(v));
  }
  accumulate_terms(out, axes, d.channel_axis, d.channels(), views, scale);
}

/// Materializes buffered greedy terms into the residual and empties the buffer.
inline void flush_pending(DenseTensor& base, std::vector<PendingTerm>& pending,
                          std::span<const std::size_t> all_axes) {
  if (pending.empty()) return;
  std::vector<TermView> views;
  views.reserve(pending.size());
  for (const PendingTerm& p : pending) {
    TermView v;
    v.signs.reserve(p.signs.size());
    for (const SignVector& s : p.signs) v.signs.push_back(&s);
    v.coeffs = &p.alpha;
    views.push_back(std::move(v));
  }
  accumulate_terms(base, all_axes, /*channel_axis=*/-1, /*channels=*/1, views, -1.0);
  pending.clear();
}

/// <outer product of signs over the sign axes, a>, accumulated per channel
/// slice; channel_axis == -1 yields a single value.
inline std::vector<double> contract_term(const DenseTensor& a, int channel_axis,
                                         std::span<const SignVector> signs) {
  const auto& shape = a.shape();
  const std::size_t k = shape.size();
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> axis_slot(k, npos);
  {
    std::size_t slot = 0;
    for (std::size_t i = 0; i < k; ++i) {
      if (static_cast<int>(i) != channel_axis) axis_slot[i] = slot++;
    }
    if (signs.size() != slot) throw std::invalid_argument("contract_term: sign arity mismatch");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (axis_slot[i] != npos && signs[axis_slot[i]].size() != shape[i]) {
      throw std::invalid_argument("contract_term: sign length mismatch");
    }
  }
  const std::size_t channels =
      channel_axis >= 0 ? shape[static_cast<std::size_t>(channel_axis)] : 1;
  std::vector<double> out(channels, 0.0);
  std::vector<std::size_t> idx(k, 0);
  std::uint64_t xbit = 0;
  for (std::size_t i = 0; i < k; ++i) {
    if (axis_slot[i] != npos) xbit ^= signs[axis_slot[i]].is_negative(0) ? 1u : 0u;
  }
  const auto data = a.data();
  for (std::size_t e = 0; e < data.size(); ++e) {
    const std::size_t ch = channel_axis >= 0 ? idx[static_cast<std::size_t>(channel_axis)] : 0;
    out[ch] += flip_sign_if(data[e], xbit);
    for (std::size_t d = k; d-- > 0;) {
      const std::size_t slot = axis_slot[d];
      if (slot != npos) xbit ^= signs[slot].is_negative(idx[d]) ? 1u : 0u;
      if (++idx[d] < shape[d]) {
        if (slot != npos) xbit ^= signs[slot].is_negative(idx[d]) ? 1u : 0u;
        break;
      }
      idx[d] = 0;
      if (slot != npos) xbit ^= signs[slot].is_negative(0) ? 1u : 0u;
    }
  }
  return out;
}

}  // namespace detail

/// Reconstruction: sum of coefficient-scaled sign outer products; width 0
/// gives the zero tensor.
inline DenseTensor expand(const CutDecomposition& d) {
  DenseTensor out = DenseTensor::zeros(d.shape);
  detail::accumulate_expansion(out, d, +1.0);
  return out;
}

/// Decomposition driver knobs.
struct DecomposeConfig {
  enum class Method : std::uint8_t { kGreedy, kLeastSquares };

  std::size_t width = 0;
  std::size_t flush_width = 32;  // buffered terms before the residual is materialized
  Method method = Method::kGreedy;
  SearchConfig search;
  bool record_curve = false;
  /// Stop appending terms once a cut value falls below this fraction of the
  /// first term's value. 0 never stops early.
  double min_value_fraction = 0.0;
  /// Guard against runaway factor storage.
  std::size_t max_factor_bytes = std::size_t{1} << 30;
};

namespace detail {

inline void check_decompose_config(const DenseTensor& a, const DecomposeConfig& cfg,
                                   std::size_t channels) {
  if (cfg.flush_width < 1) throw std::invalid_argument("DecomposeConfig: flush_width must be >= 1");
  std::size_t per_term_bytes = channels * sizeof(double);
  for (std::size_t n : a.shape()) per_term_bytes += SignVector::word_count(n) * sizeof(std::uint64_t);
  if (cfg.width > 0 && per_term_bytes > cfg.max_factor_bytes / cfg.width) {
    throw std::invalid_argument("DecomposeConfig: width exceeds the factor memory budget");
  }
}

inline SearchConfig term_search_config(const SearchConfig& base, std::size_t term) {
  SearchConfig cfg = base;
  cfg.seed = substream(base.seed, term);
  return cfg;
}

}  // namespace detail

/// Residual-deflation decomposition: each step finds a sign term on the
/// implicit residual, stores alpha_k = c_k / prod(n), and defers the rank-1
/// subtraction until flush_width terms are buffered. Every step obeys
/// ||R_{k+1}||_F^2 = ||R_k||_F^2 - c_{k+1}^2 / prod(n); the recorded curve
/// uses that recurrence between flushes and re-anchors on the exact residual
/// norm at each flush.
inline std::pair<CutDecomposition, CutReport> greedy_decompose(const DenseTensor& a,
                                                               const DecomposeConfig& cfg) {
  detail::check_decompose_config(a, cfg, 1);
  const double n_entries = static_cast<double>(a.numel());
  CutDecomposition d = CutDecomposition::with_shape(a.shape());
  CutReport report;
  report.input_norm = a.frobenius_norm();
  const StorageModel default_model{64, 64, a.shape(), -1};

  std::vector<std::size_t> all_axes(a.order());
  for (std::size_t i = 0; i < all_axes.size(); ++i) all_axes[i] = i;

  DenseTensor base = a;  // explicit part R' of the buffered residual
  std::vector<detail::PendingTerm> pending;
  pending.reserve(cfg.flush_width);
  double resid_sq = a.squared_norm();
  double first_value = 0.0;

  for (std::size_t term = 0; term < cfg.width; ++term) {
    const SearchConfig scfg = detail::term_search_config(cfg.search, term);
    CutResult res = detail::search_tensor_residual(base, pending, scfg, nullptr);
    if (term == 0) {
      first_value = res.value;
    } else if (res.value < cfg.min_value_fraction * first_value) {
      break;
    }
    const double alpha = res.value / n_entries;
    d.append_term(res.signs, std::span<const double>(&alpha, 1));
    resid_sq = std::max(0.0, resid_sq - res.value * res.value / n_entries);
    pending.push_back(detail::PendingTerm{std::move(res.signs), alpha});
    if (pending.size() >= cfg.flush_width) {
      detail::flush_pending(base, pending, all_axes);
      resid_sq = base.squared_norm();  // exact re-anchor against recurrence drift
    }
    if (cfg.record_curve) {
      report.steps.push_back(CutStep{term + 1, res.value, std::sqrt(resid_sq),
                                     compression_rate(term + 1, default_model)});
    }
  }
  detail::flush_pending(base, pending, all_axes);
  resid_sq = base.squared_norm();
  if (cfg.record_curve && !report.steps.empty()) {
    report.steps.back().residual_norm = std::sqrt(resid_sq);
  }
  report.width = d.width();
  report.final_residual_norm = std::sqrt(resid_sq);
  return {std::move(d), std::move(report)};
}

namespace detail {

/// Gram column of a candidate term against the first `count` kept terms plus
/// its diagonal: entries are products of per-axis integer sign dots.
inline std::vector<double> gram_column(const CutDecomposition& d, std::size_t count,
                                       std::span<const SignVector> new_signs) {
  std::vector<double> col(count + 1, 1.0);
  for (std::size_t j = 0; j < count; ++j) {
    double g = 1.0;
    for (std::size_t f = 0; f < d.factors.size(); ++f) {
      g *= static_cast<double>(sign_dot(d.factors[f].column(j), new_signs[f]));
    }
    col[j] = g;
  }
  double diag = 1.0;
  for (const SignVector& s : new_signs) diag *= static_cast<double>(s.size());
  col[count] = diag;
  return col;
}

inline GramSystem build_gram(const DenseTensor& a, const CutDecomposition& d) {
  GramSystem sys;
  sys.channels = d.channels();
  for (std::size_t j = 0; j < d.width(); ++j) {
    std::vector<SignVector> signs;
    signs.reserve(d.factors.size());
    for (const SignMatrix& f : d.factors) signs.push_back(f.column(j));
    sys.extend(gram_column(d, j, signs), contract_term(a, d.channel_axis, signs));
  }
  return sys;
}

/// -2 c.b + c.G c; differences of this quadratic order candidate coefficient
/// vectors by the residual norm they produce.
inline double gram_quadratic(const GramSystem& sys, std::span<const double> c) {
  double value = 0.0;
  const std::size_t w = sys.width;
  for (std::size_t ch = 0; ch < sys.channels; ++ch) {
    for (std::size_t i = 0; i < w; ++i) {
      const double ci = c[i * sys.channels + ch];
      value -= 2.0 * ci * sys.rhs[i * sys.channels + ch];
      double row = 0.0;
      for (std::size_t j = 0; j < w; ++j) row += sys.g(i, j) * c[j * sys.channels + ch];
      value += ci * row;
    }
  }
  return value;
}

}  // namespace detail

/// Refits all coefficients with the sign factors held fixed by solving the
/// normal equations; the factors are untouched and the reconstruction error
/// never increases (the previous coefficients are kept if the regularized
/// solve would be worse).
inline CutDecomposition correct_coefficients(const DenseTensor& a, const CutDecomposition& d) {
  if (a.shape() != d.shape) throw std::invalid_argument("correct_coefficients: shape mismatch");
  if (d.width() == 0) return d;
  const GramSystem sys = detail::build_gram(a, d);
  std::vector<double> solved = solve_gram(sys);
  CutDecomposition out = d;
  if (detail::gram_quadratic(sys, solved) <= detail::gram_quadratic(sys, d.coefficients)) {
    out.coefficients = std::move(solved);
  }
  return out;
}

/// Least-squares decomposition: each step searches the explicit residual
/// A - expand(current), appends the found sign term, and re-solves the
/// normal equations for all coefficients, leaving the residual orthogonal to
/// every kept sign outer product.
inline std::pair<CutDecomposition, CutReport> lstsq_decompose(const DenseTensor& a,
                                                              const DecomposeConfig& cfg) {
  detail::check_decompose_config(a, cfg, 1);
  CutDecomposition d = CutDecomposition::with_shape(a.shape());
  GramSystem sys;
  CutReport report;
  report.input_norm = a.frobenius_norm();
  report.final_residual_norm = report.input_norm;
  const StorageModel default_model{64, 64, a.shape(), -1};

  DenseTensor residual = a;
  double first_value = 0.0;
  for (std::size_t term = 0; term < cfg.width; ++term) {
    const SearchConfig scfg = detail::term_search_config(cfg.search, term);
    CutResult res = detail::search_tensor_residual(residual, {}, scfg, nullptr);
    if (term == 0) {
      first_value = res.value;
    } else if (res.value < cfg.min_value_fraction * first_value) {
      break;
    }
    sys.extend(detail::gram_column(d, d.width(), res.signs),
               detail::contract_term(a, -1, res.signs));
    const double placeholder = 0.0;
    d.append_term(res.signs, std::span<const double>(&placeholder, 1));
    d.coefficients = solve_gram(sys);
    residual = a;
    detail::accumulate_expansion(residual, d, -1.0);
    report.final_residual_norm = residual.frobenius_norm();
    if (cfg.record_curve) {
      report.steps.push_back(CutStep{term + 1, res.value, report.final_residual_norm,
                                     compression_rate(term + 1, default_model)});
    }
  }
  report.width = d.width();
  return {std::move(d), std::move(report)};
}

/// Dispatch on the configured method.
inline std::pair<CutDecomposition, CutReport> decompose(const DenseTensor& a,
                                                        const DecomposeConfig& cfg) {
  return cfg.method == DecomposeConfig::Method::kGreedy ? greedy_decompose(a, cfg)
                                                        : lstsq_decompose(a, cfg);
}

/// Scalar-channel decomposition for tensors with one short axis (images:
/// m x n x 3). Sign factors live on the other axes and are shared across
/// channels; each term carries one coefficient per channel, re-solved by
/// least squares after every appended term. All channels share a single
/// Gram matrix (it only involves the sign axes), solved with `channels`
/// right-hand sides. Term search runs the axial sweep over all axes,
/// including the channel axis, and drops the channel sign.
inline std::pair<CutDecomposition, CutReport> rgb_scalars_decompose(
    const DenseTensor& a, const DecomposeConfig& cfg,
    std::optional<std::size_t> channel_axis_opt = {}) {
  const std::size_t k = a.order();
  if (k < 2) throw std::invalid_argument("rgb_scalars_decompose: order >= 2 required");
  const std::size_t channel_axis = channel_axis_opt.value_or(k - 1);
  if (channel_axis >= k) {
    throw std::invalid_argument("rgb_scalars_decompose: channel axis out of range");
  }
  const std::size_t q = a.shape()[channel_axis];
  if (q > 8) throw std::invalid_argument("rgb_scalars_decompose: channel axis too long");
  detail::check_decompose_config(a, cfg, q);

  CutDecomposition d = CutDecomposition::with_shape(a.shape(), static_cast<int>(channel_axis));
  GramSystem sys;
  sys.channels = q;
  CutReport report;
  report.input_norm = a.frobenius_norm();
  report.final_residual_norm = report.input_norm;
  const StorageModel default_model{64, 64, a.shape(), static_cast<int>(channel_axis)};

  DenseTensor residual = a;
  double first_value = 0.0;
  for (std::size_t term = 0; term < cfg.width; ++term) {
    const SearchConfig scfg = detail::term_search_config(cfg.search, term);
    CutResult res = detail::search_tensor_residual(residual, {}, scfg, nullptr);
    if (term == 0) {
      first_value = res.value;
    } else if (res.value < cfg.min_value_fraction * first_value) {
      break;
    }
    std::vector<SignVector> spatial;
    spatial.reserve(k - 1);
    for (std::size_t i = 0; i < k; ++i) {
      if (i != channel_axis) spatial.push_back(std::move(res.signs[i]));
    }
    sys.extend(detail::gram_column(d, d.width(), spatial),
               detail::contract_term(a, static_cast<int>(channel_axis), spatial));
    const std::vector<double> placeholder(q, 0.0);
    d.append_term(spatial, placeholder);
    d.coefficients = solve_gram(sys);
    residual = a;
    detail::accumulate_expansion(residual, d, -1.0);
    report.final_residual_norm = residual.frobenius_norm();
    if (cfg.record_curve) {
      report.steps.push_back(CutStep{term + 1, res.value, report.final_residual_norm,
                                     compression_rate(term + 1, default_model)});
    }
  }
  report.width = d.width();
  return {std::move(d), std::move(report)};
}

}  // namespace sigcut
