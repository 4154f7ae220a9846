#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "sigcut/dense_tensor.hpp"
#include "sigcut/kernels.hpp"
#include "sigcut/rng.hpp"
#include "sigcut/sign_vector.hpp"

namespace sigcut {

/// Search knobs. Identical config + input always yields identical output:
/// restart r of a search seeded with `seed` draws from substream(seed, r).
struct SearchConfig {
  std::uint64_t seed = 0;
  std::size_t restarts = 1;
  std::size_t max_sweeps = 100;  // cap against float-noise cycling
};

/// Result of a cut search: the achieved value <s, a> and one sign vector per
/// axis. `iterations` counts alternation sweeps (0 for exhaustive search).
struct CutResult {
  double value = 0.0;
  std::vector<SignVector> signs;
  std::size_t iterations = 0;
};

/// Optional instrumentation, filled from the winning restart: the per-sweep
/// value sequence and the worst relative deviation between delta-maintained
/// products and freshly recomputed ones.
struct SearchDiagnostics {
  std::vector<double> sweep_values;
  double max_cache_rel_error = 0.0;
};

namespace detail {

/// One buffered rank-1 sign term: coefficient(s) and a sign vector per axis.
struct PendingTerm {
  std::vector<SignVector> signs;
  double alpha = 0.0;
};

/// Linear-operator view of a matrix residual R = base - sum_j alpha_j s_j t_j^T.
/// Products against the base are cached/delta-updated by the caller; buffered
/// terms enter through cheap bit-packed corrections.
class MatrixResidualOp {
 public:
  MatrixResidualOp(const DenseTensor& base, std::span<const PendingTerm> pending)
      : base_(base), pending_(pending) {
    require_matrix(base, "MatrixResidualOp");
  }

  std::size_t rows() const { return base_.rows(); }
  std::size_t cols() const { return base_.cols(); }

  std::vector<double> base_apply(const SignVector& t) const { return matvec_signed(base_, t); }
  std::vector<double> base_apply_t(const SignVector& s) const { return matvec_signed_t(base_, s); }

  void base_delta(std::span<double> y, const SignVector& t_new, const SignVector& t_old) const {
    delta_matvec_inplace(base_, y, t_new, t_old);
  }
  void base_delta_t(std::span<double> z, const SignVector& s_new, const SignVector& s_old) const {
    delta_matvec_t_inplace(base_, z, s_new, s_old);
  }

  /// y -= sum_j alpha_j <t_j, t> s_j  (completes y = R t from y = base t).
  void apply_col_correction(std::span<double> y, const SignVector& t) const {
    for (const PendingTerm& p : pending_) {
      const double g = p.alpha * static_cast<double>(sign_dot(p.signs[1], t));
      const SignVector& s = p.signs[0];
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] -= flip_sign_if(g, s.is_negative(i) ? 1u : 0u);
      }
    }
  }

  /// z -= sum_j alpha_j <s_j, s> t_j  (completes z = R^T s).
  void apply_row_correction(std::span<double> z, const SignVector& s) const {
    for (const PendingTerm& p : pending_) {
      const double g = p.alpha * static_cast<double>(sign_dot(p.signs[0], s));
      const SignVector& t = p.signs[1];
      for (std::size_t j = 0; j < z.size(); ++j) {
        z[j] -= flip_sign_if(g, t.is_negative(j) ? 1u : 0u);
      }
    }
  }

 private:
  const DenseTensor& base_;
  std::span<const PendingTerm> pending_;
};

/// Tensor residual r = base - sum_j alpha_j (x) s_j; axial contractions of the
/// buffered terms collapse to products of integer sign dots.
class TensorResidualOp {
 public:
  TensorResidualOp(const DenseTensor& base, std::span<const PendingTerm> pending)
      : base_(base), pending_(pending) {}

  const std::vector<std::size_t>& shape() const { return base_.shape(); }

  std::vector<double> axial(std::size_t axis, std::span<const SignVector> signs) const {
    std::vector<double> v = axial_contract(base_, axis, signs);
    for (const PendingTerm& p : pending_) {
      double g = p.alpha;
      for (std::size_t i = 0; i < p.signs.size(); ++i) {
        if (i != axis) g *= static_cast<double>(sign_dot(p.signs[i], signs[i]));
      }
      const SignVector& sa = p.signs[axis];
      for (std::size_t q = 0; q < v.size(); ++q) {
        v[q] -= flip_sign_if(g, sa.is_negative(q) ? 1u : 0u);
      }
    }
    return v;
  }

 private:
  const DenseTensor& base_;
  std::span<const PendingTerm> pending_;
};

constexpr std::size_t kCacheRefreshSweeps = 16;

inline void track_cache_error(SearchDiagnostics* diag, std::span<const double> cached,
                              std::span<const double> fresh) {
  for (std::size_t i = 0; i < cached.size(); ++i) {
    const double scale = std::max(1.0, std::abs(fresh[i]));
    diag->max_cache_rel_error =
        std::max(diag->max_cache_rel_error, std::abs(cached[i] - fresh[i]) / scale);
  }
}

/// One alternating-maximization run on a matrix residual, s := sgn(R t),
/// t := sgn(R^T s), with both products cached and delta-updated between
/// sweeps. Stops at the first non-improving sweep and returns the current
/// triple; the value sequence is non-decreasing (each half-step is an exact
/// argmax given the other side).
inline CutResult greedy_matrix_run(const MatrixResidualOp& op, Xoshiro256pp& rng,
                                   std::size_t max_sweeps, SearchDiagnostics* diag) {
  const std::size_t m = op.rows();
  const std::size_t n = op.cols();
  SignVector s = random_sign_vector(rng, m);  // sampled as in the recurrence; overwritten first
  SignVector t = random_sign_vector(rng, n);
  std::vector<double> y_base = op.base_apply(t);  // base . t
  std::vector<double> z_base;                     // base^T . s, valid from sweep 1
  double c_prev = -std::numeric_limits<double>::infinity();
  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    std::vector<double> y = y_base;
    op.apply_col_correction(y, t);
    SignVector s_new = sgn_vector(y);
    if (sweep == 1) {
      z_base = op.base_apply_t(s_new);
    } else {
      op.base_delta_t(z_base, s_new, s);
    }
    std::vector<double> z = z_base;
    op.apply_row_correction(z, s_new);
    SignVector t_new = sgn_vector(z);
    op.base_delta(y_base, t_new, t);
    if (sweep % kCacheRefreshSweeps == 0) {  // bound float drift of the delta path
      y_base = op.base_apply(t_new);
      z_base = op.base_apply_t(s_new);
    } else if (diag != nullptr) {
      track_cache_error(diag, y_base, op.base_apply(t_new));
      track_cache_error(diag, z_base, op.base_apply_t(s_new));
    }
    std::vector<double> yr = y_base;
    op.apply_col_correction(yr, t_new);
    const double c = signed_dot(s_new, yr);
    if (diag != nullptr) diag->sweep_values.push_back(c);
    if (c <= c_prev) {
      return CutResult{c, {std::move(s_new), std::move(t_new)}, sweep};
    }
    c_prev = c;
    s = std::move(s_new);
    t = std::move(t_new);
  }
  return CutResult{c_prev, {std::move(s), std::move(t)}, max_sweeps};
}

/// One Gauss-Seidel sweep run for tensors: axes visited in order, each update
/// using already-updated signs on earlier axes and previous-sweep signs on
/// later ones.
inline CutResult axial_run(const TensorResidualOp& op, Xoshiro256pp& rng,
                           std::size_t max_sweeps, SearchDiagnostics* diag) {
  const auto& shape = op.shape();
  const std::size_t k = shape.size();
  std::vector<SignVector> signs;
  signs.reserve(k);
  for (std::size_t i = 0; i < k; ++i) signs.push_back(random_sign_vector(rng, shape[i]));
  double c_prev = -std::numeric_limits<double>::infinity();
  std::size_t last_sweep = 0;
  for (std::size_t sweep = 1; sweep <= max_sweeps; ++sweep) {
    std::vector<double> v;
    for (std::size_t axis = 0; axis < k; ++axis) {
      v = op.axial(axis, signs);
      signs[axis] = sgn_vector(v);
    }
    const double c = signed_dot(signs[k - 1], v);
    if (diag != nullptr) diag->sweep_values.push_back(c);
    if (c <= c_prev) return CutResult{c, std::move(signs), sweep};
    c_prev = c;
    last_sweep = sweep;
  }
  return CutResult{c_prev, std::move(signs), last_sweep};
}

template <typename RunFn>
CutResult best_of_restarts(const SearchConfig& cfg, SearchDiagnostics* diag, RunFn&& run) {
  if (cfg.restarts < 1) throw std::invalid_argument("SearchConfig: restarts must be >= 1");
  if (cfg.max_sweeps < 1) throw std::invalid_argument("SearchConfig: max_sweeps must be >= 1");
  CutResult best;
  bool have_best = false;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    Xoshiro256pp rng(substream(cfg.seed, r));
    SearchDiagnostics local;
    CutResult res = run(rng, diag != nullptr ? &local : nullptr);
    // strict improvement keeps the earliest restart on ties (deterministic)
    if (!have_best || res.value > best.value) {
      best = std::move(res);
      have_best = true;
      if (diag != nullptr) *diag = std::move(local);
    }
  }
  return best;
}

inline CutResult search_matrix_residual(const DenseTensor& base,
                                        std::span<const PendingTerm> pending,
                                        const SearchConfig& cfg, SearchDiagnostics* diag) {
  MatrixResidualOp op(base, pending);
  return best_of_restarts(cfg, diag, [&](Xoshiro256pp& rng, SearchDiagnostics* d) {
    return greedy_matrix_run(op, rng, cfg.max_sweeps, d);
  });
}

inline CutResult search_tensor_residual(const DenseTensor& base,
                                        std::span<const PendingTerm> pending,
                                        const SearchConfig& cfg, SearchDiagnostics* diag) {
  if (base.order() == 2) return search_matrix_residual(base, pending, cfg, diag);
  TensorResidualOp op(base, pending);
  return best_of_restarts(cfg, diag, [&](Xoshiro256pp& rng, SearchDiagnostics* d) {
    return axial_run(op, rng, cfg.max_sweeps, d);
  });
}

}  // namespace detail

/// Randomized greedy lower bound on the signed cut norm of a matrix:
/// alternate s := sgn(A t), t := sgn(A^T s) until the value stops improving;
/// best of cfg.restarts independent initializations.
inline CutResult greedy_signed_cut(const DenseTensor& a, const SearchConfig& cfg = {},
                                   SearchDiagnostics* diag = nullptr) {
  if (a.order() != 2) throw std::invalid_argument("greedy_signed_cut: matrix required");
  return detail::search_matrix_residual(a, {}, cfg, diag);
}

/// Tensor generalization: per sweep, axes are visited in order and each
/// axis update takes the sign of the contraction against all other axes'
/// current signs. For matrices this routes to greedy_signed_cut, so the two
/// agree exactly for order 2.
inline CutResult axial_greedy_cut(const DenseTensor& a, const SearchConfig& cfg = {},
                                  SearchDiagnostics* diag = nullptr) {
  return detail::search_tensor_residual(a, {}, cfg, diag);
}

/// Exact signed cut norm by enumeration; test oracle for small instances.
/// Exploits the global flip symmetry: the first entry of the first axis is
/// fixed to +1 and |<s, a>| is maximized.
inline CutResult brute_force_cut(const DenseTensor& a) {
  const auto& shape = a.shape();
  const std::size_t k = shape.size();
  std::size_t total_bits = 0;
  for (std::size_t d : shape) total_bits += d;
  if (total_bits > 24) throw std::invalid_argument("brute_force_cut: instance too large");

  const auto decode = [&](std::uint64_t code) {
    std::vector<SignVector> signs;
    signs.reserve(k);
    std::uint64_t bits = code << 1;  // bit 0 of axis 0 pinned to +1
    for (std::size_t i = 0; i < k; ++i) {
      const std::uint64_t mask = (std::uint64_t{1} << shape[i]) - 1;  // shape[i] <= 24
      signs.push_back(SignVector::from_words(shape[i], {bits & mask}));
      bits >>= shape[i];
    }
    return signs;
  };

  double best_abs = -1.0;
  std::uint64_t best_code = 0;
  const std::uint64_t classes = std::uint64_t{1} << (total_bits - 1);
  for (std::uint64_t code = 0; code < classes; ++code) {
    const auto signs = decode(code);
    const double v = std::abs(signed_contract(a, signs));
    if (v > best_abs) {
      best_abs = v;
      best_code = code;
    }
  }
  auto signs = decode(best_code);
  if (signed_contract(a, signs) < 0.0) signs[0].negate();
  return CutResult{signed_contract(a, signs), std::move(signs), 0};
}

}  // namespace sigcut
