#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sigcut/dense_tensor.hpp"

namespace sigcut {

/// Storage accounting for a decomposition of the given shape: each kept term
/// costs coeff_bits plus one bit per entry along every sign axis; the
/// original tensor costs source_bits per entry. channel_axis >= 0 selects the
/// scalar-channel variant, whose terms carry one coefficient per channel and
/// no sign bits on the channel axis.
struct StorageModel {
  int coeff_bits = 64;
  int source_bits = 64;
  std::vector<std::size_t> shape;
  int channel_axis = -1;

  std::size_t bits_per_term() const {
    std::size_t sign_bits = 0;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (static_cast<int>(i) != channel_axis) sign_bits += shape[i];
    }
    const std::size_t coeff_count =
        channel_axis >= 0 ? shape[static_cast<std::size_t>(channel_axis)] : 1;
    return coeff_count * static_cast<std::size_t>(coeff_bits) + sign_bits;
  }

  std::size_t source_entries() const { return DenseTensor::checked_numel(shape); }
};

/// One row of an error-vs-compression curve.
struct CurvePoint {
  std::size_t width = 0;
  double compression_rate = 0.0;
  double relative_error = 1.0;
};

/// Stored bits of a width-k decomposition over stored bits of the original:
/// k * (coeff_bits + sum of sign-axis lengths) / (source_bits * entry count).
inline double compression_rate(std::size_t k, const StorageModel& model) {
  const double term_bits = static_cast<double>(model.bits_per_term());
  const double source_bits =
      static_cast<double>(model.source_bits) * static_cast<double>(model.source_entries());
  return static_cast<double>(k) * term_bits / source_bits;
}

/// Largest width whose decomposition fits in `rate` times the source storage:
/// floor(rate * source_bits * prod(n) / (coeff_bits + sum(n))).
inline std::size_t width_for_compression(const StorageModel& model, double rate) {
  if (!(rate > 0.0) || rate > 1.0) {
    throw std::invalid_argument("width_for_compression: rate must be in (0, 1]");
  }
  const double source_bits =
      static_cast<double>(model.source_bits) * static_cast<double>(model.source_entries());
  return static_cast<std::size_t>(
      std::floor(rate * source_bits / static_cast<double>(model.bits_per_term())));
}

/// ||a - b||_F / ||a||_F, or over a caller-supplied fixed denominator (e.g.
/// 255 * sqrt(3mn) for byte images).
inline double relative_error(const DenseTensor& a, const DenseTensor& b,
                             std::optional<double> fixed_denominator = {}) {
  if (a.shape() != b.shape()) throw std::invalid_argument("relative_error: shape mismatch");
  double diff2 = 0.0;
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    diff2 += d * d;
  }
  const double denom = fixed_denominator ? *fixed_denominator : a.frobenius_norm();
  if (denom == 0.0) throw std::invalid_argument("relative_error: zero denominator");
  return std::sqrt(diff2) / denom;
}

/// Per-term record of a decomposition run. `compression` is filled with the
/// default f64-coefficients-over-f64-source model; emit_curve recomputes it
/// for any other storage model.
struct CutStep {
  std::size_t k = 0;            // width after this term
  double cut_value = 0.0;       // c_k
  double residual_norm = 0.0;   // ||R_k||_F
  double compression = 0.0;     // p_k under the default model
};

struct CutReport {
  std::vector<CutStep> steps;  // one per term when curve recording is on
  double input_norm = 0.0;     // ||A||_F
  double final_residual_norm = 0.0;
  std::size_t width = 0;
};

/// Expands a report into (k, p_k, r_k) rows under the given storage model,
/// starting from the width-0 point (0, 0, 1).
inline std::vector<CurvePoint> emit_curve(const CutReport& report, const StorageModel& model) {
  if (report.input_norm == 0.0) throw std::invalid_argument("emit_curve: zero input norm");
  std::vector<CurvePoint> points;
  points.reserve(report.steps.size() + 1);
  points.push_back(CurvePoint{0, 0.0, 1.0});
  for (const CutStep& s : report.steps) {
    points.push_back(CurvePoint{s.k, compression_rate(s.k, model),
                                s.residual_norm / report.input_norm});
  }
  return points;
}

enum class HalfFormat : std::uint8_t { kBf16, kF16 };

namespace detail {

/// Round-to-nearest-even onto a binary format with the given exponent and
/// fraction widths. Subnormals are rounded faithfully (no flush to zero);
/// values past the largest finite target saturate and set `saturated`.
inline double round_to_binary_format(double x, int exp_bits, int frac_bits, bool& saturated) {
  saturated = false;
  if (x == 0.0) return x;
  const int bias = (1 << (exp_bits - 1)) - 1;
  const int emax = bias;      // largest unbiased exponent of a normal value
  const int emin = 1 - bias;  // smallest
  int e = std::ilogb(std::abs(x));
  if (e < emin) e = emin;  // subnormal range shares the quantum of emin
  const double ulp = std::ldexp(1.0, e - frac_bits);
  const double r = std::nearbyint(x / ulp) * ulp;  // RNE in the default mode
  const double max_finite = (2.0 - std::ldexp(1.0, -frac_bits)) * std::ldexp(1.0, emax);
  if (std::abs(r) > max_finite) {
    saturated = true;
    return std::copysign(max_finite, x);
  }
  return r;
}

}  // namespace detail

struct QuantizeStats {
  std::size_t saturated = 0;  // entries clamped to +-max finite
};

/// Rounds every entry to the nearest bf16 (8-bit exponent, 7-bit fraction) or
/// f16 (5-bit exponent, 10-bit fraction) value and widens back to f64.
inline DenseTensor quantize_half(const DenseTensor& a, HalfFormat format,
                                 QuantizeStats* stats = nullptr) {
  const int exp_bits = format == HalfFormat::kBf16 ? 8 : 5;
  const int frac_bits = format == HalfFormat::kBf16 ? 7 : 10;
  std::vector<double> out(a.numel());
  const auto data = a.data();
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool sat = false;
    out[i] = detail::round_to_binary_format(data[i], exp_bits, frac_bits, sat);
    saturated += sat ? 1 : 0;
  }
  if (stats != nullptr) stats->saturated = saturated;
  return DenseTensor::from_raw(a.shape(), std::move(out));
}

}  // namespace sigcut
