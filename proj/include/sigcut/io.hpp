#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "sigcut/decompose.hpp"
#include "sigcut/dense_tensor.hpp"
#include "sigcut/metrics.hpp"

namespace sigcut {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  if (!os) throw io_error("write failed");
}

inline void get_bytes(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw io_error("truncated payload");
}

inline void put_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }

inline std::uint8_t get_u8(std::istream& is) {
  std::uint8_t v = 0;
  get_bytes(is, &v, 1);
  return v;
}

inline void put_u64le(std::ostream& os, std::uint64_t v) {
  std::uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  put_bytes(os, b, 8);
}

inline std::uint64_t get_u64le(std::istream& is) {
  std::uint8_t b[8];
  get_bytes(is, b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void put_u32le(std::ostream& os, std::uint32_t v) {
  std::uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<std::uint8_t>(v >> (8 * i));
  put_bytes(os, b, 4);
}

inline std::uint32_t get_u32le(std::istream& is) {
  std::uint8_t b[4];
  get_bytes(is, b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline void put_f64le(std::ostream& os, double v) { put_u64le(os, std::bit_cast<std::uint64_t>(v)); }
inline double get_f64le(std::istream& is) { return std::bit_cast<double>(get_u64le(is)); }
inline void put_f32le(std::ostream& os, float v) { put_u32le(os, std::bit_cast<std::uint32_t>(v)); }
inline float get_f32le(std::istream& is) { return std::bit_cast<float>(get_u32le(is)); }

inline std::size_t column_bytes(std::size_t len) { return (len + 7) / 8; }

/// Serializes one sign column as ceil(len/8) bytes, LSB-first, 1 = -1.
inline void put_sign_column(std::ostream& os, const SignVector& s) {
  const auto words = s.words();
  std::size_t remaining = column_bytes(s.size());
  for (std::size_t u = 0; u < words.size() && remaining > 0; ++u) {
    const std::size_t take = std::min<std::size_t>(8, remaining);
    std::uint8_t b[8];
    for (std::size_t i = 0; i < take; ++i) b[i] = static_cast<std::uint8_t>(words[u] >> (8 * i));
    put_bytes(os, b, take);
    remaining -= take;
  }
}

inline SignVector get_sign_column(std::istream& is, std::size_t len) {
  std::vector<std::uint64_t> words(SignVector::word_count(len), 0);
  std::size_t remaining = column_bytes(len);
  for (std::size_t u = 0; u < words.size() && remaining > 0; ++u) {
    const std::size_t take = std::min<std::size_t>(8, remaining);
    std::uint8_t b[8] = {};
    get_bytes(is, b, take);
    for (std::size_t i = 0; i < take; ++i) words[u] |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    remaining -= take;
  }
  try {
    return SignVector::from_words(len, std::move(words));  // validates byte pad bits
  } catch (const std::invalid_argument&) {
    throw io_error("sign column has nonzero pad bits");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SCD container: bit-exact persistence of a CutDecomposition.
//
//   magic "SCD1"
//   order k            u8
//   channel_mode       u8   (0 = signs on all axes, 1 = scalar-channel)
//   [channel_axis      u8   only when channel_mode = 1]
//   shape              k x u64 LE
//   width              u64 LE
//   coeff_bits         u8   (32 or 64)
//   then width term records, each:
//     coefficients     channels x coeff_bits/8 bytes, LE IEEE
//     sign columns     one per sign axis (ascending), ceil(n_i/8) bytes,
//                      LSB-first, set bit = -1
//
// Records are term-major, so truncating to the first w' records (and patching
// the width field) yields a valid width-w' file.
// ---------------------------------------------------------------------------

inline constexpr char kScdMagic[4] = {'S', 'C', 'D', '1'};

/// Exact byte size of the SCD encoding.
inline std::size_t scd_file_size(const CutDecomposition& d, int coeff_bits) {
  std::size_t header = 4 + 1 + 1 + (d.channel_axis >= 0 ? 1 : 0) + 8 * d.order() + 8 + 1;
  std::size_t per_term = d.channels() * static_cast<std::size_t>(coeff_bits) / 8;
  for (std::size_t axis : d.sign_axes()) per_term += detail::column_bytes(d.shape[axis]);
  return header + d.width() * per_term;
}

inline void write_scd(std::ostream& os, const CutDecomposition& d, int coeff_bits = 64) {
  if (coeff_bits != 32 && coeff_bits != 64) {
    throw std::invalid_argument("write_scd: coeff_bits must be 32 or 64");
  }
  d.validate();
  detail::put_bytes(os, kScdMagic, 4);
  detail::put_u8(os, static_cast<std::uint8_t>(d.order()));
  detail::put_u8(os, d.channel_axis >= 0 ? 1 : 0);
  if (d.channel_axis >= 0) detail::put_u8(os, static_cast<std::uint8_t>(d.channel_axis));
  for (std::size_t n : d.shape) detail::put_u64le(os, n);
  detail::put_u64le(os, d.width());
  detail::put_u8(os, static_cast<std::uint8_t>(coeff_bits));
  const std::size_t q = d.channels();
  for (std::size_t j = 0; j < d.width(); ++j) {
    const double* c = d.term_coefficients(j);
    for (std::size_t ch = 0; ch < q; ++ch) {
      if (coeff_bits == 64) {
        detail::put_f64le(os, c[ch]);
      } else {
        detail::put_f32le(os, static_cast<float>(c[ch]));  // documented lossy narrowing
      }
    }
    for (const SignMatrix& f : d.factors) detail::put_sign_column(os, f.column(j));
  }
}

inline CutDecomposition read_scd(std::istream& is) {
  char magic[4];
  detail::get_bytes(is, magic, 4);
  if (!std::equal(magic, magic + 4, kScdMagic)) throw io_error("bad SCD magic");
  const std::size_t k = detail::get_u8(is);
  if (k == 0) throw io_error("SCD order must be >= 1");
  const std::uint8_t mode = detail::get_u8(is);
  if (mode > 1) throw io_error("bad SCD channel mode");
  int channel_axis = -1;
  if (mode == 1) {
    channel_axis = detail::get_u8(is);
    if (static_cast<std::size_t>(channel_axis) >= k) throw io_error("SCD channel axis out of range");
  }
  std::vector<std::size_t> shape(k);
  for (auto& n : shape) {
    const std::uint64_t v = detail::get_u64le(is);
    if (v == 0) throw io_error("bad SCD shape");
    n = static_cast<std::size_t>(v);
  }
  try {
    DenseTensor::checked_numel(shape);
  } catch (const std::invalid_argument&) {
    throw io_error("SCD shape overflow");
  }
  const std::uint64_t width = detail::get_u64le(is);
  const int coeff_bits = detail::get_u8(is);
  if (coeff_bits != 32 && coeff_bits != 64) throw io_error("bad SCD coefficient width");

  CutDecomposition d = CutDecomposition::with_shape(shape, channel_axis);
  const std::size_t q = d.channels();
  const auto axes = d.sign_axes();
  d.coefficients.reserve(width * q);
  for (std::uint64_t j = 0; j < width; ++j) {
    for (std::size_t ch = 0; ch < q; ++ch) {
      const double c = coeff_bits == 64 ? detail::get_f64le(is)
                                        : static_cast<double>(detail::get_f32le(is));
      if (!std::isfinite(c)) throw io_error("non-finite SCD coefficient");
      d.coefficients.push_back(c);
    }
    for (std::size_t f = 0; f < axes.size(); ++f) {
      d.factors[f].append(detail::get_sign_column(is, shape[axes[f]]));
    }
  }
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// DTEN container: raw dense tensor exchange.
//
//   magic "DTEN", order k (u8), shape k x u64 LE, dtype u8, payload row-major
//   LE. dtype: 0 = f64, 1 = f32, 2 = u8. Narrow dtypes widen to f64 on read.
// ---------------------------------------------------------------------------

inline constexpr char kDtenMagic[4] = {'D', 'T', 'E', 'N'};

enum class RawDType : std::uint8_t { kF64 = 0, kF32 = 1, kU8 = 2 };

inline void write_raw(std::ostream& os, const DenseTensor& a, RawDType dtype = RawDType::kF64) {
  detail::put_bytes(os, kDtenMagic, 4);
  detail::put_u8(os, static_cast<std::uint8_t>(a.order()));
  for (std::size_t n : a.shape()) detail::put_u64le(os, n);
  detail::put_u8(os, static_cast<std::uint8_t>(dtype));
  const auto data = a.data();
  switch (dtype) {
    case RawDType::kF64:
      for (double v : data) detail::put_f64le(os, v);
      break;
    case RawDType::kF32:
      for (double v : data) detail::put_f32le(os, static_cast<float>(v));
      break;
    case RawDType::kU8:
      for (double v : data) {
        const long r = std::lround(std::clamp(v, 0.0, 255.0));
        detail::put_u8(os, static_cast<std::uint8_t>(r));
      }
      break;
  }
}

/// Reads a DTEN tensor; `source_bits_out`, when given, receives the storage
/// width of the on-disk dtype (64, 32, or 8).
inline DenseTensor read_raw(std::istream& is, int* source_bits_out = nullptr) {
  char magic[4];
  detail::get_bytes(is, magic, 4);
  if (!std::equal(magic, magic + 4, kDtenMagic)) throw io_error("bad DTEN magic");
  const std::size_t k = detail::get_u8(is);
  if (k == 0) throw io_error("DTEN order must be >= 1");
  std::vector<std::size_t> shape(k);
  for (auto& n : shape) {
    const std::uint64_t v = detail::get_u64le(is);
    if (v == 0) throw io_error("DTEN zero-length axis");
    n = static_cast<std::size_t>(v);
  }
  std::size_t count = 0;
  try {
    count = DenseTensor::checked_numel(shape);
  } catch (const std::invalid_argument&) {
    throw io_error("DTEN shape overflow");
  }
  const std::uint8_t dtype = detail::get_u8(is);
  std::vector<double> data(count);
  int source_bits = 64;
  switch (static_cast<RawDType>(dtype)) {
    case RawDType::kF64:
      for (auto& v : data) v = detail::get_f64le(is);
      break;
    case RawDType::kF32:
      source_bits = 32;
      for (auto& v : data) v = static_cast<double>(detail::get_f32le(is));
      break;
    case RawDType::kU8:
      source_bits = 8;
      for (auto& v : data) v = static_cast<double>(detail::get_u8(is));
      break;
    default:
      throw io_error("bad DTEN dtype");
  }
  if (source_bits_out != nullptr) *source_bits_out = source_bits;
  try {
    return DenseTensor(std::move(shape), std::move(data));
  } catch (const std::invalid_argument& e) {
    throw io_error(std::string("invalid DTEN payload: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// PPM (binary P6, maxval 255): images load as height x width x 3 tensors
// with values in [0, 255]; writes clamp to [0, 255] and round half away
// from zero.
// ---------------------------------------------------------------------------

namespace detail {

inline std::size_t ppm_token(std::istream& is) {
  // skip whitespace and '#' comments, then read an unsigned decimal token
  int c = is.get();
  while (c != EOF && (std::isspace(c) || c == '#')) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    }
    c = is.get();
  }
  if (c == EOF || !std::isdigit(c)) throw io_error("malformed PPM header");
  std::size_t value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + static_cast<std::size_t>(c - '0');
    if (value > (std::size_t{1} << 32)) throw io_error("PPM dimension overflow");
    c = is.get();
  }
  if (c != EOF) is.unget();
  return value;
}

}  // namespace detail

inline DenseTensor read_ppm(std::istream& is) {
  char magic[2];
  detail::get_bytes(is, magic, 2);
  if (magic[0] != 'P' || magic[1] != '6') throw io_error("not a binary P6 PPM");
  const std::size_t width = detail::ppm_token(is);
  const std::size_t height = detail::ppm_token(is);
  const std::size_t maxval = detail::ppm_token(is);
  if (maxval != 255) throw io_error("PPM maxval must be 255");
  const int sep = is.get();
  if (sep == EOF || !std::isspace(sep)) throw io_error("malformed PPM header");
  if (width == 0 || height == 0) throw io_error("PPM with empty dimensions");
  std::vector<std::uint8_t> bytes(height * width * 3);
  detail::get_bytes(is, bytes.data(), bytes.size());
  std::vector<double> data(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) data[i] = static_cast<double>(bytes[i]);
  return DenseTensor::from_raw({height, width, 3}, std::move(data));
}

inline void write_ppm(std::ostream& os, const DenseTensor& a) {
  if (a.order() != 3 || a.shape()[2] != 3) {
    throw std::invalid_argument("write_ppm: tensor must have shape m x n x 3");
  }
  const std::size_t height = a.shape()[0];
  const std::size_t width = a.shape()[1];
  os << "P6\n" << width << ' ' << height << "\n255\n";
  if (!os) throw io_error("write failed");
  std::vector<std::uint8_t> bytes(a.numel());
  const auto data = a.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<std::uint8_t>(std::lround(std::clamp(data[i], 0.0, 255.0)));
  }
  detail::put_bytes(os, bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// CSV curve reports: `width,compression_rate,relative_error`, one row per
// point, full-precision decimal floats (round-trip exact).
// ---------------------------------------------------------------------------

inline void write_curve_csv(std::ostream& os, std::span<const CurvePoint> points) {
  os << "width,compression_rate,relative_error\n";
  char buf[64];
  for (const CurvePoint& p : points) {
    os << p.width << ',';
    std::snprintf(buf, sizeof buf, "%.17g", p.compression_rate);
    os << buf << ',';
    std::snprintf(buf, sizeof buf, "%.17g", p.relative_error);
    os << buf << '\n';
  }
  if (!os) throw io_error("write failed");
}

inline std::vector<CurvePoint> read_curve_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "width,compression_rate,relative_error") {
    throw io_error("bad CSV header");
  }
  std::vector<CurvePoint> points;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    CurvePoint p;
    const char* begin = line.data();
    const char* end = line.data() + line.size();
    auto r1 = std::from_chars(begin, end, p.width);
    if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ',') throw io_error("bad CSV row");
    auto r2 = std::from_chars(r1.ptr + 1, end, p.compression_rate);
    if (r2.ec != std::errc() || r2.ptr == end || *r2.ptr != ',') throw io_error("bad CSV row");
    auto r3 = std::from_chars(r2.ptr + 1, end, p.relative_error);
    if (r3.ec != std::errc() || r3.ptr != end) throw io_error("bad CSV row");
    points.push_back(p);
  }
  return points;
}

}  // namespace sigcut
