#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sigcut/rng.hpp"

namespace sigcut {

inline constexpr std::size_t kWordBits = 64;

/// Bit-packed {-1,+1} vector. Bit b of word u holds entry 64*u + b
/// (LSB-first); a set bit encodes -1, a clear bit encodes +1. Pad bits past
/// `size()` are always zero, i.e. encode +1, so whole-word kernels paired
/// with zero-padded dense data need no masking.
class SignVector {
 public:
  SignVector() = default;

  /// All-plus vector of the given length.
  explicit SignVector(std::size_t len) : len_(len), words_(word_count(len), 0) {}

  /// Adopts raw words. Pad bits beyond `len` must be zero.
  static SignVector from_words(std::size_t len, std::vector<std::uint64_t> words) {
    if (words.size() != word_count(len)) {
      throw std::invalid_argument("SignVector::from_words: word count mismatch");
    }
    if (const std::size_t tail = len % kWordBits; tail != 0 && !words.empty()) {
      if ((words.back() >> tail) != 0) {
        throw std::invalid_argument("SignVector::from_words: nonzero pad bits");
      }
    }
    SignVector v;
    v.len_ = len;
    v.words_ = std::move(words);
    return v;
  }

  std::size_t size() const noexcept { return len_; }
  std::span<const std::uint64_t> words() const noexcept { return words_; }

  /// True iff entry i is -1.
  bool is_negative(std::size_t i) const noexcept {
    return (words_[i / kWordBits] >> (i % kWordBits)) & 1u;
  }

  int sign_at(std::size_t i) const noexcept { return is_negative(i) ? -1 : +1; }

  void set_negative(std::size_t i, bool negative) noexcept {
    const std::uint64_t mask = std::uint64_t{1} << (i % kWordBits);
    if (negative) {
      words_[i / kWordBits] |= mask;
    } else {
      words_[i / kWordBits] &= ~mask;
    }
  }

  /// Flips every entry (negates the vector). Pad bits stay zero.
  void negate() noexcept {
    for (auto& w : words_) w = ~w;
    clear_pad_bits();
  }

  friend bool operator==(const SignVector&, const SignVector&) = default;

  static std::size_t word_count(std::size_t len) noexcept {
    return (len + kWordBits - 1) / kWordBits;
  }

 private:
  void clear_pad_bits() noexcept {
    if (const std::size_t tail = len_ % kWordBits; tail != 0 && !words_.empty()) {
      words_.back() &= (std::uint64_t{1} << tail) - 1;
    }
  }

  std::size_t len_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Packs a {-1,+1}-valued real vector. Entries must be exactly -1 or +1.
inline SignVector pack_signs(std::span<const double> v) {
  SignVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == -1.0) {
      out.set_negative(i, true);
    } else if (v[i] != 1.0) {
      throw std::invalid_argument("pack_signs: entry is not -1 or +1");
    }
  }
  return out;
}

inline std::vector<double> unpack(const SignVector& s) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s.is_negative(i) ? -1.0 : 1.0;
  return out;
}

/// Entry-wise sign of a real vector, with sgn(0) := +1 so runs are
/// deterministic. Rejects non-finite input.
inline SignVector sgn_vector(std::span<const double> x) {
  SignVector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw std::invalid_argument("sgn_vector: non-finite entry");
    if (x[i] < 0.0) out.set_negative(i, true);
  }
  return out;
}

/// <s, t> over {-1,+1} entries, exactly, via XOR + popcount:
/// agreeing positions contribute +1, disagreeing -1.
inline std::int64_t sign_dot(const SignVector& a, const SignVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("sign_dot: length mismatch");
  const auto wa = a.words();
  const auto wb = b.words();
  std::int64_t disagree = 0;
  for (std::size_t u = 0; u < wa.size(); ++u) {
    disagree += std::popcount(wa[u] ^ wb[u]);  // pad bits agree (both zero)
  }
  return static_cast<std::int64_t>(a.size()) - 2 * disagree;
}

/// Uniform draw from {-1,+1}^n: raw generator words become the bit plane.
inline SignVector random_sign_vector(Xoshiro256pp& rng, std::size_t n) {
  std::vector<std::uint64_t> words(SignVector::word_count(n));
  for (auto& w : words) w = rng.next_u64();
  if (const std::size_t tail = n % kWordBits; tail != 0 && !words.empty()) {
    words.back() &= (std::uint64_t{1} << tail) - 1;
  }
  return SignVector::from_words(n, std::move(words));
}

/// Column collection of equal-length sign vectors (one column per term).
class SignMatrix {
 public:
  SignMatrix() = default;
  explicit SignMatrix(std::size_t rows) : rows_(rows) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t width() const noexcept { return cols_.size(); }

  void append(SignVector column) {
    if (column.size() != rows_) {
      throw std::invalid_argument("SignMatrix::append: column length mismatch");
    }
    cols_.push_back(std::move(column));
  }

  const SignVector& column(std::size_t j) const { return cols_.at(j); }
  std::span<const SignVector> columns() const noexcept { return cols_; }

  friend bool operator==(const SignMatrix&, const SignMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::vector<SignVector> cols_;
};

}  // namespace sigcut
