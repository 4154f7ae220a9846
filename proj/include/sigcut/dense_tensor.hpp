#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace sigcut {

/// Dense order-k real tensor, row-major (last axis fastest). Working
/// precision is 64-bit throughout; narrower inputs are widened on load.
/// Construction rejects empty axes and non-finite values.
class DenseTensor {
 public:
  DenseTensor() = default;

  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data)
      : DenseTensor(std::move(shape), std::move(data), /*validate_values=*/true) {}

  static DenseTensor zeros(std::vector<std::size_t> shape) {
    const std::size_t n = checked_numel(shape);
    return DenseTensor(std::move(shape), std::vector<double>(n, 0.0),
                       /*validate_values=*/false);
  }

  /// Adopts data known to be finite (internal results); skips the value scan.
  static DenseTensor from_raw(std::vector<std::size_t> shape, std::vector<double> data) {
    return DenseTensor(std::move(shape), std::move(data), /*validate_values=*/false);
  }

  std::size_t order() const noexcept { return shape_.size(); }
  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }

  // order-2 conveniences
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double squared_norm() const noexcept {
    double acc = 0.0;
    for (double v : data_) acc += v * v;
    return acc;
  }

  double frobenius_norm() const noexcept { return std::sqrt(squared_norm()); }

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

  static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("DenseTensor: order must be >= 1");
    std::size_t n = 1;
    for (std::size_t d : shape) {
      if (d == 0) throw std::invalid_argument("DenseTensor: zero-length axis");
      if (d > std::numeric_limits<std::size_t>::max() / n) {
        throw std::invalid_argument("DenseTensor: shape overflow");
      }
      n *= d;
    }
    return n;
  }

 private:
  DenseTensor(std::vector<std::size_t> shape, std::vector<double> data, bool validate_values)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != checked_numel(shape_)) {
      throw std::invalid_argument("DenseTensor: data length does not match shape");
    }
    if (validate_values) {
      for (double v : data_) {
        if (!std::isfinite(v)) throw std::invalid_argument("DenseTensor: non-finite value");
      }
    }
  }

  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

}  // namespace sigcut
