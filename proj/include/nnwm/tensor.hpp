#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace nnwm {

// Dense row-major tensor of 64-bit reals; the engine's only array type.
// Conv weights use the layout (S, S, D, L): filter row, filter column,
// input depth, filter index.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  bool all_finite() const noexcept;
  void fill(double v);

  // Same backing values under a new shape; element counts must match.
  Tensor reshaped(std::vector<std::size_t> new_shape) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace nnwm
