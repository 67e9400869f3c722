#include "nnwm/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "nnwm/errors.hpp"

namespace nnwm {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream out;
  out << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ")";
  return out.str();
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double v) {
  for (double& x : data_) x = v;
}

Tensor Tensor::reshaped(std::vector<std::size_t> new_shape) const {
  if (shape_numel(new_shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " +
                      shape_string(new_shape));
  }
  return Tensor(std::move(new_shape), data_);
}

}  // namespace nnwm
