#include "werprobe/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "werprobe/error.hpp"

WERPROBE_NAMESPACE_BEGIN

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(element_count(shape_), Real(0)) {
  if (std::find(shape_.begin(), shape_.end(), 0) != shape_.end()) {
    fail(ErrorKind::Dimension, "tensor shape " + to_string(shape_) + " has a zero extent");
  }
}

Tensor::Tensor(Shape shape, std::vector<Real> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (element_count(shape_) != data_.size()) {
    fail(ErrorKind::Dimension, "shape " + to_string(shape_) + " holds " +
                                   std::to_string(element_count(shape_)) + " values, got " +
                                   std::to_string(data_.size()));
  }
}

Tensor Tensor::scalar(Real value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<Real> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<Real> values) {
  return Tensor({rows, cols}, std::move(values));
}

Real Tensor::item() const {
  if (data_.size() != 1) {
    fail(ErrorKind::Dimension, "item() on non-scalar tensor " + to_string(shape_));
  }
  return data_[0];
}

void Tensor::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

WERPROBE_NAMESPACE_END
