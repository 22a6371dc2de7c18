#include "sepformer/ndarray.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <functional>
#include <numeric>

#include "sepformer/errors.hpp"

namespace sepformer {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t d : shape) {
    if (d == 0) {
      throw DimensionError("zero-sized dimension in shape " +
                           shape_string(shape));
    }
  }
}

}  // namespace

NdArray::NdArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  check_shape(shape_);
}

NdArray::NdArray(Shape shape, std::span<const double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  check_shape(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("value count " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

NdArray::NdArray(Shape shape, std::initializer_list<double> values)
    : NdArray(std::move(shape),
              std::span<const double>(values.begin(), values.size())) {}

NdArray NdArray::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                         shape_string(shape));
  }
  NdArray out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

void NdArray::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool NdArray::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

void debug_assert_finite([[maybe_unused]] const NdArray& a,
                         [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  assert(a.all_finite() && op);
#endif
}

}  // namespace sepformer
