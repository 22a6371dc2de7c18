#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "sepformer/instrument.hpp"

namespace sepformer {

using Shape = std::vector<std::size_t>;
using Buffer = std::vector<double, CountingAllocator<double>>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. Storage goes through the counting
// arena so every intermediate is visible to the memory profiler.
class NdArray {
 public:
  NdArray() = default;
  explicit NdArray(Shape shape, double fill = 0.0);
  NdArray(Shape shape, std::span<const double> values);
  NdArray(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Rows/cols of a rank-2 array.
  std::size_t rows() const { return shape_.at(0); }
  std::size_t cols() const { return shape_.at(1); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  double* ptr() { return data_.data(); }
  const double* ptr() const { return data_.data(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // Same data, new shape with equal element count.
  NdArray reshaped(Shape shape) const;
  std::vector<double> to_vector() const { return {data_.begin(), data_.end()}; }

  void fill(double value);
  bool all_finite() const;

 private:
  Shape shape_;
  Buffer data_;
};

// Debug-build check that an op produced finite output from finite input.
void debug_assert_finite(const NdArray& a, const char* op);

}  // namespace sepformer
