#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mccdic {

/// Thrown when operands have incompatible shapes.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major array of doubles. Images are rank 2 (rows, cols); feature
/// stacks and multi-channel images are rank 3 (rows, cols, channels).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const { return data_.empty(); }

  // Rows, cols and channels; rank-2 tensors have one channel.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }
  std::size_t channels() const { return rank() >= 3 ? shape_[2] : 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshaped(Shape shape) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

double dot(const Tensor& a, const Tensor& b);
/// Returns alpha * x + y.
Tensor axpy(double alpha, const Tensor& x, const Tensor& y);
Tensor scaled(const Tensor& x, double alpha);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);

double squared_norm(const Tensor& x);
double norm(const Tensor& x);
double l1_norm(const Tensor& x);
double max_abs(const Tensor& x);
bool all_finite(const Tensor& x);
/// Throws std::domain_error naming `where` when x holds NaN or Inf.
void require_finite(const Tensor& x, const char* where);

/// Extracts channel c of a rank-3 tensor as a rank-2 image.
Tensor channel(const Tensor& x, std::size_t c);
/// Stacks equally sized rank-2 images along a trailing channel axis.
Tensor stack_channels(std::span<const Tensor> images);
Tensor stack_channels(std::initializer_list<Tensor> images);

/// Per-level feature maps of a multi-scale representation. Single-scale
/// features are a pyramid with one level.
using Pyramid = std::vector<Tensor>;

double dot(const Pyramid& a, const Pyramid& b);
Pyramid axpy(double alpha, const Pyramid& x, const Pyramid& y);
Pyramid scaled(const Pyramid& x, double alpha);
Pyramid zeros_like(const Pyramid& x);
double squared_norm(const Pyramid& x);
double l1_norm(const Pyramid& x);
bool all_finite(const Pyramid& x);
std::size_t count_zeros(const Pyramid& x);

}  // namespace mccdic
