#include "mccdic/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mccdic {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor: shape " + to_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                     to_string(shape_));
  }
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  }
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Tensor axpy(double alpha, const Tensor& x, const Tensor& y) {
  require_same_shape(x, y, "axpy");
  Tensor out = y;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += alpha * x[i];
  return out;
}

Tensor scaled(const Tensor& x, double alpha) {
  Tensor out = x;
  for (auto& v : out.data()) v *= alpha;
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) { return axpy(1.0, a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return axpy(-1.0, b, a); }

double squared_norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  return s;
}

double norm(const Tensor& x) { return std::sqrt(squared_norm(x)); }

double l1_norm(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += std::abs(v);
  return s;
}

double max_abs(const Tensor& x) {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

bool all_finite(const Tensor& x) {
  for (double v : x.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_finite(const Tensor& x, const char* where) {
  if (!all_finite(x)) throw std::domain_error(std::string(where) + ": non-finite values");
}

Tensor channel(const Tensor& x, std::size_t c) {
  if (x.rank() == 2 && c == 0) return x;
  if (x.rank() != 3 || c >= x.dim(2)) {
    throw ShapeError("channel: index " + std::to_string(c) + " invalid for shape " +
                     to_string(x.shape()));
  }
  const std::size_t m = x.rows(), n = x.cols(), p = x.dim(2);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m * n; ++i) out[i] = x[i * p + c];
  return out;
}

Tensor stack_channels(std::span<const Tensor> images) {
  if (images.empty()) throw ShapeError("stack_channels: no images");
  const Shape& s = images.front().shape();
  if (s.size() != 2) throw ShapeError("stack_channels: images must be rank 2");
  const std::size_t p = images.size();
  Tensor out({s[0], s[1], p});
  for (std::size_t c = 0; c < p; ++c) {
    require_same_shape(images.front(), images[c], "stack_channels");
    for (std::size_t i = 0; i < s[0] * s[1]; ++i) out[i * p + c] = images[c][i];
  }
  return out;
}

Tensor stack_channels(std::initializer_list<Tensor> images) {
  return stack_channels(std::span<const Tensor>(images.begin(), images.size()));
}

namespace {
void require_same_levels(const Pyramid& a, const Pyramid& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": pyramid level count mismatch");
  }
}
}  // namespace

double dot(const Pyramid& a, const Pyramid& b) {
  require_same_levels(a, b, "dot");
  double s = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) s += dot(a[l], b[l]);
  return s;
}

Pyramid axpy(double alpha, const Pyramid& x, const Pyramid& y) {
  require_same_levels(x, y, "axpy");
  Pyramid out;
  out.reserve(x.size());
  for (std::size_t l = 0; l < x.size(); ++l) out.push_back(axpy(alpha, x[l], y[l]));
  return out;
}

Pyramid scaled(const Pyramid& x, double alpha) {
  Pyramid out;
  out.reserve(x.size());
  for (const auto& t : x) out.push_back(scaled(t, alpha));
  return out;
}

Pyramid zeros_like(const Pyramid& x) {
  Pyramid out;
  out.reserve(x.size());
  for (const auto& t : x) out.push_back(Tensor::zeros_like(t));
  return out;
}

double squared_norm(const Pyramid& x) {
  double s = 0.0;
  for (const auto& t : x) s += squared_norm(t);
  return s;
}

double l1_norm(const Pyramid& x) {
  double s = 0.0;
  for (const auto& t : x) s += l1_norm(t);
  return s;
}

bool all_finite(const Pyramid& x) {
  for (const auto& t : x) {
    if (!all_finite(t)) return false;
  }
  return true;
}

std::size_t count_zeros(const Pyramid& x) {
  std::size_t n = 0;
  for (const auto& t : x) {
    for (double v : t.data()) n += (v == 0.0);
  }
  return n;
}

}  // namespace mccdic
