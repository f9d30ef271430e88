#include "mccdic/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mccdic {

namespace {

void require_images(const Tensor& x, const Tensor& ref, const char* what) {
  require_same_shape(x, ref, what);
  if (x.rank() != 2) throw ShapeError(std::string(what) + ": expected 2-D images");
  if (x.empty()) throw ShapeError(std::string(what) + ": empty images");
}

std::array<double, kSsimWindow> gaussian_window() {
  std::array<double, kSsimWindow> w{};
  const double c = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - c;
    w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// "Valid" separable filtering with the 1-D window along both axes.
Tensor filter_valid(const Tensor& img, const std::array<double, kSsimWindow>& w) {
  const std::size_t m = img.rows(), n = img.cols();
  const std::size_t om = m - kSsimWindow + 1, on = n - kSsimWindow + 1;
  Tensor tmp({m, on});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < on; ++j) {
      double s = 0.0;
      for (std::size_t b = 0; b < kSsimWindow; ++b) s += w[b] * img.at(i, j + b);
      tmp.at(i, j) = s;
    }
  }
  Tensor out({om, on});
  for (std::size_t i = 0; i < om; ++i) {
    for (std::size_t j = 0; j < on; ++j) {
      double s = 0.0;
      for (std::size_t a = 0; a < kSsimWindow; ++a) s += w[a] * tmp.at(i + a, j);
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor product(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

}  // namespace

double mse(const Tensor& x, const Tensor& ref) {
  require_images(x, ref, "mse");
  return squared_norm(x - ref) / static_cast<double>(x.size());
}

double psnr(const Tensor& x, const Tensor& ref, std::optional<double> peak) {
  require_images(x, ref, "psnr");
  const double p = peak ? *peak : *std::max_element(ref.data().begin(), ref.data().end());
  if (!(p > 0.0)) throw std::invalid_argument("psnr: peak must be positive");
  const double e = mse(x, ref);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(p * p / e);
}

double rmse(const Tensor& x, const Tensor& ref) { return std::sqrt(mse(x, ref)); }

double ssim(const Tensor& x, const Tensor& ref) {
  require_images(x, ref, "ssim");
  if (x.rows() < kSsimWindow || x.cols() < kSsimWindow) {
    throw ShapeError("ssim: images smaller than the 11x11 window");
  }
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const auto w = gaussian_window();
  const Tensor mx = filter_valid(x, w);
  const Tensor my = filter_valid(ref, w);
  const Tensor sxx = filter_valid(product(x, x), w);
  const Tensor syy = filter_valid(product(ref, ref), w);
  const Tensor sxy = filter_valid(product(x, ref), w);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

}  // namespace mccdic
