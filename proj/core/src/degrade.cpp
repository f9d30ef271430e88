#include "mccdic/degrade.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace mccdic {

namespace {

// FFTW planning is not thread safe.
std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

KSpace transform(const KSpace& in, int sign) {
  KSpace out(in.rows, in.cols);
  if (in.values.empty()) return out;
  KSpace scratch = in;
  auto* src = reinterpret_cast<fftw_complex*>(scratch.values.data());
  auto* dst = reinterpret_cast<fftw_complex*>(out.values.data());
  {
    std::lock_guard lock(fftw_mutex());
    fftw_plan plan = fftw_plan_dft_2d(static_cast<int>(in.rows), static_cast<int>(in.cols), src,
                                      dst, sign, FFTW_ESTIMATE);
    if (plan == nullptr) throw std::runtime_error("fftw: planning failed");
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }
  const double norm = 1.0 / std::sqrt(static_cast<double>(in.rows * in.cols));
  for (auto& v : out.values) v *= norm;
  return out;
}

void require_image(const Tensor& image, const char* what) {
  if (image.rank() != 2) {
    throw ShapeError(std::string(what) + ": expected a 2-D image, got " + to_string(image.shape()));
  }
}

// out[(i + shift) mod m] = in[i] per axis.
template <class Get, class Set>
void circular_shift(std::size_t m, std::size_t n, std::size_t si, std::size_t sj, Get get, Set set) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) set((i + si) % m, (j + sj) % n, get(i, j));
  }
}

}  // namespace

KSpace fft2(const Tensor& image) {
  require_image(image, "fft2");
  KSpace k(image.rows(), image.cols());
  for (std::size_t i = 0; i < image.size(); ++i) k.values[i] = image[i];
  return transform(k, FFTW_FORWARD);
}

KSpace ifft2_complex(const KSpace& k) { return transform(k, FFTW_BACKWARD); }

Tensor ifft2(const KSpace& k) {
  const KSpace x = ifft2_complex(k);
  Tensor out({k.rows, k.cols});
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values[i].real();
  return out;
}

KSpace fftshift(const KSpace& k) {
  KSpace out(k.rows, k.cols);
  circular_shift(k.rows, k.cols, k.rows / 2, k.cols / 2, [&](auto i, auto j) { return k.at(i, j); },
                 [&](auto i, auto j, auto v) { out.at(i, j) = v; });
  return out;
}

KSpace ifftshift(const KSpace& k) {
  KSpace out(k.rows, k.cols);
  circular_shift(k.rows, k.cols, k.rows - k.rows / 2, k.cols - k.cols / 2,
                 [&](auto i, auto j) { return k.at(i, j); },
                 [&](auto i, auto j, auto v) { out.at(i, j) = v; });
  return out;
}

Tensor fftshift(const Tensor& image) {
  require_image(image, "fftshift");
  Tensor out = Tensor::zeros_like(image);
  circular_shift(image.rows(), image.cols(), image.rows() / 2, image.cols() / 2,
                 [&](auto i, auto j) { return image.at(i, j); },
                 [&](auto i, auto j, auto v) { out.at(i, j) = v; });
  return out;
}

Tensor ifftshift(const Tensor& image) {
  require_image(image, "ifftshift");
  Tensor out = Tensor::zeros_like(image);
  const std::size_t m = image.rows(), n = image.cols();
  circular_shift(m, n, m - m / 2, n - n / 2, [&](auto i, auto j) { return image.at(i, j); },
                 [&](auto i, auto j, auto v) { out.at(i, j) = v; });
  return out;
}

std::size_t SamplingMask::sampled_columns() const {
  std::size_t count = 0;
  for (std::size_t j = 0; j < mask.cols(); ++j) count += mask.at(0, j) != 0.0;
  return count;
}

SamplingMask make_cartesian_mask(std::size_t rows, std::size_t cols, double acceleration,
                                 double center_fraction, std::uint64_t seed) {
  if (!(acceleration >= 1.0)) throw std::invalid_argument("mask: acceleration must be >= 1");
  if (!(center_fraction > 0.0 && center_fraction < 1.0)) {
    throw std::invalid_argument("mask: center fraction must lie in (0, 1)");
  }
  if (rows == 0 || cols == 0) throw ShapeError("mask: empty shape");
  const double n = static_cast<double>(cols);
  if (center_fraction * n >= n / acceleration) {
    throw std::invalid_argument("mask: center band alone exceeds the sampling budget");
  }
  SamplingMask out{Tensor({rows, cols}), acceleration, center_fraction};
  std::vector<bool> keep(cols, false);
  if (acceleration == 1.0) {
    keep.assign(cols, true);
  } else {
    const auto center = static_cast<std::size_t>(std::ceil(center_fraction * n - 1e-9));
    const auto budget =
        std::max(center, static_cast<std::size_t>(std::llround(n / acceleration)));
    const std::size_t first = cols / 2 - center / 2;
    // Column j holds frequency j - cols/2; its conjugate partner holds the
    // negated frequency.
    auto partner = [&](std::size_t j) { return (2 * (cols / 2) + cols - j) % cols; };
    for (std::size_t j = first; j < first + center; ++j) keep[j] = keep[partner(j)] = true;
    std::size_t sampled = static_cast<std::size_t>(std::count(keep.begin(), keep.end(), true));
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t j = 0; j < cols; ++j) {
      const std::size_t q = partner(j);
      if (keep[j] || q < j) continue;
      groups.push_back(q == j ? std::vector<std::size_t>{j} : std::vector<std::size_t>{j, q});
    }
    std::mt19937_64 rng(seed);
    for (std::size_t g = 0; g < groups.size() && sampled < budget; ++g) {
      std::uniform_int_distribution<std::size_t> pick(g, groups.size() - 1);
      std::swap(groups[g], groups[pick(rng)]);
      if (sampled + groups[g].size() > budget) continue;
      for (std::size_t j : groups[g]) keep[j] = true;
      sampled += groups[g].size();
    }
  }
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out.mask.at(i, j) = keep[j] ? 1.0 : 0.0;
  }
  return out;
}

Tensor undersample(const Tensor& image, const SamplingMask& mask) {
  require_image(image, "undersample");
  require_same_shape(image, mask.mask, "undersample");
  KSpace k = fft2(image);
  const Tensor m = ifftshift(mask.mask);
  for (std::size_t i = 0; i < k.values.size(); ++i) k.values[i] *= m[i];
  return ifft2(k);
}

Tensor kspace_center_crop_lr(const Tensor& image, std::size_t scale) {
  require_image(image, "kspace_center_crop_lr");
  if (scale == 0 || image.rows() % scale || image.cols() % scale) {
    throw ShapeError("kspace_center_crop_lr: " + to_string(image.shape()) +
                     " not divisible by scale " + std::to_string(scale));
  }
  if (scale == 1) return image;
  const std::size_t m = image.rows(), n = image.cols(), ms = m / scale, ns = n / scale;
  const KSpace full = fftshift(fft2(image));
  KSpace small(ms, ns);
  const std::size_t oi = m / 2 - ms / 2, oj = n / 2 - ns / 2;
  for (std::size_t i = 0; i < ms; ++i) {
    for (std::size_t j = 0; j < ns; ++j) small.at(i, j) = full.at(oi + i, oj + j);
  }
  return scaled(ifft2(ifftshift(small)),
                std::sqrt(static_cast<double>(ms * ns) / static_cast<double>(m * n)));
}

Tensor upsample_zero_pad(const Tensor& lr, std::size_t scale) {
  require_image(lr, "upsample_zero_pad");
  if (scale == 0) throw std::invalid_argument("upsample_zero_pad: scale must be positive");
  if (scale == 1) return lr;
  const std::size_t ms = lr.rows(), ns = lr.cols(), m = ms * scale, n = ns * scale;
  const KSpace small = fftshift(fft2(lr));
  KSpace full(m, n);
  const std::size_t oi = m / 2 - ms / 2, oj = n / 2 - ns / 2;
  for (std::size_t i = 0; i < ms; ++i) {
    for (std::size_t j = 0; j < ns; ++j) full.at(oi + i, oj + j) = small.at(i, j);
  }
  return scaled(ifft2(ifftshift(full)),
                std::sqrt(static_cast<double>(m * n) / static_cast<double>(ms * ns)));
}

}  // namespace mccdic
