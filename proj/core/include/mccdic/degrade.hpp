#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "mccdic/tensor.hpp"

namespace mccdic {

/// Complex 2-D spectrum in natural FFT order (DC at index [0, 0]).
struct KSpace {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::complex<double>> values;

  KSpace() = default;
  KSpace(std::size_t m, std::size_t n) : rows(m), cols(n), values(m * n) {}

  std::complex<double>& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  std::complex<double> at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
};

/// Orthonormal 2-D DFT of a real image.
KSpace fft2(const Tensor& image);
/// Orthonormal inverse DFT, returning the real part.
Tensor ifft2(const KSpace& k);
/// Orthonormal inverse DFT keeping both parts.
KSpace ifft2_complex(const KSpace& k);

/// Moves DC to (rows/2, cols/2) and back. Works for odd sizes.
KSpace fftshift(const KSpace& k);
KSpace ifftshift(const KSpace& k);
Tensor fftshift(const Tensor& image);
Tensor ifftshift(const Tensor& image);

/// Column-wise cartesian sampling pattern, stored with DC at the center
/// column (fftshifted layout).
struct SamplingMask {
  Tensor mask;
  double acceleration = 1.0;
  double center_fraction = 0.0;

  std::size_t sampled_columns() const;
};

/// Fully samples ceil(center_fraction * cols) columns around DC and picks the
/// remaining columns uniformly at random (seeded) until round(cols / R)
/// columns are sampled. Columns are chosen together with their conjugate
/// partners, so masking a real image stays an exact projection; the count
/// may fall one short when no self-conjugate column is left to fill it.
SamplingMask make_cartesian_mask(std::size_t rows, std::size_t cols, double acceleration,
                                 double center_fraction, std::uint64_t seed);

/// Zero-filled reconstruction ifft2(mask * fft2(image)).
Tensor undersample(const Tensor& image, const SamplingMask& mask);

/// Low-resolution image from the central (rows/s x cols/s) block of the
/// spectrum, scaled so mean intensity is preserved.
Tensor kspace_center_crop_lr(const Tensor& image, std::size_t scale);

/// Embeds the spectrum of `lr` in the center of a zero (rows*s x cols*s)
/// spectrum. Mean preserving; adjoint of the crop up to a factor s^2.
Tensor upsample_zero_pad(const Tensor& lr, std::size_t scale);

}  // namespace mccdic
