#pragma once

#include <optional>

#include "mccdic/tensor.hpp"

namespace mccdic {

double mse(const Tensor& x, const Tensor& ref);

/// 10 log10(peak^2 / MSE) in dB; +infinity when the images are identical.
/// The peak defaults to max(ref).
double psnr(const Tensor& x, const Tensor& ref, std::optional<double> peak = std::nullopt);

double rmse(const Tensor& x, const Tensor& ref);

/// Mean local SSIM over every position where an 11x11 Gaussian window
/// (sigma 1.5) fits, with C1 = 0.01^2 and C2 = 0.03^2 for a unit dynamic
/// range.
double ssim(const Tensor& x, const Tensor& ref);

constexpr std::size_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

}  // namespace mccdic
