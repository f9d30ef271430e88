#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "mccdic/tensor.hpp"

namespace mccdic {

/// A bank of K convolution filters, each n x n with p image channels.
/// Filters are stored as a {K, n, n, p} tensor.
///
/// Synthesis maps a feature stack (rows, cols, K) to a p-channel image with
/// zero-padded "same" convolution:
///   out(i, j, c) = sum_k sum_{a,b} f_k(a, b, c) * x_k(i + r - a, j + r - b)
/// where r = (n - 1) / 2. Analysis is its exact adjoint (correlation).
class DictionaryBank {
 public:
  DictionaryBank() = default;
  explicit DictionaryBank(Tensor filters);

  static DictionaryBank zeros(std::size_t count, std::size_t size, std::size_t channels = 1);
  /// Every filter is a centered unit impulse on each image channel.
  static DictionaryBank delta(std::size_t count, std::size_t size, std::size_t channels = 1);
  /// Gaussian filters, each scaled to unit Frobenius norm.
  static DictionaryBank random(std::size_t count, std::size_t size, std::size_t channels,
                               std::mt19937_64& rng);

  std::size_t count() const { return filters_.dim(0); }
  std::size_t size() const { return filters_.dim(1); }
  std::size_t channels() const { return filters_.dim(3); }

  const Tensor& filters() const { return filters_; }
  Tensor& filters() { return filters_; }

  double& at(std::size_t k, std::size_t a, std::size_t b, std::size_t c) {
    return filters_[((k * size() + a) * size() + b) * channels() + c];
  }
  double at(std::size_t k, std::size_t a, std::size_t b, std::size_t c) const {
    return filters_[((k * size() + a) * size() + b) * channels() + c];
  }

  /// Filter k as an {n, n, p} tensor.
  Tensor filter(std::size_t k) const;
  double filter_norm(std::size_t k) const;

  bool operator==(const DictionaryBank&) const = default;

 private:
  Tensor filters_;
};

DictionaryBank scaled(const DictionaryBank& bank, double alpha);
DictionaryBank axpy(double alpha, const DictionaryBank& x, const DictionaryBank& y);
double dot(const DictionaryBank& a, const DictionaryBank& b);

/// Channel-stacks two banks with equal K and n: filter k of the result is the
/// concatenation of a's filter k and b's filter k along the image channel.
DictionaryBank stack_banks(const DictionaryBank& a, const DictionaryBank& b);
/// Applies the same channel permutation to the K filters: out_k = in_perm[k].
DictionaryBank permute_filters(const DictionaryBank& bank, const std::vector<std::size_t>& perm);

/// Feature stack (rows, cols, K) to image. Rank-2 output when p == 1.
/// Rank-2 features are accepted when K == 1.
Tensor synthesize(const DictionaryBank& bank, const Tensor& features);
/// As synthesize, but always rank 3 (rows, cols, p).
Tensor synthesize_channels(const DictionaryBank& bank, const Tensor& features);
/// Image (rows, cols[, p]) to feature stack (rows, cols, K).
Tensor analyze(const DictionaryBank& bank, const Tensor& image);

/// Synthesis/analysis pair. Tied pairs carry no separate analysis bank, so
/// analysis is exactly the adjoint of synthesis; untying copies the synthesis
/// filters into an independent analysis set.
template <class Dict>
class Untied {
 public:
  Untied() = default;
  explicit Untied(Dict synthesis) : synthesis_(std::move(synthesis)) {}
  Untied(Dict synthesis, Dict analysis)
      : synthesis_(std::move(synthesis)), analysis_(std::move(analysis)) {}

  const Dict& synthesis() const { return synthesis_; }
  Dict& synthesis() { return synthesis_; }
  const Dict& analysis() const { return analysis_ ? *analysis_ : synthesis_; }
  /// Only meaningful when untied.
  Dict& analysis_mut() { return analysis_ ? *analysis_ : synthesis_; }

  bool tied() const { return !analysis_.has_value(); }
  void untie() {
    if (!analysis_) analysis_ = synthesis_;
  }
  void tie() { analysis_.reset(); }

 private:
  Dict synthesis_;
  std::optional<Dict> analysis_;
};

using UntiedPair = Untied<DictionaryBank>;

/// Linear multi-scale dictionary shaped like a U-Net decoder with every
/// nonlinearity, normalization and bias removed.
///
/// Level l holds features of size (rows / 2^l, cols / 2^l, K_l). Synthesis
/// starts from the coarsest level; each step upsamples by a stride-2
/// transposed convolution (zero insertion then `up[l]`, mapping K_{l+1} to
/// K_l channels) and adds the level-l features. The finest sum goes through
/// `base` (K_0 channels to the image). Analysis is the encoder: `base`
/// analysis, then repeated `up[l]` analysis and stride-2 decimation.
class MultiScaleDictionary {
 public:
  MultiScaleDictionary() = default;
  explicit MultiScaleDictionary(DictionaryBank base, std::vector<DictionaryBank> up = {});

  static MultiScaleDictionary random(const std::vector<std::size_t>& widths, std::size_t size,
                                     std::size_t channels, std::mt19937_64& rng);

  std::size_t levels() const { return up_.size() + 1; }
  std::vector<std::size_t> widths() const;
  std::size_t channels() const { return base_.channels(); }
  std::size_t filter_size() const { return base_.size(); }

  const DictionaryBank& base() const { return base_; }
  DictionaryBank& base() { return base_; }
  const std::vector<DictionaryBank>& up() const { return up_; }
  std::vector<DictionaryBank>& up() { return up_; }

  /// All banks, base first, then up[0..L-2].
  std::vector<const DictionaryBank*> banks() const;
  std::vector<DictionaryBank*> banks();

  /// Shapes of the feature pyramid for an image of the given size.
  std::vector<Shape> pyramid_shapes(std::size_t rows, std::size_t cols) const;
  Pyramid zero_features(std::size_t rows, std::size_t cols) const;

  bool operator==(const MultiScaleDictionary&) const = default;

 private:
  void validate() const;

  DictionaryBank base_;
  std::vector<DictionaryBank> up_;
};

using MultiScalePair = Untied<MultiScaleDictionary>;

MultiScaleDictionary scaled(const MultiScaleDictionary& d, double alpha);
MultiScaleDictionary axpy(double alpha, const MultiScaleDictionary& x,
                          const MultiScaleDictionary& y);
double dot(const MultiScaleDictionary& a, const MultiScaleDictionary& b);

Tensor ms_synthesize(const MultiScaleDictionary& dict, const Pyramid& features);
Pyramid ms_analyze(const MultiScaleDictionary& dict, const Tensor& image);

/// Stride-2 zero insertion (rows, cols, K) -> (2 rows, 2 cols, K) and its adjoint.
Tensor zero_insert(const Tensor& coarse);
Tensor decimate(const Tensor& fine);

/// Power iteration for an arbitrary linear map from pyramids of the given
/// shapes to images, given its adjoint. Deterministic start vector.
double estimate_operator_norm(const std::vector<Shape>& domain,
                              const std::function<Tensor(const Pyramid&)>& forward,
                              const std::function<Pyramid(const Tensor&)>& adjoint);

/// Largest singular value of the synthesis operator on a rows x cols grid,
/// by power iteration on analysis o synthesis. Stops when the estimate
/// changes by less than 1e-6 relative, or after 200 iterations.

double operator_norm(const DictionaryBank& bank, std::size_t rows, std::size_t cols);
double operator_norm(const UntiedPair& pair, std::size_t rows, std::size_t cols);
double operator_norm(const MultiScaleDictionary& dict, std::size_t rows, std::size_t cols);
double operator_norm(const MultiScalePair& pair, std::size_t rows, std::size_t cols);

/// Channel widths of the large preset (64/96/128 over three levels).
std::vector<std::size_t> large_preset_widths();
/// Desk-scale widths: K at level 0, growing by K/2 per level (8 -> 8, 12, 16).
std::vector<std::size_t> default_widths(std::size_t base_width, std::size_t levels);

}  // namespace mccdic
