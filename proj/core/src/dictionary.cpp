#include "mccdic/dictionary.hpp"

#include <cmath>
#include <functional>
#include <string>

namespace mccdic {

namespace {

struct Geometry {
  std::size_t rows, cols, channels;
};

Geometry feature_geometry(const DictionaryBank& bank, const Tensor& features) {
  if (features.rank() == 2 && bank.count() == 1) return {features.rows(), features.cols(), 1};
  if (features.rank() != 3 || features.dim(2) != bank.count()) {
    throw ShapeError("synthesize: features " + to_string(features.shape()) + " do not have " +
                     std::to_string(bank.count()) + " channels");
  }
  return {features.rows(), features.cols(), features.dim(2)};
}

Geometry image_geometry(const DictionaryBank& bank, const Tensor& image) {
  if (image.rank() == 2 && bank.channels() == 1) return {image.rows(), image.cols(), 1};
  if (image.rank() != 3 || image.dim(2) != bank.channels()) {
    throw ShapeError("analyze: image " + to_string(image.shape()) + " does not have " +
                     std::to_string(bank.channels()) + " channels");
  }
  return {image.rows(), image.cols(), image.dim(2)};
}

std::vector<double> tap_major(const DictionaryBank& bank) {
  const std::size_t K = bank.count(), n = bank.size(), p = bank.channels();
  std::vector<double> ft(K * n * n * p);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t c = 0; c < p; ++c) ft[((a * n + b) * p + c) * K + k] = bank.at(k, a, b, c);
      }
    }
  }
  return ft;
}

}  // namespace

Tensor synthesize_channels(const DictionaryBank& bank, const Tensor& features) {
  const auto g = feature_geometry(bank, features);
  const std::size_t K = bank.count(), n = bank.size(), p = bank.channels();
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>((n - 1) / 2);
  const std::ptrdiff_t M = static_cast<std::ptrdiff_t>(g.rows), N = static_cast<std::ptrdiff_t>(g.cols);
  Tensor out({g.rows, g.cols, p});
  const std::vector<double> ft = tap_major(bank);
  const double* x = features.data().data();
  double* o = out.data().data();
  for (std::ptrdiff_t i = 0; i < M; ++i) {
    for (std::ptrdiff_t j = 0; j < N; ++j) {
      double* op = o + (i * N + j) * static_cast<std::ptrdiff_t>(p);
      for (std::size_t a = 0; a < n; ++a) {
        const std::ptrdiff_t ii = i + r - static_cast<std::ptrdiff_t>(a);
        if (ii < 0 || ii >= M) continue;
        for (std::size_t b = 0; b < n; ++b) {
          const std::ptrdiff_t jj = j + r - static_cast<std::ptrdiff_t>(b);
          if (jj < 0 || jj >= N) continue;
          const double* xp = x + (ii * N + jj) * static_cast<std::ptrdiff_t>(K);
          const double* fp = ft.data() + (a * n + b) * p * K;
          for (std::size_t c = 0; c < p; ++c, fp += K) {
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) s += fp[k] * xp[k];
            op[c] += s;
          }
        }
      }
    }
  }
  return out;
}

DictionaryBank::DictionaryBank(Tensor filters) : filters_(std::move(filters)) {
  if (filters_.rank() != 4 || filters_.dim(1) != filters_.dim(2)) {
    throw ShapeError("dictionary bank: filters must be {K, n, n, p}, got " +
                     to_string(filters_.shape()));
  }
  if (filters_.dim(0) == 0 || filters_.dim(1) == 0 || filters_.dim(3) == 0) {
    throw ShapeError("dictionary bank: empty filter shape " + to_string(filters_.shape()));
  }
}

DictionaryBank DictionaryBank::zeros(std::size_t count, std::size_t size, std::size_t channels) {
  return DictionaryBank(Tensor({count, size, size, channels}));
}

DictionaryBank DictionaryBank::delta(std::size_t count, std::size_t size, std::size_t channels) {
  auto bank = zeros(count, size, channels);
  const std::size_t r = (size - 1) / 2;
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t c = 0; c < channels; ++c) bank.at(k, r, r, c) = 1.0;
  }
  return bank;
}

DictionaryBank DictionaryBank::random(std::size_t count, std::size_t size, std::size_t channels,
                                      std::mt19937_64& rng) {
  auto bank = zeros(count, size, channels);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : bank.filters().data()) v = gauss(rng);
  const std::size_t per = size * size * channels;
  for (std::size_t k = 0; k < count; ++k) {
    const double nrm = bank.filter_norm(k);
    if (nrm == 0.0) continue;
    for (std::size_t i = 0; i < per; ++i) bank.filters()[k * per + i] /= nrm;
  }
  return bank;
}

Tensor DictionaryBank::filter(std::size_t k) const {
  const std::size_t per = size() * size() * channels();
  std::vector<double> v(filters_.data().begin() + static_cast<std::ptrdiff_t>(k * per),
                        filters_.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
  return Tensor({size(), size(), channels()}, std::move(v));
}

double DictionaryBank::filter_norm(std::size_t k) const {
  const std::size_t per = size() * size() * channels();
  double s = 0.0;
  for (std::size_t i = 0; i < per; ++i) s += filters_[k * per + i] * filters_[k * per + i];
  return std::sqrt(s);
}

DictionaryBank scaled(const DictionaryBank& bank, double alpha) {
  return DictionaryBank(scaled(bank.filters(), alpha));
}

DictionaryBank axpy(double alpha, const DictionaryBank& x, const DictionaryBank& y) {
  return DictionaryBank(axpy(alpha, x.filters(), y.filters()));
}

double dot(const DictionaryBank& a, const DictionaryBank& b) { return dot(a.filters(), b.filters()); }

DictionaryBank stack_banks(const DictionaryBank& a, const DictionaryBank& b) {
  if (a.count() != b.count() || a.size() != b.size()) {
    throw ShapeError("stack_banks: banks differ in K or filter size");
  }
  const std::size_t K = a.count(), n = a.size(), pa = a.channels(), pb = b.channels();
  auto out = DictionaryBank::zeros(K, n, pa + pb);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < pa; ++c) out.at(k, i, j, c) = a.at(k, i, j, c);
        for (std::size_t c = 0; c < pb; ++c) out.at(k, i, j, pa + c) = b.at(k, i, j, c);
      }
    }
  }
  return out;
}

DictionaryBank permute_filters(const DictionaryBank& bank, const std::vector<std::size_t>& perm) {
  if (perm.size() != bank.count()) throw ShapeError("permute_filters: permutation size");
  const std::size_t per = bank.size() * bank.size() * bank.channels();
  auto out = DictionaryBank::zeros(bank.count(), bank.size(), bank.channels());
  for (std::size_t k = 0; k < perm.size(); ++k) {
    for (std::size_t i = 0; i < per; ++i) out.filters()[k * per + i] = bank.filters()[perm[k] * per + i];
  }
  return out;
}

Tensor synthesize(const DictionaryBank& bank, const Tensor& features) {
  Tensor out = synthesize_channels(bank, features);
  if (bank.channels() == 1) return out.reshaped({out.rows(), out.cols()});
  return out;
}

Tensor analyze(const DictionaryBank& bank, const Tensor& image) {
  const auto g = image_geometry(bank, image);
  const std::size_t K = bank.count(), n = bank.size(), p = bank.channels();
  const std::ptrdiff_t r = static_cast<std::ptrdiff_t>((n - 1) / 2);
  const std::ptrdiff_t M = static_cast<std::ptrdiff_t>(g.rows), N = static_cast<std::ptrdiff_t>(g.cols);
  Tensor out({g.rows, g.cols, K});
  const std::vector<double> ft = tap_major(bank);
  const double* y = image.data().data();
  double* o = out.data().data();
  for (std::ptrdiff_t i = 0; i < M; ++i) {
    for (std::ptrdiff_t j = 0; j < N; ++j) {
      double* op = o + (i * N + j) * static_cast<std::ptrdiff_t>(K);
      for (std::size_t a = 0; a < n; ++a) {
        const std::ptrdiff_t ii = i - r + static_cast<std::ptrdiff_t>(a);
        if (ii < 0 || ii >= M) continue;
        for (std::size_t b = 0; b < n; ++b) {
          const std::ptrdiff_t jj = j - r + static_cast<std::ptrdiff_t>(b);
          if (jj < 0 || jj >= N) continue;
          const double* yp = y + (ii * N + jj) * static_cast<std::ptrdiff_t>(p);
          const double* fp = ft.data() + (a * n + b) * p * K;
          for (std::size_t c = 0; c < p; ++c, fp += K) {
            const double yv = yp[c];
            for (std::size_t k = 0; k < K; ++k) op[k] += fp[k] * yv;
          }
        }
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-scale

MultiScaleDictionary::MultiScaleDictionary(DictionaryBank base, std::vector<DictionaryBank> up)
    : base_(std::move(base)), up_(std::move(up)) {
  validate();
}

void MultiScaleDictionary::validate() const {
  std::size_t width = base_.count();
  for (std::size_t l = 0; l < up_.size(); ++l) {
    if (up_[l].channels() != width) {
      throw ShapeError("multi-scale dictionary: up bank " + std::to_string(l) +
                       " must produce " + std::to_string(width) + " channels");
    }
    if (up_[l].size() != base_.size()) {
      throw ShapeError("multi-scale dictionary: all banks must share the filter size");
    }
    width = up_[l].count();
  }
}

MultiScaleDictionary MultiScaleDictionary::random(const std::vector<std::size_t>& widths,
                                                  std::size_t size, std::size_t channels,
                                                  std::mt19937_64& rng) {
  if (widths.empty()) throw ShapeError("multi-scale dictionary: need at least one level");
  auto base = DictionaryBank::random(widths[0], size, channels, rng);
  std::vector<DictionaryBank> up;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    up.push_back(DictionaryBank::random(widths[l + 1], size, widths[l], rng));
  }
  return MultiScaleDictionary(std::move(base), std::move(up));
}

std::vector<std::size_t> MultiScaleDictionary::widths() const {
  std::vector<std::size_t> w{base_.count()};
  for (const auto& b : up_) w.push_back(b.count());
  return w;
}

std::vector<const DictionaryBank*> MultiScaleDictionary::banks() const {
  std::vector<const DictionaryBank*> out{&base_};
  for (const auto& b : up_) out.push_back(&b);
  return out;
}

std::vector<DictionaryBank*> MultiScaleDictionary::banks() {
  std::vector<DictionaryBank*> out{&base_};
  for (auto& b : up_) out.push_back(&b);
  return out;
}

std::vector<Shape> MultiScaleDictionary::pyramid_shapes(std::size_t rows, std::size_t cols) const {
  const std::size_t factor = std::size_t{1} << (levels() - 1);
  if (rows % factor != 0 || cols % factor != 0) {
    throw ShapeError("multi-scale dictionary: image " + std::to_string(rows) + "x" +
                     std::to_string(cols) + " not divisible by " + std::to_string(factor));
  }
  std::vector<Shape> shapes;
  const auto w = widths();
  for (std::size_t l = 0; l < levels(); ++l) shapes.push_back({rows >> l, cols >> l, w[l]});
  return shapes;
}

Pyramid MultiScaleDictionary::zero_features(std::size_t rows, std::size_t cols) const {
  Pyramid p;
  for (auto& s : pyramid_shapes(rows, cols)) p.emplace_back(s);
  return p;
}

MultiScaleDictionary scaled(const MultiScaleDictionary& d, double alpha) {
  std::vector<DictionaryBank> up;
  for (const auto& b : d.up()) up.push_back(scaled(b, alpha));
  return MultiScaleDictionary(scaled(d.base(), alpha), std::move(up));
}

MultiScaleDictionary axpy(double alpha, const MultiScaleDictionary& x,
                          const MultiScaleDictionary& y) {
  if (x.levels() != y.levels()) throw ShapeError("axpy: multi-scale level mismatch");
  std::vector<DictionaryBank> up;
  for (std::size_t l = 0; l < x.up().size(); ++l) up.push_back(axpy(alpha, x.up()[l], y.up()[l]));
  return MultiScaleDictionary(axpy(alpha, x.base(), y.base()), std::move(up));
}

double dot(const MultiScaleDictionary& a, const MultiScaleDictionary& b) {
  if (a.levels() != b.levels()) throw ShapeError("dot: multi-scale level mismatch");
  double s = dot(a.base(), b.base());
  for (std::size_t l = 0; l < a.up().size(); ++l) s += dot(a.up()[l], b.up()[l]);
  return s;
}

Tensor zero_insert(const Tensor& coarse) {
  if (coarse.rank() != 3) throw ShapeError("zero_insert: expected rank-3 features");
  const std::size_t m = coarse.rows(), n = coarse.cols(), K = coarse.dim(2);
  Tensor fine({2 * m, 2 * n, K});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < K; ++k) fine.at(2 * i, 2 * j, k) = coarse.at(i, j, k);
    }
  }
  return fine;
}

Tensor decimate(const Tensor& fine) {
  if (fine.rank() != 3 || fine.rows() % 2 || fine.cols() % 2) {
    throw ShapeError("decimate: expected rank-3 features with even spatial size");
  }
  const std::size_t m = fine.rows() / 2, n = fine.cols() / 2, K = fine.dim(2);
  Tensor coarse({m, n, K});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < K; ++k) coarse.at(i, j, k) = fine.at(2 * i, 2 * j, k);
    }
  }
  return coarse;
}

Tensor ms_synthesize(const MultiScaleDictionary& dict, const Pyramid& features) {
  if (features.size() != dict.levels()) {
    throw ShapeError("ms_synthesize: expected " + std::to_string(dict.levels()) +
                     " pyramid levels, got " + std::to_string(features.size()));
  }
  const auto shapes = dict.pyramid_shapes(features[0].rows(), features[0].cols());
  for (std::size_t l = 0; l < features.size(); ++l) {
    if (features[l].shape() != shapes[l]) {
      throw ShapeError("ms_synthesize: level " + std::to_string(l) + " has shape " +
                       to_string(features[l].shape()) + ", expected " + to_string(shapes[l]));
    }
  }
  Tensor s = features.back();
  for (std::size_t l = dict.levels() - 1; l-- > 0;) {
    s = synthesize_channels(dict.up()[l], zero_insert(s)) + features[l];
  }
  return synthesize(dict.base(), s);
}

Pyramid ms_analyze(const MultiScaleDictionary& dict, const Tensor& image) {
  dict.pyramid_shapes(image.rows(), image.cols());
  Pyramid out;
  out.reserve(dict.levels());
  out.push_back(analyze(dict.base(), image));
  for (std::size_t l = 0; l + 1 < dict.levels(); ++l) {
    out.push_back(decimate(analyze(dict.up()[l], out.back())));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operator norm

namespace {

double power_iteration(Pyramid x, const std::function<Tensor(const Pyramid&)>& forward,
                       const std::function<Pyramid(const Tensor&)>& adjoint) {
  constexpr int kMaxIterations = 200;
  constexpr double kTolerance = 1e-6;
  double nx = std::sqrt(squared_norm(x));
  if (nx == 0.0) return 0.0;
  x = scaled(x, 1.0 / nx);
  double estimate = 0.0;
  for (int it = 0; it < kMaxIterations; ++it) {
    const Tensor y = forward(x);
    const double sigma2 = squared_norm(y);  // Rayleigh quotient, ||x|| = 1
    Pyramid z = adjoint(y);
    const double nz = std::sqrt(squared_norm(z));
    if (nz == 0.0 || sigma2 == 0.0) return 0.0;
    const double next = std::sqrt(sigma2);
    const bool converged = it > 0 && std::abs(next - estimate) <= kTolerance * next;
    estimate = next;
    if (converged) break;
    x = scaled(z, 1.0 / nz);
  }
  return estimate;
}

Pyramid start_vector(const std::vector<Shape>& shapes) {
  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Pyramid x;
  for (const auto& s : shapes) {
    Tensor t(s);
    for (auto& v : t.data()) v = gauss(rng);
    x.push_back(std::move(t));
  }
  return x;
}

}  // namespace

double estimate_operator_norm(const std::vector<Shape>& domain,
                              const std::function<Tensor(const Pyramid&)>& forward,
                              const std::function<Pyramid(const Tensor&)>& adjoint) {
  return power_iteration(start_vector(domain), forward, adjoint);
}

double operator_norm(const DictionaryBank& bank, std::size_t rows, std::size_t cols) {
  return operator_norm(MultiScaleDictionary(bank), rows, cols);
}

double operator_norm(const UntiedPair& pair, std::size_t rows, std::size_t cols) {
  return operator_norm(pair.synthesis(), rows, cols);
}

double operator_norm(const MultiScaleDictionary& dict, std::size_t rows, std::size_t cols) {
  return estimate_operator_norm(
      dict.pyramid_shapes(rows, cols),
      [&](const Pyramid& f) { return ms_synthesize(dict, f); },
      [&](const Tensor& y) { return ms_analyze(dict, y); });
}

double operator_norm(const MultiScalePair& pair, std::size_t rows, std::size_t cols) {
  return operator_norm(pair.synthesis(), rows, cols);
}

std::vector<std::size_t> large_preset_widths() { return {64, 96, 128}; }

std::vector<std::size_t> default_widths(std::size_t base_width, std::size_t levels) {
  std::vector<std::size_t> w;
  for (std::size_t l = 0; l < levels; ++l) w.push_back(base_width + l * (base_width / 2));
  return w;
}

}  // namespace mccdic
