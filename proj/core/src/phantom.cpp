#include "mccdic/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace mccdic {

namespace {

constexpr double kMinGap = 0.04;

bool contains(const Ellipse& e, double y, double x) {
  const double dy = y - e.center_y, dx = x - e.center_x;
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  const double u = (dx * c + dy * s) / e.axis_x;
  const double v = (-dx * s + dy * c) / e.axis_y;
  return u * u + v * v <= 1.0;
}

bool distinct(double value, const std::vector<double>& taken) {
  return std::all_of(taken.begin(), taken.end(),
                     [&](double t) { return std::abs(value - t) >= kMinGap; });
}

}  // namespace

PhantomSpec random_phantom_spec(std::size_t size, std::size_t count, bool inconsistent,
                                std::uint64_t seed) {
  if (size == 0) throw std::invalid_argument("phantom: size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> jitter(0.0, 0.08);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  PhantomSpec spec;
  spec.rows = spec.cols = size;
  std::vector<double> taken_ref{0.0}, taken_target{0.0};
  auto pick_intensities = [&](Ellipse& e) {
    for (;;) {
      const double a = uniform(0.1, 1.0);
      const double b = std::clamp(0.15 + 0.7 * a + jitter(rng), 0.05, 1.0);
      if (distinct(a, taken_ref) && distinct(b, taken_target)) {
        e.intensity_ref = a;
        e.intensity_target = b;
        taken_ref.push_back(a);
        taken_target.push_back(b);
        return;
      }
    }
  };

  for (std::size_t i = 0; i < count; ++i) {
    Ellipse e;
    if (i == 0) {
      e.center_y = uniform(-0.05, 0.05);
      e.center_x = uniform(-0.05, 0.05);
      e.axis_y = uniform(0.8, 0.9);
      e.axis_x = uniform(0.62, 0.75);
      e.angle = uniform(-0.15, 0.15);
    } else {
      const double r = uniform(0.0, 0.45), t = uniform(0.0, 2.0 * std::numbers::pi);
      e.center_y = r * std::sin(t);
      e.center_x = r * std::cos(t) * 0.8;
      e.axis_y = uniform(0.08, 0.3);
      e.axis_x = uniform(0.06, 0.25);
      e.angle = uniform(0.0, std::numbers::pi);
    }
    pick_intensities(e);
    spec.ellipses.push_back(e);
  }
  if (inconsistent) {
    Ellipse e;
    const double r = uniform(0.1, 0.4), t = uniform(0.0, 2.0 * std::numbers::pi);
    e.center_y = r * std::sin(t);
    e.center_x = r * std::cos(t) * 0.8;
    e.axis_y = uniform(0.1, 0.18);
    e.axis_x = uniform(0.1, 0.18);
    e.angle = uniform(0.0, std::numbers::pi);
    pick_intensities(e);
    e.inconsistent = true;
    spec.ellipses.push_back(e);
  }
  return spec;
}

PhantomPair make_phantom_pair(const PhantomSpec& spec) {
  const std::size_t m = spec.rows, n = spec.cols;
  PhantomPair out{Tensor({m, n}), Tensor({m, n}), Tensor({m, n})};
  for (const auto& e : spec.ellipses) {
    if (e.intensity_ref < 0.0 || e.intensity_ref > 1.0 || e.intensity_target < 0.0 ||
        e.intensity_target > 1.0) {
      throw std::invalid_argument("phantom: intensities must lie in [0, 1]");
    }
    if (!(e.axis_x > 0.0 && e.axis_y > 0.0)) throw std::invalid_argument("phantom: axes must be positive");
    for (std::size_t i = 0; i < m; ++i) {
      const double y = 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(m) - 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double x = 2.0 * (static_cast<double>(j) + 0.5) / static_cast<double>(n) - 1.0;
        if (!contains(e, y, x)) continue;
        out.reference.at(i, j) = e.intensity_ref;
        if (e.inconsistent) {
          out.inconsistent_mask.at(i, j) = 1.0;
        } else {
          out.target.at(i, j) = e.intensity_target;
        }
      }
    }
  }
  return out;
}

}  // namespace mccdic
