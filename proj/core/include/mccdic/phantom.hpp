#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mccdic/tensor.hpp"

namespace mccdic {

/// Ellipse in normalized coordinates ([-1, 1] across each axis).
struct Ellipse {
  double center_y = 0.0, center_x = 0.0;
  double axis_y = 0.5, axis_x = 0.5;
  double angle = 0.0;  // radians
  double intensity_ref = 1.0;
  double intensity_target = 1.0;
  /// Drawn in the reference only.
  bool inconsistent = false;
};

struct PhantomSpec {
  std::size_t rows = 128;
  std::size_t cols = 128;
  /// Painted in order; later ellipses overwrite earlier ones.
  std::vector<Ellipse> ellipses;
};

struct PhantomPair {
  Tensor reference;  // x1
  Tensor target;     // x2
  /// 1 where an inconsistent ellipse was painted, else 0.
  Tensor inconsistent_mask;
};

/// Random head-like phantom: one large outer ellipse then `count - 1` inner
/// ellipses. Target intensities follow the reference through a noisy
/// increasing map; all intensities are pairwise distinct in both contrasts so
/// edges coincide. With `inconsistent` set, one extra ellipse is added to the
/// reference only.
PhantomSpec random_phantom_spec(std::size_t size, std::size_t count, bool inconsistent,
                                std::uint64_t seed);

PhantomPair make_phantom_pair(const PhantomSpec& spec);

}  // namespace mccdic
