#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "edd/data.hpp"
#include "edd/rng.hpp"

namespace edd {

// The eight signal transformations, with stable integer encoding used for
// pretext head indexing and dataset blocks.
enum class TransformKind : int {
  noising = 0,
  scaling = 1,
  rotation = 2,
  negation = 3,
  time_reversal = 4,
  window_permutation = 5,
  time_warping = 6,
  channel_shuffling = 7,
};

inline constexpr std::size_t kNumTransforms = 8;

std::string_view transform_name(TransformKind kind);
TransformKind transform_from_index(std::size_t index);

struct TransformParams {
  double noise_sigma = 0.05;          // additive Gaussian noise, unit-std scale
  double scale_lo = 0.7;              // global scaling factor range
  double scale_hi = 1.1;
  std::size_t permutation_segments = 4;
  std::size_t warp_knots = 4;         // control points of the cubic time warp
  double warp_strength = 0.2;

  void validate() const;  // throws std::invalid_argument on bad values
};

// Applies one transformation. Output shape always equals input shape, and the
// result is a pure function of (kind, x, params, rng stream position).
SensorWindow apply_transform(TransformKind kind, const SensorWindow& x,
                             const TransformParams& params, Rng& rng);

// Transform-recognition corpus: one shared pool holding the N originals first,
// then one block of N transformed windows per kind, in kind order. Each
// binary task pairs its block (label 1) against the originals (label 0), so
// every task is balanced 1:1 by construction. The full pool doubles as the
// augmentation set (originals + 8 transforms = 9N windows).
struct PretextDataset {
  std::vector<SensorWindow> pool;
  std::size_t num_originals = 0;

  std::size_t original_index(std::size_t i) const { return i; }
  std::size_t transformed_index(TransformKind kind, std::size_t i) const {
    return num_originals * (1 + static_cast<std::size_t>(kind)) + i;
  }
  std::size_t size() const { return pool.size(); }
};

PretextDataset build_pretext_dataset(const UnlabeledDataset& d,
                                     const TransformParams& params,
                                     std::uint64_t seed);

}  // namespace edd
