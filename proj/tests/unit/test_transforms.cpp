#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "edd/transforms.hpp"

using namespace edd;

namespace {

SensorWindow random_window(std::uint64_t seed, std::size_t channels = 6,
                           std::size_t steps = 64) {
  Rng rng(seed);
  SensorWindow w;
  w.sample_rate_hz = 50.0;
  w.values = Tensor({channels, steps});
  for (double& v : w.values.values) v = rng.normal();
  return w;
}

std::vector<double> sorted_row(const SensorWindow& w, std::size_t c) {
  std::vector<double> row(w.values.values.begin() + c * w.timesteps(),
                          w.values.values.begin() + (c + 1) * w.timesteps());
  std::sort(row.begin(), row.end());
  return row;
}

}  // namespace

TEST_CASE("every kind preserves the window shape and finiteness") {
  const SensorWindow x = random_window(1);
  const TransformParams params;
  for (std::size_t k = 0; k < kNumTransforms; ++k) {
    Rng rng(100 + k);
    const SensorWindow y = apply_transform(transform_from_index(k), x, params, rng);
    CHECK(y.values.shape == x.values.shape);
    CHECK(y.sample_rate_hz == x.sample_rate_hz);
    CHECK(y.values.all_finite());
  }
}

TEST_CASE("every kind is deterministic for a fixed stream") {
  const SensorWindow x = random_window(2);
  const TransformParams params;
  for (std::size_t k = 0; k < kNumTransforms; ++k) {
    Rng r1(7), r2(7);
    const SensorWindow a = apply_transform(transform_from_index(k), x, params, r1);
    const SensorWindow b = apply_transform(transform_from_index(k), x, params, r2);
    CHECK(a.values.values == b.values.values);
  }
}

TEST_CASE("time reversal is an involution") {
  const SensorWindow x = random_window(3);
  const TransformParams params;
  Rng r1(1), r2(2);
  const SensorWindow once = apply_transform(TransformKind::time_reversal, x, params, r1);
  const SensorWindow twice =
      apply_transform(TransformKind::time_reversal, once, params, r2);
  CHECK(twice.values.values == x.values.values);
  CHECK(once.values.values != x.values.values);
}

TEST_CASE("negation is an involution") {
  const SensorWindow x = random_window(4);
  const TransformParams params;
  Rng r1(1), r2(2);
  const SensorWindow once = apply_transform(TransformKind::negation, x, params, r1);
  const SensorWindow twice = apply_transform(TransformKind::negation, once, params, r2);
  CHECK(twice.values.values == x.values.values);
  for (std::size_t i = 0; i < x.values.numel(); ++i)
    CHECK(once.values.values[i] == -x.values.values[i]);
}

TEST_CASE("scaling multiplies every value by one factor inside the range") {
  const SensorWindow x = random_window(5);
  const TransformParams params;
  Rng rng(11);
  const SensorWindow y = apply_transform(TransformKind::scaling, x, params, rng);
  const double s = y.values.values[0] / x.values.values[0];
  CHECK(s >= params.scale_lo);
  CHECK(s < params.scale_hi);
  CHECK(s != 1.0);
  for (std::size_t i = 0; i < x.values.numel(); ++i)
    CHECK(y.values.values[i] == doctest::Approx(s * x.values.values[i]).epsilon(1e-12));
}

TEST_CASE("rotation preserves per-timestep norms of each 3-axis block") {
  const SensorWindow x = random_window(6);
  const TransformParams params;
  Rng rng(13);
  const SensorWindow y = apply_transform(TransformKind::rotation, x, params, rng);
  const std::size_t T = x.timesteps();
  for (std::size_t block = 0; block < 6; block += 3) {
    for (std::size_t t = 0; t < T; ++t) {
      double n0 = 0.0, n1 = 0.0;
      for (std::size_t c = block; c < block + 3; ++c) {
        n0 += x.values.at2(c, t) * x.values.at2(c, t);
        n1 += y.values.at2(c, t) * y.values.at2(c, t);
      }
      CHECK(std::sqrt(n1) == doctest::Approx(std::sqrt(n0)).epsilon(1e-9));
    }
  }
  CHECK(y.values.values != x.values.values);
}

TEST_CASE("rotation applies the same matrix to both modality blocks") {
  // Construct a window whose gyro block duplicates the accel block; the
  // blocks must remain identical after rotation.
  SensorWindow x = random_window(7, 6, 32);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 32; ++t)
      x.values.at2(c + 3, t) = x.values.at2(c, t);
  const TransformParams params;
  Rng rng(17);
  const SensorWindow y = apply_transform(TransformKind::rotation, x, params, rng);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t t = 0; t < 32; ++t)
      CHECK(y.values.at2(c, t) == doctest::Approx(y.values.at2(c + 3, t)).epsilon(1e-12));
}

TEST_CASE("window permutation preserves each channel's multiset of values") {
  const SensorWindow x = random_window(8);
  const TransformParams params;
  Rng rng(19);
  const SensorWindow y =
      apply_transform(TransformKind::window_permutation, x, params, rng);
  for (std::size_t c = 0; c < x.channels(); ++c) CHECK(sorted_row(y, c) == sorted_row(x, c));
}

TEST_CASE("channel shuffling permutes whole channels") {
  const SensorWindow x = random_window(9);
  const TransformParams params;
  Rng rng(23);
  const SensorWindow y =
      apply_transform(TransformKind::channel_shuffling, x, params, rng);
  // Each output channel equals some input channel exactly, and the multiset
  // of channels is preserved.
  std::vector<bool> used(x.channels(), false);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    bool found = false;
    for (std::size_t s = 0; s < x.channels() && !found; ++s) {
      if (used[s]) continue;
      bool equal = true;
      for (std::size_t t = 0; t < x.timesteps() && equal; ++t)
        equal = y.values.at2(c, t) == x.values.at2(s, t);
      if (equal) {
        used[s] = true;
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("noising deviates by sigma on average") {
  // Mean |noise| of a Gaussian is sigma * sqrt(2/pi); statistical check to 10%.
  SensorWindow x;
  x.sample_rate_hz = 50.0;
  x.values = Tensor({4, 2500}, 0.0);
  TransformParams params;
  params.noise_sigma = 0.05;
  Rng rng(29);
  const SensorWindow y = apply_transform(TransformKind::noising, x, params, rng);
  double mad = 0.0;
  for (double v : y.values.values) mad += std::fabs(v);
  mad /= static_cast<double>(y.values.numel());
  const double expected = 0.05 * std::sqrt(2.0 / 3.14159265358979323846);
  CHECK(mad > 0.9 * expected);
  CHECK(mad < 1.1 * expected);
}

TEST_CASE("time warping keeps values within the original envelope") {
  const SensorWindow x = random_window(10);
  const TransformParams params;
  Rng rng(31);
  const SensorWindow y = apply_transform(TransformKind::time_warping, x, params, rng);
  CHECK(y.values.values != x.values.values);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const auto bounds = std::minmax_element(
        x.values.values.begin() + c * x.timesteps(),
        x.values.values.begin() + (c + 1) * x.timesteps());
    for (std::size_t t = 0; t < x.timesteps(); ++t) {
      CHECK(y.values.at2(c, t) >= *bounds.first - 1e-12);
      CHECK(y.values.at2(c, t) <= *bounds.second + 1e-12);
    }
  }
}

TEST_CASE("invalid transform parameters are rejected") {
  const SensorWindow x = random_window(11);
  Rng rng(1);
  TransformParams p;
  p.noise_sigma = 0.0;
  CHECK_THROWS(apply_transform(TransformKind::noising, x, p, rng));
  p = TransformParams{};
  p.permutation_segments = 1;
  CHECK_THROWS(apply_transform(TransformKind::window_permutation, x, p, rng));
  p = TransformParams{};
  p.warp_strength = 1.5;
  CHECK_THROWS(apply_transform(TransformKind::time_warping, x, p, rng));
  p = TransformParams{};
  p.scale_lo = 1.2;
  p.scale_hi = 0.7;
  CHECK_THROWS(apply_transform(TransformKind::scaling, x, p, rng));
}

TEST_CASE("pretext dataset holds originals plus one block per kind") {
  UnlabeledDataset d;
  for (int i = 0; i < 5; ++i) d.windows.push_back(random_window(40 + i));
  d.participant_ids = {0, 0, 1, 1, 2};
  const PretextDataset p = build_pretext_dataset(d, TransformParams{}, 123);
  CHECK(p.num_originals == 5);
  CHECK(p.size() == 5 * (1 + kNumTransforms));
  // Originals come through untouched.
  for (std::size_t i = 0; i < 5; ++i)
    CHECK(p.pool[p.original_index(i)].values.values == d.windows[i].values.values);
  // Every transformed block entry matches a direct application under the
  // same derived stream.
  const Rng root(123);
  for (std::size_t k = 0; k < kNumTransforms; ++k) {
    const TransformKind kind = transform_from_index(k);
    for (std::size_t i = 0; i < 5; ++i) {
      Rng wrng = root.split(transform_name(kind), i);
      const SensorWindow direct =
          apply_transform(kind, d.windows[i], TransformParams{}, wrng);
      CHECK(p.pool[p.transformed_index(kind, i)].values.values ==
            direct.values.values);
    }
  }
}

TEST_CASE("pretext dataset construction is deterministic") {
  UnlabeledDataset d;
  for (int i = 0; i < 3; ++i) d.windows.push_back(random_window(50 + i));
  d.participant_ids = {0, 1, 2};
  const PretextDataset a = build_pretext_dataset(d, TransformParams{}, 9);
  const PretextDataset b = build_pretext_dataset(d, TransformParams{}, 9);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.pool[i].values.values == b.pool[i].values.values);
}

TEST_CASE("an all-zero window under negation stays in the positive block") {
  UnlabeledDataset d;
  SensorWindow z;
  z.sample_rate_hz = 50.0;
  z.values = Tensor({6, 64}, 0.0);
  d.windows.push_back(z);
  d.participant_ids = {0};
  const PretextDataset p = build_pretext_dataset(d, TransformParams{}, 1);
  // Transformed equals original, yet it sits in negation's transformed block
  // (the label encodes the applied transform, not detectability).
  const std::size_t idx = p.transformed_index(TransformKind::negation, 0);
  CHECK(p.pool[idx].values.values == z.values.values);
}
