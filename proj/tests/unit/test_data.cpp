#include <algorithm>
#include <cstdio>
#include <limits>
#include <set>
#include <vector>

#include "doctest.h"
#include "edd/data.hpp"

using namespace edd;

namespace {

Tensor ramp_stream(std::size_t channels, std::size_t steps) {
  Tensor s({channels, steps});
  for (std::size_t i = 0; i < s.numel(); ++i) s.values[i] = static_cast<double>(i);
  return s;
}

LabeledDataset tiny_synthetic(std::uint64_t seed = 7) {
  SyntheticConfig cfg;
  cfg.num_classes = 3;
  cfg.channels = 6;
  cfg.window_length = 32;
  cfg.participants = 4;
  cfg.windows_per_class_per_participant = 5;
  cfg.seed = seed;
  return generate_synthetic(cfg);
}

}  // namespace

TEST_CASE("windowing: 100 steps, length 50, overlap 0.5 -> 3 windows") {
  const auto ws = window_stream(ramp_stream(2, 100), 50.0, 50, 0.5);
  REQUIRE(ws.size() == 3);
  // Starts at 0, 25, 50.
  CHECK(ws[0].values.at2(0, 0) == 0.0);
  CHECK(ws[1].values.at2(0, 0) == 25.0);
  CHECK(ws[2].values.at2(0, 0) == 50.0);
  for (const auto& w : ws) {
    CHECK(w.channels() == 2);
    CHECK(w.timesteps() == 50);
    CHECK(w.sample_rate_hz == 50.0);
  }
}

TEST_CASE("windowing: zero overlap gives disjoint windows") {
  const auto ws = window_stream(ramp_stream(1, 100), 50.0, 25, 0.0);
  REQUIRE(ws.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(ws[i].values.values[0] == 25.0 * i);
}

TEST_CASE("windowing: stream shorter than the window yields nothing") {
  CHECK(window_stream(ramp_stream(3, 49), 50.0, 50, 0.5).empty());
}

TEST_CASE("windowing: disjoint windows reassemble the truncated stream") {
  const Tensor stream = ramp_stream(2, 103);
  const auto ws = window_stream(stream, 50.0, 25, 0.0);
  REQUIRE(ws.size() == 4);
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> rebuilt;
    for (const auto& w : ws)
      for (std::size_t t = 0; t < 25; ++t) rebuilt.push_back(w.values.at2(c, t));
    for (std::size_t t = 0; t < 100; ++t) CHECK(rebuilt[t] == stream.at2(c, t));
  }
}

TEST_CASE("windowing rejects bad arguments") {
  CHECK_THROWS(window_stream(ramp_stream(1, 10), 50.0, 1, 0.0));
  CHECK_THROWS(window_stream(ramp_stream(1, 10), 50.0, 4, 1.0));
  CHECK_THROWS(window_stream(ramp_stream(1, 10), 50.0, 4, -0.1));
}

TEST_CASE("normalization drives the mean block std to exactly one") {
  LabeledDataset d = tiny_synthetic();
  auto stats = compute_normalization(d.windows, 3);
  apply_normalization(d.windows, stats);
  CHECK(mean_block_std(d.windows, 0, 3) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mean_block_std(d.windows, 3, 6) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("normalization divides by the mean std") {
  // Two windows whose per-channel stds average 2.0 in the accel block.
  std::vector<SensorWindow> ws(2);
  for (auto& w : ws) {
    w.sample_rate_hz = 50.0;
    w.values = Tensor({1, 4});
  }
  // std of {-2, 2, -2, 2} is 2; std of {-2, 2, -2, 2} is 2 -> mean 2.
  ws[0].values.values = {-2, 2, -2, 2};
  ws[1].values.values = {2, -2, 2, -2};
  auto stats = compute_normalization(ws, 1);
  CHECK(stats.accel_scale == doctest::Approx(2.0).epsilon(1e-12));
  apply_normalization(ws, stats);
  CHECK(ws[0].values.values[0] == doctest::Approx(-1.0));
}

TEST_CASE("normalization of already-unit data is the identity") {
  std::vector<SensorWindow> ws(1);
  ws[0].sample_rate_hz = 50.0;
  ws[0].values = Tensor({2, 4}, {-1, 1, -1, 1, 1, -1, 1, -1});
  auto stats = compute_normalization(ws, 1);
  CHECK(stats.accel_scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(stats.gyro_scale == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalization is idempotent") {
  LabeledDataset d = tiny_synthetic();
  auto stats = compute_normalization(d.windows, 3);
  apply_normalization(d.windows, stats);
  auto stats2 = compute_normalization(d.windows, 3);
  CHECK(stats2.accel_scale == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(stats2.gyro_scale == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("the training scale is applied to validation data unchanged") {
  LabeledDataset train = tiny_synthetic(1);
  LabeledDataset val = tiny_synthetic(2);
  auto stats = compute_normalization(train.windows, 3);
  const double before = val.windows[0].values.values[0];
  apply_normalization(val.windows, stats);
  CHECK(val.windows[0].values.values[0] ==
        doctest::Approx(before / stats.accel_scale).epsilon(1e-12));
}

TEST_CASE("constant signals make normalization fail loudly") {
  std::vector<SensorWindow> ws(1);
  ws[0].sample_rate_hz = 50.0;
  ws[0].values = Tensor({2, 8}, 3.14);  // zero variance everywhere
  CHECK_THROWS(compute_normalization(ws, 1));
}

TEST_CASE("labeled subset draws exactly per_class of every class") {
  LabeledDataset d = tiny_synthetic();
  // 4 participants x 5 windows = 20 per class.
  LabeledDataset s = sample_labeled_subset(d, 7, 99);
  CHECK(s.size() == 21);
  std::vector<int> counts(3, 0);
  for (std::size_t l : s.labels) ++counts[l];
  for (int c : counts) CHECK(c == 7);
}

TEST_CASE("labeled subset is deterministic per seed and varies across seeds") {
  LabeledDataset d = tiny_synthetic();
  LabeledDataset a = sample_labeled_subset(d, 5, 42);
  LabeledDataset b = sample_labeled_subset(d, 5, 42);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.labels[i] == b.labels[i]);
    CHECK(a.windows[i].values.values == b.windows[i].values.values);
  }
  LabeledDataset c = sample_labeled_subset(d, 5, 43);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size() && !any_diff; ++i)
    any_diff = a.windows[i].values.values != c.windows[i].values.values;
  CHECK(any_diff);
  std::vector<int> counts(3, 0);
  for (std::size_t l : c.labels) ++counts[l];
  for (int cc : counts) CHECK(cc == 5);
}

TEST_CASE("requesting the full class size includes the class completely") {
  LabeledDataset d = tiny_synthetic();
  LabeledDataset s = sample_labeled_subset(d, 20, 1);
  CHECK(s.size() == d.size());
}

TEST_CASE("insufficient instances name the class in the error") {
  LabeledDataset d = tiny_synthetic();
  CHECK_THROWS_WITH_AS(sample_labeled_subset(d, 21, 1),
                       doctest::Contains("class_0"), std::runtime_error);
}

TEST_CASE("synthetic generation is bit-identical for the same seed") {
  LabeledDataset a = tiny_synthetic(5);
  LabeledDataset b = tiny_synthetic(5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.windows[i].values.values == b.windows[i].values.values);
  LabeledDataset c = tiny_synthetic(6);
  CHECK(a.windows[0].values.values != c.windows[0].values.values);
}

TEST_CASE("synthetic generation populates every class and participant") {
  LabeledDataset d = tiny_synthetic();
  CHECK(d.size() == 3 * 4 * 5);
  CHECK(d.num_classes() == 3);
  std::set<int> parts(d.participant_ids.begin(), d.participant_ids.end());
  CHECK(parts.size() == 4);
  d.validate();
}

TEST_CASE("stack_windows builds the (B, C, T) batch in order") {
  LabeledDataset d = tiny_synthetic();
  Tensor batch = stack_windows(d.windows, {2, 0});
  REQUIRE(batch.shape == std::vector<std::size_t>{2, 6, 32});
  CHECK(batch.at3(0, 0, 0) == d.windows[2].values.at2(0, 0));
  CHECK(batch.at3(1, 5, 31) == d.windows[0].values.at2(5, 31));
}

TEST_CASE("dataset cache round-trips bit-exactly") {
  LabeledDataset d = tiny_synthetic(11);
  const std::string path = "/tmp/edd_cache_test.bin";
  save_dataset_cache(d, path);
  LabeledDataset r = load_dataset_cache(path);
  REQUIRE(r.size() == d.size());
  CHECK(r.label_space == d.label_space);
  CHECK(r.labels == d.labels);
  CHECK(r.participant_ids == d.participant_ids);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(r.windows[i].values.values == d.windows[i].values.values);
    CHECK(r.windows[i].sample_rate_hz == d.windows[i].sample_rate_hz);
  }
  std::remove(path.c_str());
}

TEST_CASE("cache loading rejects garbage") {
  const std::string path = "/tmp/edd_cache_garbage.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a cache", f);
    std::fclose(f);
  }
  CHECK_THROWS(load_dataset_cache(path));
  CHECK_THROWS(load_dataset_cache("/tmp/edd_cache_missing.bin"));
  std::remove(path.c_str());
}

TEST_CASE("dataset validation catches broken invariants") {
  LabeledDataset d = tiny_synthetic();
  LabeledDataset bad = d;
  bad.labels[0] = 99;
  CHECK_THROWS(bad.validate());
  bad = d;
  bad.labels.pop_back();
  CHECK_THROWS(bad.validate());
  bad = d;
  bad.windows[1].values.values[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(bad.validate());
}
