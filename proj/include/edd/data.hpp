#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edd/rng.hpp"
#include "edd/tensor.hpp"

namespace edd {

// One fixed-length multichannel sensor window: values are (channels, timesteps).
struct SensorWindow {
  Tensor values;
  double sample_rate_hz = 0.0;

  std::size_t channels() const { return values.dim(0); }
  std::size_t timesteps() const { return values.dim(1); }
};

struct LabeledDataset {
  std::vector<SensorWindow> windows;
  std::vector<std::size_t> labels;
  std::vector<std::string> label_space;  // class names, index = class id
  std::vector<int> participant_ids;

  std::size_t size() const { return windows.size(); }
  std::size_t num_classes() const { return label_space.size(); }

  // Enforces the container invariants: equal lengths, labels < K, uniform
  // window shape and sample rate, finite values. Throws std::runtime_error.
  void validate() const;
};

struct UnlabeledDataset {
  std::vector<SensorWindow> windows;
  std::vector<int> participant_ids;

  std::size_t size() const { return windows.size(); }
  void validate() const;  // throws std::runtime_error naming the problem
};

// Per-modality scale divisors: the leading `accel_channels` channels form the
// accelerometer block, the rest the gyroscope block.
struct NormalizationStats {
  double accel_scale = 1.0;
  double gyro_scale = 1.0;
  std::size_t accel_channels = 3;
};

// --- windowing ---------------------------------------------------------------

// Slices a (channels, T) stream into fixed-length windows advancing by
// length*(1-overlap) timesteps, truncating the tail. A stream shorter than
// `length` yields no windows.
std::vector<SensorWindow> window_stream(const Tensor& stream, double sample_rate_hz,
                                        std::size_t length, double overlap);

// --- normalization -----------------------------------------------------------

// Scale per modality so that the mean over training windows and block channels
// of the per-window-per-channel standard deviation becomes exactly 1.
NormalizationStats compute_normalization(const std::vector<SensorWindow>& train,
                                         std::size_t accel_channels);

void apply_normalization(std::vector<SensorWindow>& windows,
                         const NormalizationStats& stats);

// Mean per-window-per-channel standard deviation of one modality block;
// the quantity compute_normalization drives to 1.
double mean_block_std(const std::vector<SensorWindow>& windows,
                      std::size_t channel_begin, std::size_t channel_end);

// --- labeled subsets -----------------------------------------------------------

// Samples exactly per_class instances of every class without replacement,
// deterministically for a given seed, preserving original instance order.
LabeledDataset sample_labeled_subset(const LabeledDataset& d, std::size_t per_class,
                                     std::uint64_t seed);

// --- synthetic data ------------------------------------------------------------

struct SyntheticConfig {
  std::size_t num_classes = 3;
  std::size_t channels = 6;
  std::size_t window_length = 128;
  std::size_t participants = 8;
  std::size_t windows_per_class_per_participant = 40;
  double noise = 0.5;            // Gaussian noise std on top of the class signal
  double sample_rate_hz = 50.0;
  std::uint64_t seed = 0;
};

// Class-dependent multi-sinusoid windows plus noise. Participants carry a
// small personal frequency perturbation so subject-wise splits matter.
LabeledDataset generate_synthetic(const SyntheticConfig& config);

// --- batching ------------------------------------------------------------------

// Stacks the selected windows into a (B, channels, timesteps) batch tensor.
Tensor stack_windows(const std::vector<SensorWindow>& windows,
                     const std::vector<std::size_t>& indices);
// All windows, in order.
Tensor stack_windows(const std::vector<SensorWindow>& windows);

// --- cache ---------------------------------------------------------------------

// Self-describing binary container (magic, version, shape header, little-endian
// 64-bit floats). Round-trips a LabeledDataset bit-exactly.
void save_dataset_cache(const LabeledDataset& d, const std::string& path);
LabeledDataset load_dataset_cache(const std::string& path);

}  // namespace edd
