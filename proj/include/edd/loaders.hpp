#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "edd/data.hpp"

namespace edd {

// Windowing applied by the stream-based corpus readers.
struct WindowingConfig {
  std::size_t length = 128;
  double overlap = 0.5;
};

// A corpus split subject-wise into train and validation partitions.
struct LoadedCorpus {
  std::string name;
  LabeledDataset train;
  LabeledDataset validation;
};

// Subject-wise split: windows of participants listed in train_ids form the
// first partition, everyone else the second. Both partitions keep the full
// label space.
std::pair<LabeledDataset, LabeledDataset> split_by_participants(
    const LabeledDataset& d, const std::vector<int>& train_ids);

// Heterogeneity HAR: smartphone accelerometer and gyroscope CSVs
// (Phones_accelerometer.csv / Phones_gyroscope.csv under `root`) recorded at
// mixed 50-200 Hz rates. Both modalities are linearly resampled onto a shared
// 50 Hz grid per contiguous activity segment of each (user, device) stream.
// Users a-i map to participants 1-9; 1-6 train, 7-9 validation. Each user's
// windows are subsampled to at most samples_per_user, seeded.
LoadedCorpus load_hhar(const std::string& root, const WindowingConfig& w,
                       std::size_t samples_per_user = 1000,
                       std::uint64_t subsample_seed = 0);

// UCI HAR: pre-windowed 128-step inertial-signal rows (total acceleration +
// body gyroscope) with the published train/test partition; the test half
// serves as validation. Windowing is fixed by the corpus itself.
LoadedCorpus load_uci_har(const std::string& root);

// MotionSense: per-trial device-motion CSVs at 50 Hz under
// A_DeviceMotion_data/<activity>_<trial>/sub_<k>.csv. Channels are resolved
// by header name (userAcceleration.* + rotationRate.*). Participants 1-16
// train, 17-24 validation.
LoadedCorpus load_motionsense(const std::string& root, const WindowingConfig& w);

// PAMAP2 protocol recordings at 100 Hz restricted to the wrist-worn IMU
// (16g accelerometer + gyroscope). Transient activity 0 is dropped, missing
// values are filled by per-channel linear interpolation within each activity
// segment. Participants 1-6 train, 7-9 validation.
LoadedCorpus load_pamap2(const std::string& root, const WindowingConfig& w);

// CLI-facing descriptor: `name` selects the reader, `root` points at the
// corpus directory. "synthetic" generates data instead of reading files and
// splits it subject-wise at synthetic_train_fraction.
struct DatasetDescriptor {
  std::string name;  // synthetic | hhar | uci_har | motionsense | pamap2
  std::string root;
  WindowingConfig windowing;
  SyntheticConfig synthetic;              // synthetic only
  double synthetic_train_fraction = 0.7;  // fraction of participants in train
  std::size_t hhar_samples_per_user = 1000;
  std::uint64_t subsample_seed = 0;
};

// Dispatches to the reader named by the descriptor. Every returned split is
// validated and nonempty; failures throw std::runtime_error naming the file
// (and line, for parse errors) or the offending descriptor field.
LoadedCorpus load_dataset(const DatasetDescriptor& desc);

}  // namespace edd
