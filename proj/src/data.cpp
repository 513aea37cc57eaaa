#include "edd/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <type_traits>

namespace edd {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

void LabeledDataset::validate() const {
  if (windows.size() != labels.size() || windows.size() != participant_ids.size()) {
    fail("dataset: windows/labels/participants lengths differ (" +
         std::to_string(windows.size()) + "/" + std::to_string(labels.size()) + "/" +
         std::to_string(participant_ids.size()) + ")");
  }
  for (std::size_t l : labels) {
    if (l >= num_classes()) {
      fail("dataset: label " + std::to_string(l) + " outside [0, " +
           std::to_string(num_classes()) + ")");
    }
  }
  if (windows.empty()) return;
  const auto& shape = windows.front().values.shape;
  const double rate = windows.front().sample_rate_hz;
  for (const SensorWindow& w : windows) {
    if (w.values.shape != shape) {
      fail("dataset: window shape " + w.values.shape_str() + " differs from " +
           windows.front().values.shape_str());
    }
    if (w.sample_rate_hz != rate) fail("dataset: mixed sample rates");
    if (!w.values.all_finite()) fail("dataset: non-finite window values");
  }
}

void UnlabeledDataset::validate() const {
  if (windows.size() != participant_ids.size()) {
    fail("dataset: windows/participants lengths differ (" +
         std::to_string(windows.size()) + "/" + std::to_string(participant_ids.size()) +
         ")");
  }
  if (windows.empty()) return;
  const auto& shape = windows.front().values.shape;
  const double rate = windows.front().sample_rate_hz;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const SensorWindow& w = windows[i];
    if (w.values.shape != shape) {
      fail("dataset: window " + std::to_string(i) + " shape " + w.values.shape_str() +
           " differs from " + windows.front().values.shape_str());
    }
    if (w.sample_rate_hz != rate) fail("dataset: mixed sample rates");
    if (!w.values.all_finite()) {
      fail("dataset: non-finite values in window " + std::to_string(i));
    }
  }
}

// === windowing ===============================================================

std::vector<SensorWindow> window_stream(const Tensor& stream, double sample_rate_hz,
                                        std::size_t length, double overlap) {
  if (stream.rank() != 2) {
    fail("window_stream: expected (channels, T) stream, got " + stream.shape_str());
  }
  if (length < 2) fail("window_stream: length must be >= 2");
  if (overlap < 0.0 || overlap >= 1.0) {
    fail("window_stream: overlap must be in [0, 1), got " + std::to_string(overlap));
  }
  const std::size_t C = stream.dim(0), T = stream.dim(1);
  const std::size_t advance = static_cast<std::size_t>(
      std::llround(static_cast<double>(length) * (1.0 - overlap)));
  if (advance == 0) fail("window_stream: overlap leaves a zero advance");

  std::vector<SensorWindow> out;
  for (std::size_t start = 0; start + length <= T; start += advance) {
    SensorWindow w;
    w.sample_rate_hz = sample_rate_hz;
    w.values = Tensor({C, length});
    for (std::size_t c = 0; c < C; ++c) {
      std::copy_n(&stream.values[c * T + start], length, &w.values.values[c * length]);
    }
    out.push_back(std::move(w));
  }
  return out;
}

// === normalization ===========================================================

double mean_block_std(const std::vector<SensorWindow>& windows,
                      std::size_t channel_begin, std::size_t channel_end) {
  if (windows.empty() || channel_begin >= channel_end) {
    fail("mean_block_std: empty windows or empty channel block");
  }
  long double acc = 0.0L;
  std::size_t count = 0;
  for (const SensorWindow& w : windows) {
    const std::size_t T = w.timesteps();
    for (std::size_t c = channel_begin; c < channel_end; ++c) {
      const double* row = &w.values.values[c * T];
      long double mean = 0.0L;
      for (std::size_t t = 0; t < T; ++t) mean += row[t];
      mean /= static_cast<long double>(T);
      long double var = 0.0L;
      for (std::size_t t = 0; t < T; ++t) {
        const long double d = row[t] - mean;
        var += d * d;
      }
      var /= static_cast<long double>(T);
      acc += std::sqrt(static_cast<double>(var));
      ++count;
    }
  }
  return static_cast<double>(acc / static_cast<long double>(count));
}

NormalizationStats compute_normalization(const std::vector<SensorWindow>& train,
                                         std::size_t accel_channels) {
  if (train.empty()) fail("compute_normalization: no training windows");
  const std::size_t C = train.front().channels();
  if (accel_channels == 0 || accel_channels > C) {
    fail("compute_normalization: accel block size " + std::to_string(accel_channels) +
         " invalid for " + std::to_string(C) + " channels");
  }
  NormalizationStats stats;
  stats.accel_channels = accel_channels;
  stats.accel_scale = mean_block_std(train, 0, accel_channels);
  stats.gyro_scale =
      accel_channels < C ? mean_block_std(train, accel_channels, C) : 1.0;
  if (stats.accel_scale <= 0.0 || stats.gyro_scale <= 0.0) {
    fail("compute_normalization: zero mean standard deviation in a modality");
  }
  return stats;
}

void apply_normalization(std::vector<SensorWindow>& windows,
                         const NormalizationStats& stats) {
  for (SensorWindow& w : windows) {
    const std::size_t C = w.channels(), T = w.timesteps();
    for (std::size_t c = 0; c < C; ++c) {
      const double scale = c < stats.accel_channels ? stats.accel_scale : stats.gyro_scale;
      double* row = &w.values.values[c * T];
      for (std::size_t t = 0; t < T; ++t) row[t] /= scale;
    }
  }
}

// === labeled subsets =========================================================

LabeledDataset sample_labeled_subset(const LabeledDataset& d, std::size_t per_class,
                                     std::uint64_t seed) {
  d.validate();
  Rng rng(seed);
  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < d.num_classes(); ++k) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d.labels[i] == k) members.push_back(i);
    if (members.size() < per_class) {
      fail("sample_labeled_subset: class '" + d.label_space[k] + "' has " +
           std::to_string(members.size()) + " instances, needs " +
           std::to_string(per_class));
    }
    Rng class_rng = rng.split("class", k);
    class_rng.shuffle(members);
    chosen.insert(chosen.end(), members.begin(), members.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());

  LabeledDataset out;
  out.label_space = d.label_space;
  for (std::size_t i : chosen) {
    out.windows.push_back(d.windows[i]);
    out.labels.push_back(d.labels[i]);
    out.participant_ids.push_back(d.participant_ids[i]);
  }
  return out;
}

// === synthetic data ==========================================================

LabeledDataset generate_synthetic(const SyntheticConfig& config) {
  if (config.num_classes == 0 || config.channels == 0 || config.window_length < 2 ||
      config.participants == 0 || config.windows_per_class_per_participant == 0) {
    fail("generate_synthetic: degenerate configuration");
  }
  Rng root(config.seed);

  // Class signatures: two sinusoids per channel with class-specific
  // frequency, amplitude, and phase.
  struct ChannelSig {
    double a1, f1, p1, a2, f2, p2;
  };
  std::vector<std::vector<ChannelSig>> sig(config.num_classes);
  for (std::size_t k = 0; k < config.num_classes; ++k) {
    Rng crng = root.split("class", k);
    sig[k].resize(config.channels);
    for (std::size_t c = 0; c < config.channels; ++c) {
      ChannelSig& s = sig[k][c];
      s.a1 = crng.uniform(0.6, 1.4);
      s.f1 = crng.uniform(0.8, 5.0);
      s.p1 = crng.uniform(0.0, kTwoPi);
      s.a2 = crng.uniform(0.2, 0.6);
      s.f2 = crng.uniform(4.0, 10.0);
      s.p2 = crng.uniform(0.0, kTwoPi);
    }
  }

  LabeledDataset out;
  out.label_space.reserve(config.num_classes);
  for (std::size_t k = 0; k < config.num_classes; ++k)
    out.label_space.push_back("class_" + std::to_string(k));

  std::uint64_t window_index = 0;
  for (std::size_t p = 0; p < config.participants; ++p) {
    Rng prng = root.split("participant", p);
    // Personal gait: each participant stretches frequencies slightly.
    const double freq_stretch = prng.uniform(0.9, 1.1);
    const double amp_stretch = prng.uniform(0.85, 1.15);
    for (std::size_t k = 0; k < config.num_classes; ++k) {
      for (std::size_t n = 0; n < config.windows_per_class_per_participant; ++n) {
        Rng wrng = root.split("window", window_index++);
        const double phase_jitter = wrng.uniform(0.0, kTwoPi);
        SensorWindow w;
        w.sample_rate_hz = config.sample_rate_hz;
        w.values = Tensor({config.channels, config.window_length});
        for (std::size_t c = 0; c < config.channels; ++c) {
          const ChannelSig& s = sig[k][c];
          double* row = &w.values.values[c * config.window_length];
          for (std::size_t t = 0; t < config.window_length; ++t) {
            const double ts = static_cast<double>(t) / config.sample_rate_hz;
            row[t] = amp_stretch *
                         (s.a1 * std::sin(kTwoPi * s.f1 * freq_stretch * ts + s.p1 +
                                          phase_jitter) +
                          s.a2 * std::sin(kTwoPi * s.f2 * freq_stretch * ts + s.p2 +
                                          phase_jitter)) +
                     config.noise * wrng.normal();
          }
        }
        out.windows.push_back(std::move(w));
        out.labels.push_back(k);
        out.participant_ids.push_back(static_cast<int>(p));
      }
    }
  }
  out.validate();
  return out;
}

// === batching ================================================================

Tensor stack_windows(const std::vector<SensorWindow>& windows,
                     const std::vector<std::size_t>& indices) {
  if (indices.empty()) fail("stack_windows: empty selection");
  const std::size_t C = windows.at(indices[0]).channels();
  const std::size_t T = windows.at(indices[0]).timesteps();
  Tensor batch({indices.size(), C, T});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const SensorWindow& w = windows.at(indices[i]);
    if (w.channels() != C || w.timesteps() != T) {
      fail("stack_windows: window " + std::to_string(indices[i]) + " shape " +
           w.values.shape_str() + " differs from " +
           windows.at(indices[0]).values.shape_str());
    }
    std::copy_n(w.values.values.data(), C * T, &batch.values[i * C * T]);
  }
  return batch;
}

Tensor stack_windows(const std::vector<SensorWindow>& windows) {
  std::vector<std::size_t> indices(windows.size());
  std::iota(indices.begin(), indices.end(), 0);
  return stack_windows(windows, indices);
}

// === cache ===================================================================

namespace {

constexpr char kCacheMagic[4] = {'E', 'D', 'D', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

// All integers are written little-endian regardless of host order.
template <class T>
void write_le(std::ofstream& f, T v) {
  static_assert(std::is_integral_v<T> && sizeof(T) <= 8);
  const std::uint64_t u = static_cast<std::uint64_t>(v);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    buf[i] = static_cast<unsigned char>((u >> (8 * i)) & 0xFF);
  f.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void write_le_double(std::ofstream& f, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_le(f, bits);
}

template <class T>
T read_le(std::ifstream& f) {
  unsigned char buf[sizeof(T)];
  f.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!f) throw std::runtime_error("dataset cache: truncated file");
  std::uint64_t u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

double read_le_double(std::ifstream& f) {
  const std::uint64_t bits = read_le<std::uint64_t>(f);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_string(std::ofstream& f, const std::string& s) {
  write_le(f, static_cast<std::uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& f) {
  const std::uint32_t n = read_le<std::uint32_t>(f);
  std::string s(n, '\0');
  f.read(s.data(), n);
  if (!f) throw std::runtime_error("dataset cache: truncated string");
  return s;
}

}  // namespace

void save_dataset_cache(const LabeledDataset& d, const std::string& path) {
  d.validate();
  // Write to a temporary name and rename so readers never see a partial file.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail("dataset cache: cannot open '" + tmp + "' for writing");
    f.write(kCacheMagic, 4);
    write_le(f, kCacheVersion);
    write_le(f, static_cast<std::uint64_t>(d.size()));
    write_le(f, static_cast<std::uint32_t>(d.num_classes()));
    for (const std::string& name : d.label_space) write_string(f, name);
    const std::size_t C = d.windows.empty() ? 0 : d.windows.front().channels();
    const std::size_t T = d.windows.empty() ? 0 : d.windows.front().timesteps();
    write_le(f, static_cast<std::uint64_t>(C));
    write_le(f, static_cast<std::uint64_t>(T));
    write_le_double(f, d.windows.empty() ? 0.0 : d.windows.front().sample_rate_hz);
    for (std::size_t i = 0; i < d.size(); ++i) {
      write_le(f, static_cast<std::uint32_t>(d.labels[i]));
      write_le(f, static_cast<std::int32_t>(d.participant_ids[i]));
      for (double v : d.windows[i].values.values) write_le_double(f, v);
    }
    if (!f) fail("dataset cache: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    fail("dataset cache: rename to '" + path + "' failed");
  }
}

LabeledDataset load_dataset_cache(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("dataset cache: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCacheMagic, 4) != 0) {
    fail("dataset cache: bad magic in '" + path + "'");
  }
  const std::uint32_t version = read_le<std::uint32_t>(f);
  if (version != kCacheVersion) {
    fail("dataset cache: unsupported version " + std::to_string(version));
  }
  const std::uint64_t n = read_le<std::uint64_t>(f);
  const std::uint32_t k = read_le<std::uint32_t>(f);
  LabeledDataset d;
  for (std::uint32_t i = 0; i < k; ++i) d.label_space.push_back(read_string(f));
  const std::uint64_t C = read_le<std::uint64_t>(f);
  const std::uint64_t T = read_le<std::uint64_t>(f);
  const double rate = read_le_double(f);
  d.windows.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    d.labels.push_back(read_le<std::uint32_t>(f));
    d.participant_ids.push_back(read_le<std::int32_t>(f));
    SensorWindow w;
    w.sample_rate_hz = rate;
    w.values = Tensor({static_cast<std::size_t>(C), static_cast<std::size_t>(T)});
    for (double& v : w.values.values) v = read_le_double(f);
    d.windows.push_back(std::move(w));
  }
  d.validate();
  return d;
}

}  // namespace edd
