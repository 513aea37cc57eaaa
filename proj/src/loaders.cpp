#include "edd/loaders.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cctype>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "edd/rng.hpp"

namespace fs = std::filesystem;

namespace edd {
namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

[[noreturn]] void fail_at(const std::string& file, std::size_t line,
                          const std::string& msg) {
  fail(file + ":" + std::to_string(line) + ": " + msg);
}

std::ifstream open_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("loaders: cannot open " + path);
  return in;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r'))
      ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r')
      ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

bool equals_ignore_case(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i])))
      return false;
  }
  return true;
}

double parse_double(std::string_view tok, const std::string& file, std::size_t line) {
  if (equals_ignore_case(tok, "nan"))
    return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const char* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), last, v);
  if (ec != std::errc{} || p != last)
    fail_at(file, line, "cannot parse '" + std::string(tok) + "' as a number");
  return v;
}

long long parse_int(std::string_view tok, const std::string& file, std::size_t line) {
  long long v = 0;
  const char* last = tok.data() + tok.size();
  auto [p, ec] = std::from_chars(tok.data(), last, v);
  if (ec != std::errc{} || p != last)
    fail_at(file, line, "cannot parse '" + std::string(tok) + "' as an integer");
  return v;
}

// Linear interpolation of the samples (t, v) onto `grid`. t is sorted
// ascending; grid points beyond the sampled span clamp to the end values,
// duplicate timestamps take the left sample.
std::vector<double> interp_to_grid(const std::vector<double>& t,
                                   const std::vector<double>& v,
                                   const std::vector<double>& grid) {
  std::vector<double> out(grid.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double g = grid[i];
    while (j + 2 < t.size() && t[j + 1] < g) ++j;
    if (g <= t[j]) {
      out[i] = v[j];
    } else if (g >= t[j + 1]) {
      out[i] = v[j + 1];
    } else {
      const double dt = t[j + 1] - t[j];
      out[i] = v[j] + (v[j + 1] - v[j]) * ((g - t[j]) / dt);
    }
  }
  return out;
}

void append_windows(LabeledDataset& out, const std::vector<SensorWindow>& ws,
                    std::size_t label, int participant) {
  for (const SensorWindow& w : ws) {
    out.windows.push_back(w);
    out.labels.push_back(label);
    out.participant_ids.push_back(participant);
  }
}

void finish_corpus(LoadedCorpus& corpus) {
  if (corpus.train.size() == 0)
    fail("load_" + corpus.name + ": train split is empty");
  if (corpus.validation.size() == 0)
    fail("load_" + corpus.name + ": validation split is empty");
  corpus.train.validate();
  corpus.validation.validate();
}

// === HHAR ====================================================================

constexpr double kHharRateHz = 50.0;

constexpr std::array<std::string_view, 6> kHharLabels = {
    "bike", "sit", "stand", "walk", "stairsup", "stairsdown"};

int hhar_class_of(std::string_view gt) {
  for (std::size_t i = 0; i < kHharLabels.size(); ++i)
    if (gt == kHharLabels[i]) return static_cast<int>(i);
  return -1;
}

// One (participant, device) signal stream: timestamps in seconds, xyz values,
// and the class id per row (-1 for unlabeled rows, which break segments).
struct SignalSeries {
  std::vector<double> t;
  std::array<std::vector<double>, 3> v;
  std::vector<int> label;
};

using SeriesKey = std::pair<int, std::string>;  // (participant, device)

void sort_series_by_time(SignalSeries& s) {
  std::vector<std::size_t> order(s.t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return s.t[a] < s.t[b]; });
  SignalSeries sorted;
  sorted.t.reserve(order.size());
  sorted.label.reserve(order.size());
  for (auto& axis : sorted.v) axis.reserve(order.size());
  for (std::size_t i : order) {
    sorted.t.push_back(s.t[i]);
    for (std::size_t a = 0; a < 3; ++a) sorted.v[a].push_back(s.v[a][i]);
    sorted.label.push_back(s.label[i]);
  }
  s = std::move(sorted);
}

void parse_hhar_file(const std::string& path,
                     std::map<SeriesKey, SignalSeries>& series) {
  std::ifstream in = open_text(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) fail(path + ": empty file");
  ++lineno;
  const auto header = split_csv(line);
  const auto col = [&](std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    fail(path + ": missing channel column '" + std::string(name) + "'");
  };
  const std::size_t c_time = col("Creation_Time");
  const std::size_t c_x = col("x");
  const std::size_t c_y = col("y");
  const std::size_t c_z = col("z");
  const std::size_t c_user = col("User");
  const std::size_t c_device = col("Device");
  const std::size_t c_gt = col("gt");

  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      fail_at(path, lineno, "expected " + std::to_string(header.size()) +
                                " fields, got " + std::to_string(f.size()));
    const std::string_view user = f[c_user];
    if (user.size() != 1 || user[0] < 'a' || user[0] > 'i')
      fail_at(path, lineno, "unknown user '" + std::string(user) + "'");
    const int participant = user[0] - 'a' + 1;
    const std::string_view gt = f[c_gt];
    int cls = -1;
    if (!gt.empty() && gt != "null") {
      cls = hhar_class_of(gt);
      if (cls < 0)
        fail_at(path, lineno, "unknown activity '" + std::string(gt) + "'");
    }
    SignalSeries& s = series[{participant, std::string(f[c_device])}];
    s.t.push_back(parse_double(f[c_time], path, lineno) * 1e-9);  // ns -> s
    s.v[0].push_back(parse_double(f[c_x], path, lineno));
    s.v[1].push_back(parse_double(f[c_y], path, lineno));
    s.v[2].push_back(parse_double(f[c_z], path, lineno));
    s.label.push_back(cls);
  }
}

// Resamples one contiguous accelerometer segment and the matching gyroscope
// rows onto a shared 50 Hz grid and windows the result.
void hhar_segment_windows(const SignalSeries& accel, std::size_t seg_begin,
                          std::size_t seg_end, const SignalSeries& gyro,
                          const WindowingConfig& w, int participant,
                          LabeledDataset& out) {
  const int cls = accel.label[seg_begin];
  const std::size_t n_a = seg_end - seg_begin;
  if (n_a < 2) return;

  std::vector<double> ta(accel.t.begin() + static_cast<std::ptrdiff_t>(seg_begin),
                         accel.t.begin() + static_cast<std::ptrdiff_t>(seg_end));
  std::array<std::vector<double>, 3> va;
  for (std::size_t a = 0; a < 3; ++a)
    va[a].assign(accel.v[a].begin() + static_cast<std::ptrdiff_t>(seg_begin),
                 accel.v[a].begin() + static_cast<std::ptrdiff_t>(seg_end));

  // Gyroscope rows inside the segment's time range carrying the same label.
  std::vector<double> tg;
  std::array<std::vector<double>, 3> vg;
  const auto first = std::lower_bound(gyro.t.begin(), gyro.t.end(), ta.front());
  for (auto it = first; it != gyro.t.end() && *it <= ta.back(); ++it) {
    const std::size_t i = static_cast<std::size_t>(it - gyro.t.begin());
    if (gyro.label[i] != cls) continue;
    tg.push_back(gyro.t[i]);
    for (std::size_t a = 0; a < 3; ++a) vg[a].push_back(gyro.v[a][i]);
  }
  if (tg.size() < 2) return;

  const double lo = std::max(ta.front(), tg.front());
  const double hi = std::min(ta.back(), tg.back());
  if (!(hi > lo)) return;
  const auto steps =
      static_cast<std::size_t>(std::floor((hi - lo) * kHharRateHz)) + 1;
  if (steps < w.length) return;
  std::vector<double> grid(steps);
  for (std::size_t i = 0; i < steps; ++i)
    grid[i] = lo + static_cast<double>(i) / kHharRateHz;

  Tensor stream({6, steps});
  for (std::size_t a = 0; a < 3; ++a) {
    const std::vector<double> ra = interp_to_grid(ta, va[a], grid);
    const std::vector<double> rg = interp_to_grid(tg, vg[a], grid);
    for (std::size_t i = 0; i < steps; ++i) {
      stream.at2(a, i) = ra[i];
      stream.at2(a + 3, i) = rg[i];
    }
  }
  append_windows(out, window_stream(stream, kHharRateHz, w.length, w.overlap),
                 static_cast<std::size_t>(cls), participant);
}

// Caps every participant at `cap` windows, chosen without replacement,
// deterministically per (seed, participant) and preserving original order.
LabeledDataset subsample_per_participant(const LabeledDataset& d, std::size_t cap,
                                         std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_user;
  for (std::size_t i = 0; i < d.size(); ++i)
    by_user[d.participant_ids[i]].push_back(i);

  std::vector<std::size_t> keep;
  keep.reserve(d.size());
  const Rng root(seed);
  for (auto& [uid, idx] : by_user) {
    if (idx.size() > cap) {
      Rng rng = root.split("subsample_user", static_cast<std::uint64_t>(uid));
      rng.shuffle(idx);
      idx.resize(cap);
      std::sort(idx.begin(), idx.end());
    }
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());

  LabeledDataset out;
  out.label_space = d.label_space;
  out.windows.reserve(keep.size());
  for (std::size_t i : keep) {
    out.windows.push_back(d.windows[i]);
    out.labels.push_back(d.labels[i]);
    out.participant_ids.push_back(d.participant_ids[i]);
  }
  return out;
}

}  // namespace

std::pair<LabeledDataset, LabeledDataset> split_by_participants(
    const LabeledDataset& d, const std::vector<int>& train_ids) {
  const std::unordered_set<int> in_train(train_ids.begin(), train_ids.end());
  LabeledDataset train;
  LabeledDataset validation;
  train.label_space = d.label_space;
  validation.label_space = d.label_space;
  for (std::size_t i = 0; i < d.size(); ++i) {
    LabeledDataset& dst =
        in_train.count(d.participant_ids[i]) ? train : validation;
    dst.windows.push_back(d.windows[i]);
    dst.labels.push_back(d.labels[i]);
    dst.participant_ids.push_back(d.participant_ids[i]);
  }
  return {std::move(train), std::move(validation)};
}

LoadedCorpus load_hhar(const std::string& root, const WindowingConfig& w,
                       std::size_t samples_per_user, std::uint64_t subsample_seed) {
  std::map<SeriesKey, SignalSeries> accel;
  std::map<SeriesKey, SignalSeries> gyro;
  parse_hhar_file(root + "/Phones_accelerometer.csv", accel);
  parse_hhar_file(root + "/Phones_gyroscope.csv", gyro);

  LabeledDataset all;
  all.label_space.assign(kHharLabels.begin(), kHharLabels.end());
  for (auto& [key, series] : accel) {
    const auto g = gyro.find(key);
    if (g == gyro.end()) continue;  // no paired gyroscope stream
    sort_series_by_time(series);
    sort_series_by_time(g->second);
    // Contiguous runs of one activity; unlabeled rows break runs.
    std::size_t i = 0;
    while (i < series.label.size()) {
      if (series.label[i] < 0) {
        ++i;
        continue;
      }
      std::size_t j = i + 1;
      while (j < series.label.size() && series.label[j] == series.label[i]) ++j;
      hhar_segment_windows(series, i, j, g->second, w, key.first, all);
      i = j;
    }
  }

  if (samples_per_user == 0) fail("load_hhar: samples_per_user must be positive");
  all = subsample_per_participant(all, samples_per_user, subsample_seed);

  LoadedCorpus corpus;
  corpus.name = "hhar";
  auto parts = split_by_participants(all, {1, 2, 3, 4, 5, 6});
  corpus.train = std::move(parts.first);
  corpus.validation = std::move(parts.second);
  finish_corpus(corpus);
  return corpus;
}

// === UCI HAR =================================================================

namespace {

constexpr std::size_t kUciWindowLength = 128;
constexpr double kUciRateHz = 50.0;

std::vector<std::vector<double>> read_signal_rows(const std::string& path) {
  std::ifstream in = open_text(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto toks = split_whitespace(line);
    if (toks.size() != kUciWindowLength)
      fail_at(path, lineno, "expected " + std::to_string(kUciWindowLength) +
                                " readings, got " + std::to_string(toks.size()));
    std::vector<double> row(kUciWindowLength);
    for (std::size_t i = 0; i < toks.size(); ++i)
      row[i] = parse_double(toks[i], path, lineno);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) fail(path + ": no data rows");
  return rows;
}

std::vector<long long> read_int_column(const std::string& path) {
  std::ifstream in = open_text(path);
  std::vector<long long> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view tok = trim(line);
    if (tok.empty()) continue;
    out.push_back(parse_int(tok, path, lineno));
  }
  if (out.empty()) fail(path + ": no data rows");
  return out;
}

LabeledDataset load_uci_split(const std::string& root, const std::string& split) {
  const std::string dir = root + "/" + split;
  const std::string sig = dir + "/Inertial Signals/";
  const std::array<char, 3> axes = {'x', 'y', 'z'};
  std::array<std::vector<std::vector<double>>, 6> chans;
  for (std::size_t a = 0; a < 3; ++a) {
    chans[a] = read_signal_rows(sig + "total_acc_" + axes[a] + "_" + split + ".txt");
    chans[a + 3] =
        read_signal_rows(sig + "body_gyro_" + axes[a] + "_" + split + ".txt");
  }
  const std::string y_path = dir + "/y_" + split + ".txt";
  const auto labels = read_int_column(y_path);
  const auto subjects = read_int_column(dir + "/subject_" + split + ".txt");

  const std::size_t n = chans[0].size();
  for (const auto& c : chans)
    if (c.size() != n)
      fail(sig + ": signal files disagree on row count (" + std::to_string(n) +
           " vs " + std::to_string(c.size()) + ")");
  if (labels.size() != n || subjects.size() != n)
    fail(dir + ": label/subject rows (" + std::to_string(labels.size()) + "/" +
         std::to_string(subjects.size()) + ") do not match signal rows (" +
         std::to_string(n) + ")");

  LabeledDataset out;
  out.label_space = {"walking",  "walking_upstairs", "walking_downstairs",
                     "sitting",  "standing",         "laying"};
  for (std::size_t r = 0; r < n; ++r) {
    if (labels[r] < 1 || labels[r] > static_cast<long long>(out.label_space.size()))
      fail(y_path + ": row " + std::to_string(r + 1) + ": label " +
           std::to_string(labels[r]) + " out of range 1..6");
    SensorWindow win;
    win.sample_rate_hz = kUciRateHz;
    win.values = Tensor({6, kUciWindowLength});
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t t = 0; t < kUciWindowLength; ++t)
        win.values.at2(c, t) = chans[c][r][t];
    out.windows.push_back(std::move(win));
    out.labels.push_back(static_cast<std::size_t>(labels[r] - 1));
    out.participant_ids.push_back(static_cast<int>(subjects[r]));
  }
  return out;
}

}  // namespace

LoadedCorpus load_uci_har(const std::string& root) {
  LoadedCorpus corpus;
  corpus.name = "uci_har";
  corpus.train = load_uci_split(root, "train");
  corpus.validation = load_uci_split(root, "test");
  finish_corpus(corpus);
  return corpus;
}

// === MotionSense =============================================================

namespace {

constexpr double kMotionSenseRateHz = 50.0;

struct MsActivity {
  std::string_view code;
  std::string_view name;
};

constexpr std::array<MsActivity, 6> kMsActivities = {{{"dws", "downstairs"},
                                                      {"ups", "upstairs"},
                                                      {"wlk", "walking"},
                                                      {"jog", "jogging"},
                                                      {"sit", "sitting"},
                                                      {"std", "standing"}}};

void load_motionsense_file(const std::string& path, int participant,
                           std::size_t cls, const WindowingConfig& w,
                           LabeledDataset& out) {
  std::ifstream in = open_text(path);
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) fail(path + ": empty file");
  ++lineno;
  const auto header = split_csv(line);
  const std::array<std::string_view, 6> wanted = {
      "userAcceleration.x", "userAcceleration.y", "userAcceleration.z",
      "rotationRate.x",     "rotationRate.y",     "rotationRate.z"};
  std::array<std::size_t, 6> cols{};
  for (std::size_t c = 0; c < wanted.size(); ++c) {
    bool found = false;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == wanted[c]) {
        cols[c] = i;
        found = true;
        break;
      }
    }
    if (!found)
      fail(path + ": missing channel column '" + std::string(wanted[c]) + "'");
  }

  std::array<std::vector<double>, 6> chan;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      fail_at(path, lineno, "expected " + std::to_string(header.size()) +
                                " fields, got " + std::to_string(f.size()));
    for (std::size_t c = 0; c < 6; ++c)
      chan[c].push_back(parse_double(f[cols[c]], path, lineno));
  }

  const std::size_t steps = chan[0].size();
  Tensor stream({6, steps});
  for (std::size_t c = 0; c < 6; ++c)
    for (std::size_t t = 0; t < steps; ++t) stream.at2(c, t) = chan[c][t];
  append_windows(out,
                 window_stream(stream, kMotionSenseRateHz, w.length, w.overlap),
                 cls, participant);
}

// Parses "sub_<k>.csv" -> k, or -1 when the name does not match.
int motionsense_participant_of(const std::string& filename) {
  constexpr std::string_view prefix = "sub_";
  constexpr std::string_view suffix = ".csv";
  if (filename.size() <= prefix.size() + suffix.size()) return -1;
  if (filename.rfind(prefix, 0) != 0) return -1;
  if (filename.compare(filename.size() - suffix.size(), suffix.size(), suffix) != 0)
    return -1;
  const std::string_view digits(filename.data() + prefix.size(),
                                filename.size() - prefix.size() - suffix.size());
  int k = 0;
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), k);
  if (ec != std::errc{} || p != digits.data() + digits.size()) return -1;
  return k;
}

}  // namespace

LoadedCorpus load_motionsense(const std::string& root, const WindowingConfig& w) {
  const std::string base = root + "/A_DeviceMotion_data";
  if (!fs::is_directory(base)) fail("loaders: cannot open " + base);

  std::vector<std::string> trial_dirs;
  for (const auto& entry : fs::directory_iterator(base))
    if (entry.is_directory()) trial_dirs.push_back(entry.path().filename().string());
  std::sort(trial_dirs.begin(), trial_dirs.end());

  LabeledDataset all;
  for (const auto& a : kMsActivities) all.label_space.emplace_back(a.name);

  for (const std::string& dir : trial_dirs) {
    const std::size_t underscore = dir.find('_');
    const std::string code = dir.substr(0, underscore);
    std::size_t cls = kMsActivities.size();
    for (std::size_t i = 0; i < kMsActivities.size(); ++i)
      if (code == kMsActivities[i].code) cls = i;
    if (cls == kMsActivities.size())
      fail(base + "/" + dir + ": unknown activity directory");

    std::vector<std::pair<int, std::string>> files;  // (participant, filename)
    for (const auto& entry : fs::directory_iterator(base + "/" + dir)) {
      if (!entry.is_regular_file()) continue;
      const std::string name = entry.path().filename().string();
      const int participant = motionsense_participant_of(name);
      if (participant < 0) continue;
      files.emplace_back(participant, name);
    }
    std::sort(files.begin(), files.end());
    for (const auto& [participant, name] : files)
      load_motionsense_file(base + "/" + dir + "/" + name, participant, cls, w,
                            all);
  }

  LoadedCorpus corpus;
  corpus.name = "motionsense";
  std::vector<int> train_ids(16);
  std::iota(train_ids.begin(), train_ids.end(), 1);
  auto parts = split_by_participants(all, train_ids);
  corpus.train = std::move(parts.first);
  corpus.validation = std::move(parts.second);
  finish_corpus(corpus);
  return corpus;
}

// === PAMAP2 ==================================================================

namespace {

constexpr double kPamapRateHz = 100.0;
constexpr std::size_t kPamapColumns = 54;
// Wrist ("hand") IMU: 16g accelerometer xyz then gyroscope xyz, 0-based.
constexpr std::array<std::size_t, 6> kPamapChannels = {4, 5, 6, 10, 11, 12};

struct PamapActivity {
  long long id;
  std::string_view name;
};

constexpr std::array<PamapActivity, 12> kPamapActivities = {
    {{1, "lying"},
     {2, "sitting"},
     {3, "standing"},
     {4, "walking"},
     {5, "running"},
     {6, "cycling"},
     {7, "nordic_walking"},
     {12, "ascending_stairs"},
     {13, "descending_stairs"},
     {16, "vacuum_cleaning"},
     {17, "ironing"},
     {24, "rope_jumping"}}};

int pamap_class_of(long long id) {
  for (std::size_t i = 0; i < kPamapActivities.size(); ++i)
    if (kPamapActivities[i].id == id) return static_cast<int>(i);
  return -1;
}

// Fills non-finite entries by linear interpolation between the nearest finite
// neighbours, clamping at the ends. Returns false when nothing is finite.
bool fill_missing_linear(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::size_t first_finite = n;
  std::size_t prev_finite = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(v[i])) continue;
    if (first_finite == n) first_finite = i;
    if (prev_finite != n && i > prev_finite + 1) {
      const double lo = v[prev_finite];
      const double hi = v[i];
      const double span = static_cast<double>(i - prev_finite);
      for (std::size_t j = prev_finite + 1; j < i; ++j)
        v[j] = lo + (hi - lo) * (static_cast<double>(j - prev_finite) / span);
    }
    prev_finite = i;
  }
  if (first_finite == n) return false;
  for (std::size_t i = 0; i < first_finite; ++i) v[i] = v[first_finite];
  for (std::size_t i = prev_finite + 1; i < n; ++i) v[i] = v[prev_finite];
  return true;
}

void flush_pamap_segment(std::array<std::vector<double>, 6>& seg, int cls,
                         int participant, const WindowingConfig& w,
                         LabeledDataset& out) {
  if (cls < 0 || seg[0].empty()) {
    for (auto& c : seg) c.clear();
    return;
  }
  bool usable = true;
  for (auto& c : seg)
    if (!fill_missing_linear(c)) usable = false;
  if (usable) {
    const std::size_t steps = seg[0].size();
    Tensor stream({6, steps});
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t t = 0; t < steps; ++t) stream.at2(c, t) = seg[c][t];
    append_windows(out, window_stream(stream, kPamapRateHz, w.length, w.overlap),
                   static_cast<std::size_t>(cls), participant);
  }
  for (auto& c : seg) c.clear();
}

void load_pamap_file(const std::string& path, int participant,
                     const WindowingConfig& w, LabeledDataset& out) {
  std::ifstream in = open_text(path);
  std::string line;
  std::size_t lineno = 0;
  std::array<std::vector<double>, 6> seg;
  int seg_cls = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_whitespace(line);
    if (f.size() != kPamapColumns)
      fail_at(path, lineno, "expected " + std::to_string(kPamapColumns) +
                                " columns, got " + std::to_string(f.size()));
    const long long activity = parse_int(f[1], path, lineno);
    int cls = -1;
    if (activity != 0) {
      cls = pamap_class_of(activity);
      if (cls < 0)
        fail_at(path, lineno,
                "unknown activity id " + std::to_string(activity));
    }
    if (cls != seg_cls) {
      flush_pamap_segment(seg, seg_cls, participant, w, out);
      seg_cls = cls;
    }
    if (cls < 0) continue;  // transient rows between activities
    for (std::size_t c = 0; c < 6; ++c)
      seg[c].push_back(parse_double(f[kPamapChannels[c]], path, lineno));
  }
  flush_pamap_segment(seg, seg_cls, participant, w, out);
}

}  // namespace

LoadedCorpus load_pamap2(const std::string& root, const WindowingConfig& w) {
  const std::string base = root + "/Protocol";
  if (!fs::is_directory(base)) fail("loaders: cannot open " + base);

  std::vector<std::pair<int, std::string>> files;  // (participant, path)
  for (const auto& entry : fs::directory_iterator(base)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    constexpr std::string_view prefix = "subject";
    constexpr std::string_view suffix = ".dat";
    if (name.size() != prefix.size() + 3 + suffix.size()) continue;
    if (name.rfind(prefix, 0) != 0) continue;
    if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
      continue;
    int id = 0;
    const char* first = name.data() + prefix.size();
    auto [p, ec] = std::from_chars(first, first + 3, id);
    if (ec != std::errc{} || p != first + 3) continue;
    const int participant = id - 100;
    if (participant < 1 || participant > 9) continue;
    files.emplace_back(participant, entry.path().string());
  }
  if (files.empty()) fail(base + ": no subject recordings found");
  std::sort(files.begin(), files.end());

  LabeledDataset all;
  for (const auto& a : kPamapActivities) all.label_space.emplace_back(a.name);
  for (const auto& [participant, path] : files)
    load_pamap_file(path, participant, w, all);

  LoadedCorpus corpus;
  corpus.name = "pamap2";
  auto parts = split_by_participants(all, {1, 2, 3, 4, 5, 6});
  corpus.train = std::move(parts.first);
  corpus.validation = std::move(parts.second);
  finish_corpus(corpus);
  return corpus;
}

// === dispatch ================================================================

LoadedCorpus load_dataset(const DatasetDescriptor& desc) {
  if (desc.name == "synthetic") {
    if (!(desc.synthetic_train_fraction > 0.0) ||
        !(desc.synthetic_train_fraction < 1.0))
      fail("load_dataset: synthetic_train_fraction must lie in (0, 1)");
    const LabeledDataset all = generate_synthetic(desc.synthetic);
    std::vector<int> ids(all.participant_ids);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2)
      fail("load_dataset: synthetic split needs at least 2 participants");
    auto n_train = static_cast<std::size_t>(std::ceil(
        desc.synthetic_train_fraction * static_cast<double>(ids.size())));
    n_train = std::min(n_train, ids.size() - 1);
    n_train = std::max<std::size_t>(n_train, 1);
    ids.resize(n_train);

    LoadedCorpus corpus;
    corpus.name = "synthetic";
    auto parts = split_by_participants(all, ids);
    corpus.train = std::move(parts.first);
    corpus.validation = std::move(parts.second);
    finish_corpus(corpus);
    return corpus;
  }
  if (desc.name == "hhar")
    return load_hhar(desc.root, desc.windowing, desc.hhar_samples_per_user,
                     desc.subsample_seed);
  if (desc.name == "uci_har") return load_uci_har(desc.root);
  if (desc.name == "motionsense") return load_motionsense(desc.root, desc.windowing);
  if (desc.name == "pamap2") return load_pamap2(desc.root, desc.windowing);
  fail("load_dataset: unknown dataset name '" + desc.name +
       "' (expected synthetic|hhar|uci_har|motionsense|pamap2)");
}

}  // namespace edd
