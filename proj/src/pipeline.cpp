#include "edd/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "edd/adversarial.hpp"
#include "edd/data.hpp"
#include "edd/distill.hpp"
#include "edd/eval.hpp"
#include "edd/loaders.hpp"
#include "edd/models.hpp"
#include "edd/rng.hpp"
#include "edd/training.hpp"
#include "edd/transforms.hpp"
#include "edd/uncertainty.hpp"

namespace fs = std::filesystem;

namespace edd {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// Shortest decimal string that round-trips the exact double, matching the
// formatting used by the evaluation reports.
std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

void write_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) fail("pipeline: cannot open '" + tmp + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    f.flush();
    if (!f) fail("pipeline: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    fail("pipeline: cannot rename '" + tmp + "' to '" + path + "'");
  }
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("pipeline: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string utc_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ---- run-directory layout ---------------------------------------------------

struct RunPaths {
  fs::path root;

  explicit RunPaths(const std::string& run_dir) : root(run_dir) {}

  std::string manifest() const { return (root / "manifest.json").string(); }
  fs::path data_dir() const { return root / "data"; }
  std::string train_cache() const { return (data_dir() / "train.bin").string(); }
  std::string validation_cache() const {
    return (data_dir() / "validation.bin").string();
  }
  std::string meta() const { return (data_dir() / "meta.json").string(); }

  fs::path rep_dir(std::uint64_t seed) const {
    return root / ("rep_" + std::to_string(seed));
  }
  std::string pretext_model(std::uint64_t seed) const {
    return (rep_dir(seed) / "pretext_base.bin").string();
  }
  std::string pretext_log(std::uint64_t seed) const {
    return (rep_dir(seed) / "pretext_log.csv").string();
  }
  std::string ensemble_dir(std::uint64_t seed) const {
    return (rep_dir(seed) / "ensemble").string();
  }
  std::string single_dir(std::uint64_t seed) const {
    return (rep_dir(seed) / "single").string();
  }
  std::string distilled_model(std::uint64_t seed) const {
    return (rep_dir(seed) / "distilled.bin").string();
  }
  std::string distill_log(std::uint64_t seed) const {
    return (rep_dir(seed) / "distill_log.csv").string();
  }
  std::string eval_json(std::uint64_t seed) const {
    return (rep_dir(seed) / "eval.json").string();
  }
  std::string eval_csv(std::uint64_t seed) const {
    return (rep_dir(seed) / "eval.csv").string();
  }
  std::string report_json() const { return (root / "report.json").string(); }
  std::string report_csv() const { return (root / "report.csv").string(); }
};

// ---- manifest ----------------------------------------------------------------

nlohmann::json load_manifest(const RunPaths& paths) {
  if (!fs::exists(paths.manifest())) return nlohmann::json::object();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(paths.manifest()));
  } catch (const nlohmann::json::parse_error&) {
    fail("pipeline: malformed manifest '" + paths.manifest() +
         "' (delete it to start the run over)");
  }
  if (!j.is_object()) {
    fail("pipeline: malformed manifest '" + paths.manifest() +
         "' (delete it to start the run over)");
  }
  return j;
}

// A stage entry counts only when it was completed under the active config.
bool stage_current(const nlohmann::json& manifest, const std::string& stage,
                   const std::string& hash) {
  const auto it = manifest.find(stage);
  if (it == manifest.end() || !it->is_object()) return false;
  const auto h = it->find("config_hash");
  return h != it->end() && h->is_string() && h->get<std::string>() == hash;
}

// ---- config decoding ----------------------------------------------------------

// All derived randomness comes from the repetition seed through tagged
// splits, so stages can re-derive the same streams independently.
std::uint64_t derive_seed(std::uint64_t rep_seed, const std::string& tag,
                          std::uint64_t index = 0) {
  Rng r = Rng(rep_seed).split(tag, index);
  return r.next_u64();
}

std::vector<std::uint64_t> rep_seeds(const Config& cfg) {
  std::vector<std::uint64_t> seeds = cfg.get_uint_list("run", "seeds");
  if (seeds.empty()) {
    throw ConfigError("config: run.seeds must name at least one seed");
  }
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  const auto dup = std::adjacent_find(sorted.begin(), sorted.end());
  if (dup != sorted.end()) {
    throw ConfigError("config: run.seeds contains duplicate seed " +
                      std::to_string(*dup));
  }
  return seeds;
}

DatasetDescriptor dataset_descriptor(const Config& cfg) {
  DatasetDescriptor d;
  d.name = cfg.get_string("data", "name");
  d.root = cfg.get_string("data", "root", "");
  d.windowing.length = static_cast<std::size_t>(cfg.get_uint("data", "window_length", 128));
  d.windowing.overlap = cfg.get_double("data", "window_overlap", 0.5);
  d.synthetic.num_classes = static_cast<std::size_t>(cfg.get_uint("data", "classes", 3));
  d.synthetic.channels = static_cast<std::size_t>(cfg.get_uint("data", "channels", 6));
  d.synthetic.window_length = d.windowing.length;
  d.synthetic.participants =
      static_cast<std::size_t>(cfg.get_uint("data", "participants", 8));
  d.synthetic.windows_per_class_per_participant = static_cast<std::size_t>(
      cfg.get_uint("data", "windows_per_class_per_participant", 40));
  d.synthetic.noise = cfg.get_double("data", "noise", 0.5);
  d.synthetic.seed = cfg.get_uint("data", "seed", 0);
  d.synthetic_train_fraction = cfg.get_double("data", "train_fraction", 0.7);
  d.hhar_samples_per_user =
      static_cast<std::size_t>(cfg.get_uint("data", "samples_per_user", 1000));
  d.subsample_seed = cfg.get_uint("data", "subsample_seed", 0);
  return d;
}

// Input shape always comes from the cached windows, not the config, so the
// model agrees with whatever the prepare stage produced.
ArchitectureConfig architecture(const Config& cfg, const LabeledDataset& train) {
  ArchitectureConfig a;
  a.input_channels = train.windows.front().channels();
  a.input_length = train.windows.front().timesteps();
  if (cfg.has("model", "base_filters")) {
    a.base_filters.clear();
    for (std::uint64_t v : cfg.get_uint_list("model", "base_filters")) {
      a.base_filters.push_back(static_cast<std::size_t>(v));
    }
  }
  if (cfg.has("model", "kernel_widths")) {
    a.kernel_widths.clear();
    for (std::uint64_t v : cfg.get_uint_list("model", "kernel_widths")) {
      a.kernel_widths.push_back(static_cast<std::size_t>(v));
    }
  }
  a.hidden_units =
      static_cast<std::size_t>(cfg.get_uint("model", "hidden_units", a.hidden_units));
  a.dropout = cfg.get_double("model", "dropout", a.dropout);
  return a;
}

TrainConfig train_config(const Config& cfg, const std::string& section,
                         std::uint64_t seed) {
  TrainConfig t;
  t.epochs = static_cast<std::size_t>(cfg.get_uint(section, "epochs", t.epochs));
  t.batch_size =
      static_cast<std::size_t>(cfg.get_uint(section, "batch_size", t.batch_size));
  t.learning_rate = cfg.get_double(section, "learning_rate", t.learning_rate);
  t.patience = static_cast<std::size_t>(cfg.get_uint(section, "patience", t.patience));
  t.seed = seed;
  return t;
}

DistillConfig distill_config(const Config& cfg, std::uint64_t rep_seed) {
  DistillConfig d;
  d.schedule.initial_temperature =
      cfg.get_double("distill", "temperature_initial", d.schedule.initial_temperature);
  d.schedule.rate = cfg.get_double("distill", "temperature_rate", d.schedule.rate);
  d.schedule.max_temperature =
      cfg.get_double("distill", "temperature_max", d.schedule.max_temperature);
  d.combos.weight = cfg.get_double("distill", "combo_weight", d.combos.weight);
  d.combos.max_combos =
      static_cast<std::size_t>(cfg.get_uint("distill", "combo_max", d.combos.max_combos));
  d.combos.rate = cfg.get_double("distill", "combo_rate", d.combos.rate);
  d.use_transforms = cfg.get_bool("distill", "use_transforms", d.use_transforms);
  d.use_combos = cfg.get_bool("distill", "use_combos", d.use_combos);
  d.freeze_layers =
      static_cast<std::size_t>(cfg.get_uint("distill", "freeze_layers", d.freeze_layers));
  d.epochs = static_cast<std::size_t>(cfg.get_uint("distill", "epochs", d.epochs));
  d.batch_size =
      static_cast<std::size_t>(cfg.get_uint("distill", "batch_size", d.batch_size));
  d.learning_rate = cfg.get_double("distill", "learning_rate", d.learning_rate);
  d.seed = derive_seed(rep_seed, "distill");
  return d;
}

// The unlabeled pool is the cached train split with labels stripped,
// optionally capped by a seeded subsample (cap 0 keeps everything).
UnlabeledDataset unlabeled_pool(const LabeledDataset& train, std::size_t cap,
                                Rng rng) {
  UnlabeledDataset u;
  if (cap == 0 || train.size() <= cap) {
    u.windows = train.windows;
    u.participant_ids = train.participant_ids;
    return u;
  }
  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  rng.shuffle(idx);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  u.windows.reserve(cap);
  u.participant_ids.reserve(cap);
  for (std::size_t i : idx) {
    u.windows.push_back(train.windows[i]);
    u.participant_ids.push_back(train.participant_ids[i]);
  }
  return u;
}

// ---- stages -------------------------------------------------------------------

StageResult stage_prepare(const Config& cfg, const RunPaths& paths) {
  LoadedCorpus corpus = load_dataset(dataset_descriptor(cfg));
  const std::size_t accel_channels =
      std::min<std::size_t>(3, corpus.train.windows.front().channels());
  const NormalizationStats stats =
      compute_normalization(corpus.train.windows, accel_channels);
  apply_normalization(corpus.train.windows, stats);
  apply_normalization(corpus.validation.windows, stats);

  fs::create_directories(paths.data_dir());
  save_dataset_cache(corpus.train, paths.train_cache());
  save_dataset_cache(corpus.validation, paths.validation_cache());

  nlohmann::json meta;
  meta["dataset"] = corpus.name;
  meta["label_space"] = corpus.train.label_space;
  meta["train_windows"] = corpus.train.size();
  meta["validation_windows"] = corpus.validation.size();
  meta["channels"] = corpus.train.windows.front().channels();
  meta["window_length"] = corpus.train.windows.front().timesteps();
  meta["sample_rate_hz"] = corpus.train.windows.front().sample_rate_hz;
  meta["accel_channels"] = accel_channels;
  meta["accel_scale"] = stats.accel_scale;
  meta["gyro_scale"] = stats.gyro_scale;
  write_atomic(paths.meta(), meta.dump(2) + "\n");

  return {StageStatus::completed,
          "cached " + std::to_string(corpus.train.size()) + " train / " +
              std::to_string(corpus.validation.size()) + " validation windows (" +
              corpus.name + ")"};
}

StageResult stage_pretext(const Config& cfg, const RunPaths& paths) {
  const LabeledDataset train = load_dataset_cache(paths.train_cache());
  const ArchitectureConfig arch = architecture(cfg, train);
  const TransformParams tparams;
  const std::size_t pool_cap =
      static_cast<std::size_t>(cfg.get_uint("pretext", "pool_cap", 0));
  const std::vector<std::uint64_t> seeds = rep_seeds(cfg);

  for (std::uint64_t rep : seeds) {
    fs::create_directories(paths.rep_dir(rep));
    const UnlabeledDataset d_u =
        unlabeled_pool(train, pool_cap, Rng(rep).split("pretext_pool"));
    const TrainConfig tc = train_config(cfg, "pretext", derive_seed(rep, "pretext_base"));
    const PretextTrainResult res = train_pretext(d_u, arch, 1.0, tparams, tc);
    save_model(res.model, paths.pretext_model(rep));

    std::string log = "epoch,train_loss,holdout_loss\n";
    for (std::size_t e = 0; e < res.train_curve.size(); ++e) {
      log += std::to_string(e) + ',' + format_double(res.train_curve[e]) + ',' +
             format_double(res.holdout_curve[e]) + '\n';
    }
    write_atomic(paths.pretext_log(rep), log);
  }
  return {StageStatus::completed,
          "trained " + std::to_string(seeds.size()) + " pretext base(s)"};
}

StageResult stage_ensemble(const Config& cfg, const RunPaths& paths,
                           const std::string& hash) {
  const LabeledDataset train = load_dataset_cache(paths.train_cache());
  const ArchitectureConfig arch = architecture(cfg, train);
  const TransformParams tparams;
  const std::size_t labeled_per_class =
      static_cast<std::size_t>(cfg.get_uint("data", "labeled_per_class", 50));
  const std::size_t pool_cap =
      static_cast<std::size_t>(cfg.get_uint("pretext", "pool_cap", 0));
  const std::size_t members =
      static_cast<std::size_t>(cfg.get_uint("ensemble", "members", 5));
  const std::size_t freeze =
      static_cast<std::size_t>(cfg.get_uint("supervised", "freeze_layers", 2));
  const std::vector<std::uint64_t> seeds = rep_seeds(cfg);

  for (std::uint64_t rep : seeds) {
    fs::create_directories(paths.rep_dir(rep));
    const LabeledDataset d_l = sample_labeled_subset(
        train, labeled_per_class, derive_seed(rep, "labeled_subset"));
    const UnlabeledDataset d_u =
        unlabeled_pool(train, pool_cap, Rng(rep).split("member_pool"));
    const TrainConfig pre = train_config(cfg, "pretext", 0);
    TrainConfig sup = train_config(cfg, "supervised", 0);
    sup.per_class_budget = labeled_per_class;

    EnsembleConfig ec;
    ec.members = members;
    ec.width_lo = cfg.get_double("ensemble", "width_lo", ec.width_lo);
    ec.width_hi = cfg.get_double("ensemble", "width_hi", ec.width_hi);
    ec.seeds.clear();
    for (std::size_t i = 0; i < members; ++i) {
      ec.seeds.push_back(derive_seed(rep, "member", i));
    }
    const EnsembleTrainResult ens =
        train_ensemble(d_u, d_l, arch, ec, tparams, pre, sup, freeze);
    save_ensemble(paths.ensemble_dir(rep), ens, hash);

    // The single-model baseline is a one-member ensemble pinned to the
    // canonical width, so it is capacity-matched with the distilled model.
    EnsembleConfig sc = ec;
    sc.members = 1;
    sc.width_lo = 1.0;
    sc.width_hi = 1.0;
    sc.seeds = {derive_seed(rep, "single")};
    const EnsembleTrainResult single =
        train_ensemble(d_u, d_l, arch, sc, tparams, pre, sup, freeze);
    save_ensemble(paths.single_dir(rep), single, hash);
  }
  return {StageStatus::completed,
          "trained " + std::to_string(members) + "-member ensemble + single baseline for " +
              std::to_string(seeds.size()) + " repetition(s)"};
}

StageResult stage_distill(const Config& cfg, const RunPaths& paths) {
  const LabeledDataset train = load_dataset_cache(paths.train_cache());
  const std::size_t pool_cap =
      static_cast<std::size_t>(cfg.get_uint("distill", "pool_cap", 0));
  const std::vector<std::uint64_t> seeds = rep_seeds(cfg);

  for (std::uint64_t rep : seeds) {
    const EnsembleTrainResult ens = load_ensemble(paths.ensemble_dir(rep));
    const ModelParameters base = load_model(paths.pretext_model(rep));
    const UnlabeledDataset d_u =
        unlabeled_pool(train, pool_cap, Rng(rep).split("distill_pool"));
    const DistillConfig dc = distill_config(cfg, rep);

    std::string log = "epoch,temperature,combo_depth,combo_samples,mean_nll\n";
    const DistillResult res =
        distill(ens.members, d_u, &base, dc, [&log](const DistillLogRow& row) {
          log += std::to_string(row.epoch) + ',' + format_double(row.temperature) +
                 ',' + std::to_string(row.combo_depth) + ',' +
                 std::to_string(row.combo_samples) + ',' +
                 format_double(row.mean_nll) + '\n';
        });
    save_model(res.model, paths.distilled_model(rep));
    write_atomic(paths.distill_log(rep), log);
  }
  return {StageStatus::completed,
          "distilled " + std::to_string(seeds.size()) + " prior network(s)"};
}

EvalRecord make_record(const std::string& model, double eps,
                       const std::vector<std::size_t>& preds,
                       const std::vector<double>& scores,
                       const std::vector<std::size_t>& labels) {
  EvalRecord r;
  r.model = model;
  r.epsilon = eps;
  r.overall_accuracy = accuracy(preds, labels);
  r.quantiles = {0.25, 0.5, 0.75, 1.0};
  std::vector<bool> correct(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) correct[i] = preds[i] == labels[i];
  r.quantile_accuracies = quantile_accuracy(scores, correct, r.quantiles);
  try {
    r.auc = auc_roc(scores, correct);
    r.auc_valid = true;
  } catch (const std::invalid_argument&) {
    r.auc = 0.0;  // all-correct or all-incorrect: no ranking to measure
    r.auc_valid = false;
  }
  return r;
}

StageResult stage_evaluate(const Config& cfg, const RunPaths& paths,
                           const std::string& hash) {
  const LabeledDataset validation = load_dataset_cache(paths.validation_cache());
  std::vector<double> eps_list = {0.0, 0.1};
  if (cfg.has("adversarial", "eps_list")) {
    eps_list = cfg.get_double_list("adversarial", "eps_list");
  }
  if (eps_list.empty()) {
    throw ConfigError("config: adversarial.eps_list must name at least one value");
  }
  for (double eps : eps_list) {
    if (!(eps >= 0.0)) {
      throw ConfigError("config: adversarial.eps_list values must be >= 0 (got " +
                        format_double(eps) + ")");
    }
  }
  const std::size_t attack_batch =
      static_cast<std::size_t>(cfg.get_uint("adversarial", "attack_batch", 128));
  const std::size_t eval_batch =
      static_cast<std::size_t>(cfg.get_uint("evaluate", "batch", 256));
  const std::string dataset_name = cfg.get_string("data", "name");
  const std::vector<std::uint64_t> seeds = rep_seeds(cfg);

  for (std::uint64_t rep : seeds) {
    const EnsembleTrainResult single = load_ensemble(paths.single_dir(rep));
    const EnsembleTrainResult ens = load_ensemble(paths.ensemble_dir(rep));
    const ModelParameters distilled = load_model(paths.distilled_model(rep));
    const ModelParameters& single_model = single.members.front();

    // Point predictions and total-uncertainty scores for one input batch.
    using BatchFn = std::function<void(const Tensor&, std::vector<std::size_t>&,
                                       std::vector<double>&)>;
    struct Entry {
      std::string name;
      PointPredictionGraph graph;
      BatchFn process;
    };
    std::vector<Entry> entries;
    entries.push_back(
        {"single", single_model_attack_graph(single_model),
         [&single_model](const Tensor& x, std::vector<std::size_t>& preds,
                         std::vector<double>& scores) {
           const Tensor probs = forward_classifier(single_model, x);
           for (std::size_t p : argmax_rows(probs)) preds.push_back(p);
           for (double s : single_model_scores(probs)) scores.push_back(s);
         }});
    entries.push_back(
        {"ensemble", ensemble_attack_graph(ens.members),
         [&ens](const Tensor& x, std::vector<std::size_t>& preds,
                std::vector<double>& scores) {
           const Tensor member_probs = ensemble_predict(ens.members, x);
           const Tensor mean = ensemble_mean(member_probs);
           for (std::size_t p : argmax_rows(mean)) preds.push_back(p);
           for (double s : ensemble_scores(member_probs)) scores.push_back(s);
         }});
    entries.push_back(
        {"distilled", distilled_attack_graph(distilled),
         [&distilled](const Tensor& x, std::vector<std::size_t>& preds,
                      std::vector<double>& scores) {
           const Tensor alpha = forward_dirichlet_alpha(distilled, x, 1.0);
           const Tensor mean = dirichlet_mean(alpha);
           for (std::size_t p : argmax_rows(mean)) preds.push_back(p);
           for (double s : dirichlet_scores(alpha)) scores.push_back(s);
         }});

    EvalReport report;
    report.dataset = dataset_name;
    report.config_hash = hash;
    report.seed = rep;

    for (const Entry& entry : entries) {
      for (double eps : eps_list) {
        FgsmConfig fc;
        fc.epsilon = eps;
        const LabeledDataset adv =
            perturb_dataset(entry.graph, validation, fc, attack_batch);
        std::vector<std::size_t> preds;
        std::vector<double> scores;
        preds.reserve(adv.size());
        scores.reserve(adv.size());
        for (std::size_t begin = 0; begin < adv.size(); begin += eval_batch) {
          const std::size_t end = std::min(begin + eval_batch, adv.size());
          std::vector<std::size_t> idx(end - begin);
          for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
          const Tensor x = stack_windows(adv.windows, idx);
          entry.process(x, preds, scores);
        }
        report.records.push_back(
            make_record(entry.name, eps, preds, scores, adv.labels));
      }
    }

    write_atomic(paths.eval_json(rep), report.to_json());
    write_atomic(paths.eval_csv(rep), report.to_csv());
  }
  return {StageStatus::completed,
          "evaluated " + std::to_string(seeds.size()) + " repetition(s) at " +
              std::to_string(eps_list.size()) + " epsilon value(s)"};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1). Fewer than two values: 0 by convention.
double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

StageResult stage_report(const Config& cfg, const RunPaths& paths,
                         const std::string& hash) {
  const std::vector<std::uint64_t> seeds = rep_seeds(cfg);

  struct Cell {
    std::vector<double> quantiles;
    std::vector<std::vector<double>> quantile_acc;  // [quantile][repetition]
    std::vector<double> overall;
    std::vector<double> auc;  // valid repetitions only
  };
  std::map<std::string, std::map<double, Cell>> cells;

  for (std::uint64_t rep : seeds) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text(paths.eval_json(rep)));
    } catch (const nlohmann::json::parse_error&) {
      fail("pipeline: malformed evaluation report '" + paths.eval_json(rep) + "'");
    }
    for (const nlohmann::json& rec : j.at("records")) {
      Cell& c = cells[rec.at("model").get<std::string>()]
                     [rec.at("epsilon").get<double>()];
      const auto qs = rec.at("quantiles").get<std::vector<double>>();
      if (c.quantiles.empty()) {
        c.quantiles = qs;
        c.quantile_acc.resize(qs.size());
      } else if (c.quantiles != qs) {
        fail("pipeline: repetitions disagree on quantiles in '" +
             paths.eval_json(rep) + "'");
      }
      const auto qa = rec.at("quantile_accuracies").get<std::vector<double>>();
      for (std::size_t i = 0; i < qa.size(); ++i) c.quantile_acc[i].push_back(qa[i]);
      c.overall.push_back(rec.at("overall_accuracy").get<double>());
      if (!rec.at("auc").is_null()) c.auc.push_back(rec.at("auc").get<double>());
    }
  }

  nlohmann::json out;
  out["dataset"] = cfg.get_string("data", "name");
  out["config_hash"] = hash;
  out["repetitions"] = seeds.size();
  out["seeds"] = seeds;
  nlohmann::json models = nlohmann::json::object();
  std::string csv =
      "model,epsilon,quantile,quantile_accuracy_mean,quantile_accuracy_stddev,"
      "overall_accuracy_mean,overall_accuracy_stddev,auc_mean,auc_stddev,"
      "auc_repetitions\n";

  for (const auto& [model, by_eps] : cells) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [eps, cell] : by_eps) {
      nlohmann::json e;
      e["overall_accuracy"] = {{"mean", mean_of(cell.overall)},
                               {"stddev", stddev_of(cell.overall)}};
      if (cell.auc.empty()) {
        e["auc"] = nullptr;
      } else {
        e["auc"] = {{"mean", mean_of(cell.auc)},
                    {"stddev", stddev_of(cell.auc)},
                    {"valid_repetitions", cell.auc.size()}};
      }
      nlohmann::json q = nlohmann::json::object();
      for (std::size_t i = 0; i < cell.quantiles.size(); ++i) {
        q[format_double(cell.quantiles[i])] = {
            {"mean", mean_of(cell.quantile_acc[i])},
            {"stddev", stddev_of(cell.quantile_acc[i])}};
      }
      e["quantile_accuracy"] = q;
      m[format_double(eps)] = e;

      const std::string auc_mean =
          cell.auc.empty() ? "NA" : format_double(mean_of(cell.auc));
      const std::string auc_sd =
          cell.auc.empty() ? "NA" : format_double(stddev_of(cell.auc));
      for (std::size_t i = 0; i < cell.quantiles.size(); ++i) {
        csv += model + ',' + format_double(eps) + ',' +
               format_double(cell.quantiles[i]) + ',' +
               format_double(mean_of(cell.quantile_acc[i])) + ',' +
               format_double(stddev_of(cell.quantile_acc[i])) + ',' +
               format_double(mean_of(cell.overall)) + ',' +
               format_double(stddev_of(cell.overall)) + ',' + auc_mean + ',' +
               auc_sd + ',' + std::to_string(cell.auc.size()) + '\n';
      }
    }
    models[model] = m;
  }
  out["models"] = models;

  write_atomic(paths.report_json(), out.dump(2) + "\n");
  write_atomic(paths.report_csv(), csv);
  return {StageStatus::completed,
          "aggregated " + std::to_string(seeds.size()) +
              " repetition(s) into report.json / report.csv"};
}

const std::map<std::string, std::vector<std::string>>& stage_dependencies() {
  static const std::map<std::string, std::vector<std::string>> deps = {
      {"prepare", {}},
      {"pretext", {"prepare"}},
      {"ensemble", {"prepare"}},
      {"distill", {"prepare", "pretext", "ensemble"}},
      {"evaluate", {"prepare", "ensemble", "distill"}},
      {"report", {"evaluate"}},
  };
  return deps;
}

}  // namespace

const std::vector<std::string>& pipeline_stages() {
  static const std::vector<std::string> stages = {
      "prepare", "pretext", "ensemble", "distill", "evaluate", "report"};
  return stages;
}

std::string default_config_text() {
  return R"(# Complete default configuration: a self-contained synthetic-data run.
# Every key the pipeline reads appears here with its default value.

[data]
name = synthetic
# root locates the on-disk corpora (hhar, uci_har, motionsense, pamap2);
# the synthetic dataset ignores it.
root =
window_length = 32
window_overlap = 0.5
classes = 3
channels = 6
participants = 10
windows_per_class_per_participant = 100
noise = 1.0
seed = 7
train_fraction = 0.7
labeled_per_class = 10
samples_per_user = 1000
subsample_seed = 11

[model]
base_filters = 16,24,32
kernel_widths = 9,7,5
hidden_units = 64
dropout = 0.1

[pretext]
epochs = 8
batch_size = 64
learning_rate = 0.001
patience = 3
pool_cap = 600

[supervised]
epochs = 30
batch_size = 32
learning_rate = 0.001
patience = 5
freeze_layers = 2

[ensemble]
members = 5
width_lo = 0.75
width_hi = 1.25

[distill]
epochs = 60
batch_size = 64
learning_rate = 0.001
temperature_initial = 2.0
temperature_rate = 0.1
temperature_max = 2.0
combo_weight = 0.5
combo_rate = 0.1
combo_max = 3
use_transforms = true
use_combos = true
freeze_layers = 2
pool_cap = 0

[adversarial]
eps_list = 0.0,0.1
attack_batch = 128

[evaluate]
batch = 256

[run]
seeds = 1,2,3,4,5,6,7,8,9,10
)";
}

StageResult run_stage(const std::string& stage, const Config& cfg,
                      const std::string& run_dir) {
  const auto& deps = stage_dependencies();
  const auto it = deps.find(stage);
  if (it == deps.end()) {
    std::string names;
    for (const std::string& s : pipeline_stages()) {
      if (!names.empty()) names += '|';
      names += s;
    }
    throw ConfigError("pipeline: unknown stage '" + stage + "' (expected " + names +
                      ")");
  }

  const RunPaths paths(run_dir);
  fs::create_directories(paths.root);
  nlohmann::json manifest = load_manifest(paths);
  const std::string hash = cfg.hash();

  if (stage_current(manifest, stage, hash)) {
    return {StageStatus::skipped,
            "stage '" + stage + "' is already complete for config " + hash};
  }
  for (const std::string& dep : it->second) {
    const auto entry = manifest.find(dep);
    if (entry == manifest.end() || !entry->is_object() ||
        !entry->contains("config_hash")) {
      throw PrerequisiteError("stage '" + stage + "' requires stage '" + dep +
                              "'; run stage '" + dep + "' first");
    }
    if (!stage_current(manifest, dep, hash)) {
      throw PrerequisiteError(
          "stage '" + stage + "' requires stage '" + dep + "' for config " + hash +
          "; rerun stage '" + dep + "' (its artifacts were built under config " +
          (*entry)["config_hash"].get<std::string>() + ")");
    }
  }

  StageResult result;
  if (stage == "prepare") {
    result = stage_prepare(cfg, paths);
  } else if (stage == "pretext") {
    result = stage_pretext(cfg, paths);
  } else if (stage == "ensemble") {
    result = stage_ensemble(cfg, paths, hash);
  } else if (stage == "distill") {
    result = stage_distill(cfg, paths);
  } else if (stage == "evaluate") {
    result = stage_evaluate(cfg, paths, hash);
  } else {
    result = stage_report(cfg, paths, hash);
  }

  // Artifacts first, manifest entry last: a crash mid-stage leaves the
  // manifest untouched and the stage simply runs again.
  manifest[stage] = {{"config_hash", hash}, {"completed_at", utc_now()}};
  write_atomic(paths.manifest(), manifest.dump(2) + "\n");
  return result;
}

}  // namespace edd
