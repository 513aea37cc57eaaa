#include "edd/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "edd/optimizer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace edd {

void TrainConfig::validate() const {
  // epochs = 0 is legal (an explicit no-op request); everything else must be
  // positive.
  if (batch_size == 0) throw std::invalid_argument("TrainConfig: batch size must be positive");
  if (!(learning_rate > 0.0)) {
    throw std::invalid_argument("TrainConfig: learning rate must be positive");
  }
  if (patience == 0) throw std::invalid_argument("TrainConfig: patience must be positive");
  if (per_class_budget == 0) {
    throw std::invalid_argument("TrainConfig: per-class budget must be positive");
  }
}

namespace {

constexpr double kProbFloor = 1e-12;

void copy_window_into(Tensor& batch, std::size_t row, const Tensor& window) {
  std::memcpy(batch.values.data() + row * window.numel(), window.values.data(),
              window.numel() * sizeof(double));
}

// One Adam update from a finished tape, mapping gradients back to names.
void apply_step(ModelParameters& model, Adam& opt, const BoundModel& bm,
                std::unordered_map<VarId, Tensor> grads_by_id,
                const std::vector<std::string>& frozen) {
  std::unordered_map<std::string, Tensor> params, grads;
  for (auto& [name, tensor] : model.named_parameters()) params.emplace(name, *tensor);
  for (const auto& [name, id] : bm.ids) {
    if (auto it = grads_by_id.find(id); it != grads_by_id.end()) {
      grads.emplace(name, std::move(it->second));
    }
  }
  opt.step(params, grads, frozen);
  for (auto& [name, tensor] : model.named_parameters()) *tensor = params.at(name);
}

// Mega-batch for the pretext step: the originals first, then each transform
// block, in kind order — 9B rows of (C, T).
Tensor assemble_pretext_batch(const PretextDataset& data,
                              const std::vector<std::size_t>& originals) {
  const std::size_t b = originals.size();
  const SensorWindow& first = data.pool.front();
  Tensor x({b * (1 + kNumTransforms), first.channels(), first.timesteps()});
  for (std::size_t j = 0; j < b; ++j) {
    copy_window_into(x, j, data.pool[data.original_index(originals[j])].values);
  }
  for (std::size_t k = 0; k < kNumTransforms; ++k) {
    for (std::size_t j = 0; j < b; ++j) {
      const std::size_t row = (k + 1) * b + j;
      copy_window_into(
          x, row,
          data.pool[data.transformed_index(transform_from_index(k), originals[j])]
              .values);
    }
  }
  return x;
}

// Held-out pretext loss, computed from plain forwards (no tape): the mean
// over heads of the balanced binary cross-entropy, matching the train loss.
double pretext_holdout_loss(const ModelParameters& model, const PretextDataset& data,
                            const std::vector<std::size_t>& holdout,
                            std::size_t batch_size) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < holdout.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, holdout.size() - start);
    std::vector<std::size_t> chunk(holdout.begin() + start, holdout.begin() + start + b);
    const Tensor x = assemble_pretext_batch(data, chunk);
    const Tensor probs = forward_pretext(model, x);  // (9b, 8)
    double loss = 0.0;
    for (std::size_t k = 0; k < kNumTransforms; ++k) {
      double head = 0.0;
      for (std::size_t j = 0; j < b; ++j) {
        const double p0 = std::clamp(probs.at2(j, k), kProbFloor, 1.0 - kProbFloor);
        const double p1 = std::clamp(probs.at2((k + 1) * b + j, k), kProbFloor,
                                     1.0 - kProbFloor);
        head -= std::log(1.0 - p0);  // original, label 0
        head -= std::log(p1);        // transformed, label 1
      }
      loss += head / static_cast<double>(2 * b);
    }
    total += loss / static_cast<double>(kNumTransforms) * static_cast<double>(b);
    count += b;
  }
  return total / static_cast<double>(count);
}

}  // namespace

PretextTrainResult train_pretext(const UnlabeledDataset& d,
                                 const ArchitectureConfig& arch,
                                 double width_multiplier,
                                 const TransformParams& tparams,
                                 const TrainConfig& cfg) {
  if (d.size() == 0) throw std::invalid_argument("train_pretext: empty dataset");
  d.validate();
  cfg.validate();
  tparams.validate();

  Rng root(cfg.seed);
  Rng init_rng = root.split("init");

  PretextTrainResult result;
  result.model = build_base(arch, width_multiplier, init_rng);
  for (std::size_t k = 0; k < kNumTransforms; ++k) {
    add_head(result.model, 1, init_rng);
  }
  if (cfg.epochs == 0) return result;  // initialized model, unchanged

  const PretextDataset data =
      build_pretext_dataset(d, tparams, root.split("transforms").state());

  // 90/10 original split; each original's transforms follow it, so the
  // held-out slice never leaks into training.
  std::vector<std::size_t> originals(data.num_originals);
  std::iota(originals.begin(), originals.end(), 0);
  Rng split_rng = root.split("holdout");
  split_rng.shuffle(originals);
  std::size_t num_holdout = data.num_originals / 10;
  if (num_holdout == 0 && data.num_originals >= 2) num_holdout = 1;
  std::vector<std::size_t> holdout(originals.begin(), originals.begin() + num_holdout);
  std::vector<std::size_t> train(originals.begin() + num_holdout, originals.end());

  Adam opt(AdamConfig{.learning_rate = cfg.learning_rate});
  const std::vector<std::string> frozen;  // nothing frozen during pretext
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");

  ModelParameters best = result.model;
  double best_loss = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    shuffle_rng.shuffle(train);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < train.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, train.size() - start);
      std::vector<std::size_t> chunk(train.begin() + start, train.begin() + start + b);
      const Tensor x = assemble_pretext_batch(data, chunk);

      Tape tape;
      BoundModel bm = bind_model(tape, result.model, true);
      VarId features = forward_base(tape, bm, tape.leaf(x), &dropout_rng);

      // Per head: its block (label 1) against the originals (label 0).
      Tensor labels({2 * b, 1});
      for (std::size_t j = 0; j < b; ++j) labels.values[b + j] = 1.0;
      Tensor inverse({2 * b, 1}, 1.0);
      for (std::size_t j = 0; j < b; ++j) inverse.values[b + j] = 0.0;
      VarId y = tape.leaf(labels);
      VarId not_y = tape.leaf(inverse);

      VarId total = 0;
      for (std::size_t k = 0; k < kNumTransforms; ++k) {
        std::vector<std::size_t> rows(2 * b);
        for (std::size_t j = 0; j < b; ++j) {
          rows[j] = j;                      // original
          rows[b + j] = (k + 1) * b + j;    // transformed by head k's kind
        }
        VarId feats_k = tape.gather_rows(features, rows);
        VarId p = tape.clamp(
            tape.sigmoid(forward_head_logits(tape, bm, k, feats_k, &dropout_rng)),
            kProbFloor, 1.0 - kProbFloor);
        VarId bce = tape.neg(tape.mean(
            tape.add(tape.mul(y, tape.log(p)),
                     tape.mul(not_y, tape.log(tape.shift(tape.neg(p), 1.0))))));
        total = k == 0 ? bce : tape.add(total, bce);
      }
      VarId loss = tape.scale(total, 1.0 / static_cast<double>(kNumTransforms));
      const double loss_value = tape.value(loss).values[0];
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train_pretext: diverged at epoch " +
                                 std::to_string(e));
      }
      apply_step(result.model, opt, bm, tape.backward(loss), frozen);
      loss_sum += loss_value;
      ++batches;
    }
    result.train_curve.push_back(loss_sum / static_cast<double>(batches));

    if (holdout.empty()) continue;
    const double h =
        pretext_holdout_loss(result.model, data, holdout, cfg.batch_size);
    result.holdout_curve.push_back(h);
    if (!std::isfinite(h)) {
      throw std::runtime_error("train_pretext: diverged at epoch " + std::to_string(e));
    }
    if (h < best_loss) {
      best_loss = h;
      best = result.model;
      result.best_epoch = e;
      since_improvement = 0;
    } else if (++since_improvement >= cfg.patience) {
      break;
    }
  }
  if (!holdout.empty()) result.model = best;
  return result;
}

ModelParameters train_supervised(const ModelParameters& base, const LabeledDataset& d,
                                 std::size_t freeze_layers, const TrainConfig& cfg) {
  if (d.size() == 0) throw std::invalid_argument("train_supervised: empty label set");
  cfg.validate();
  d.validate();
  const std::size_t num_classes = d.num_classes();
  std::vector<std::size_t> class_counts(num_classes, 0);
  for (std::size_t label : d.labels) ++class_counts[label];
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (class_counts[k] > cfg.per_class_budget) {
      throw std::invalid_argument("train_supervised: class " + d.label_space[k] +
                                  " has " + std::to_string(class_counts[k]) +
                                  " instances, over the per-class budget of " +
                                  std::to_string(cfg.per_class_budget));
    }
  }

  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  ModelParameters model = build_base(base.arch, base.width_multiplier, init_rng);
  transfer_base(base, model, freeze_layers);
  add_head(model, num_classes, init_rng);
  const std::vector<std::string> frozen = model.frozen_names();

  Adam opt(AdamConfig{.learning_rate = cfg.learning_rate});
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");

  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t channels = d.windows.front().channels();
  const std::size_t timesteps = d.windows.front().timesteps();

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      Tensor x({b, channels, timesteps});
      Tensor onehot({b, num_classes}, 0.0);
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t idx = order[start + j];
        copy_window_into(x, j, d.windows[idx].values);
        onehot.at2(j, d.labels[idx]) = 1.0;
      }
      Tape tape;
      BoundModel bm = bind_model(tape, model, true);
      VarId probs = forward_classifier_graph(tape, bm, tape.leaf(x), &dropout_rng);
      VarId picked = tape.mul(tape.leaf(onehot), tape.log(tape.clamp(probs, kProbFloor, 1.0)));
      VarId loss = tape.scale(tape.neg(tape.sum(picked)), 1.0 / static_cast<double>(b));
      const double loss_value = tape.value(loss).values[0];
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("train_supervised: diverged at epoch " +
                                 std::to_string(e));
      }
      apply_step(model, opt, bm, tape.backward(loss), frozen);
    }
  }
  return model;
}

void EnsembleConfig::validate() const {
  if (members < 1) throw std::invalid_argument("EnsembleConfig: members must be >= 1");
  if (!(width_lo > 0.0) || !(width_hi >= width_lo)) {
    throw std::invalid_argument("EnsembleConfig: invalid width range");
  }
  if (seeds.size() != members) {
    throw std::invalid_argument("EnsembleConfig: need exactly one seed per member");
  }
  std::unordered_set<std::uint64_t> unique(seeds.begin(), seeds.end());
  if (unique.size() != seeds.size()) {
    throw std::invalid_argument("EnsembleConfig: member seeds must be distinct");
  }
}

EnsembleTrainResult train_ensemble(const UnlabeledDataset& d_u,
                                   const LabeledDataset& d_l,
                                   const ArchitectureConfig& arch,
                                   const EnsembleConfig& cfg,
                                   const TransformParams& tparams,
                                   const TrainConfig& pretext_cfg,
                                   const TrainConfig& supervised_cfg,
                                   std::size_t freeze_layers) {
  cfg.validate();
  EnsembleTrainResult result;
  result.members.reserve(cfg.members);
  result.info.reserve(cfg.members);
  for (std::size_t m = 0; m < cfg.members; ++m) {
    // Everything a member does derives from its own seed alone, so members
    // are independent of each other and of training order.
    Rng member_rng(cfg.seeds[m]);
    const double width = cfg.width_lo == cfg.width_hi
                             ? cfg.width_lo
                             : member_rng.uniform(cfg.width_lo, cfg.width_hi);
    TrainConfig pre = pretext_cfg;
    pre.seed = member_rng.next_u64();
    TrainConfig sup = supervised_cfg;
    sup.seed = member_rng.next_u64();
    try {
      PretextTrainResult pretext = train_pretext(d_u, arch, width, tparams, pre);
      result.members.push_back(
          train_supervised(pretext.model, d_l, freeze_layers, sup));
    } catch (const std::exception& ex) {
      throw std::runtime_error("train_ensemble: member " + std::to_string(m) +
                               " (seed " + std::to_string(cfg.seeds[m]) +
                               ") failed: " + ex.what());
    }
    result.info.push_back({cfg.seeds[m], width});
  }
  return result;
}

Tensor ensemble_predict(const std::vector<ModelParameters>& members, const Tensor& x) {
  if (members.empty()) throw std::invalid_argument("ensemble_predict: no members");
  const std::size_t b = x.dim(0);
  std::size_t num_classes = 0;
  Tensor out;
  for (std::size_t m = 0; m < members.size(); ++m) {
    const Tensor probs = forward_classifier(members[m], x);
    if (m == 0) {
      num_classes = probs.dim(1);
      out = Tensor({b, members.size(), num_classes});
    } else if (probs.dim(1) != num_classes) {
      throw std::invalid_argument("ensemble_predict: member " + std::to_string(m) +
                                  " has " + std::to_string(probs.dim(1)) +
                                  " classes, expected " + std::to_string(num_classes));
    }
    for (std::size_t j = 0; j < b; ++j) {
      for (std::size_t k = 0; k < num_classes; ++k) {
        out.at3(j, m, k) = probs.at2(j, k);
      }
    }
  }
  return out;
}

Tensor ensemble_mean(const Tensor& member_probs) {
  if (member_probs.rank() != 3) {
    throw ShapeError("ensemble_mean: expected (B, M, K), got " +
                     member_probs.shape_str());
  }
  const std::size_t b = member_probs.dim(0);
  const std::size_t m = member_probs.dim(1);
  const std::size_t k = member_probs.dim(2);
  Tensor mean({b, k}, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t c = 0; c < k; ++c) mean.at2(i, c) += member_probs.at3(i, j, c);
    }
    for (std::size_t c = 0; c < k; ++c) mean.at2(i, c) /= static_cast<double>(m);
  }
  return mean;
}

namespace {

std::string member_filename(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "member_%03zu.bin", index);
  return buf;
}

}  // namespace

void save_ensemble(const std::string& dir, const EnsembleTrainResult& ensemble,
                   const std::string& config_hash) {
  if (ensemble.members.size() != ensemble.info.size()) {
    throw std::invalid_argument("save_ensemble: members/info size mismatch");
  }
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["member_count"] = ensemble.members.size();
  manifest["config_hash"] = config_hash;
  manifest["members"] = nlohmann::json::array();
  for (std::size_t m = 0; m < ensemble.members.size(); ++m) {
    const std::string file = member_filename(m);
    save_model(ensemble.members[m], dir + "/" + file, ensemble.info[m].seed);
    nlohmann::json entry;
    entry["file"] = file;
    entry["seed"] = ensemble.info[m].seed;
    entry["width_multiplier"] = ensemble.info[m].width_multiplier;
    manifest["members"].push_back(entry);
  }
  // Manifest last, atomically: a readable manifest implies complete members.
  const std::string tmp = dir + "/manifest.json.tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw std::runtime_error("save_ensemble: cannot write " + tmp);
    out << manifest.dump(2) << '\n';
  }
  fs::rename(tmp, dir + "/manifest.json");
}

EnsembleTrainResult load_ensemble(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json");
  if (!in) {
    throw std::runtime_error("load_ensemble: missing manifest in " + dir);
  }
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& ex) {
    throw std::runtime_error("load_ensemble: bad manifest in " + dir + ": " +
                             ex.what());
  }
  EnsembleTrainResult result;
  const auto& entries = manifest.at("members");
  for (const auto& entry : entries) {
    std::uint64_t stored_seed = 0;
    result.members.push_back(
        load_model(dir + "/" + entry.at("file").get<std::string>(), &stored_seed));
    EnsembleMemberInfo info;
    info.seed = entry.at("seed").get<std::uint64_t>();
    info.width_multiplier = entry.at("width_multiplier").get<double>();
    if (info.seed != stored_seed) {
      throw std::runtime_error("load_ensemble: seed mismatch for " +
                               entry.at("file").get<std::string>());
    }
    result.info.push_back(info);
  }
  if (result.members.size() != manifest.at("member_count").get<std::size_t>()) {
    throw std::runtime_error("load_ensemble: member count mismatch in manifest");
  }
  return result;
}

}  // namespace edd
