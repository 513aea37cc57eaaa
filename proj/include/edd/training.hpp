#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edd/data.hpp"
#include "edd/models.hpp"
#include "edd/transforms.hpp"

namespace edd {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  std::size_t patience = 5;           // early-stop patience on the held-out slice
  std::size_t per_class_budget = 50;  // labeled instances per class

  void validate() const;  // throws std::invalid_argument
};

struct PretextTrainResult {
  ModelParameters model;  // weights from the epoch with the best held-out loss
  std::vector<double> train_curve;    // mean train loss per epoch
  std::vector<double> holdout_curve;  // held-out loss per epoch
  std::size_t best_epoch = 0;
};

// Joint multi-task pretext training: every step forwards one batch of
// originals together with all eight transformed versions through the shared
// base, and the loss is the mean of the eight per-head binary cross-entropies
// (originals label 0, that head's transforms label 1 — balanced 1:1 by
// construction). Early stopping watches a 10% held-out slice of the originals
// (their transforms held out with them). epochs = 0 returns the initialized
// model unchanged. Throws std::runtime_error naming the epoch on divergence.
PretextTrainResult train_pretext(const UnlabeledDataset& d,
                                 const ArchitectureConfig& arch,
                                 double width_multiplier,
                                 const TransformParams& tparams,
                                 const TrainConfig& cfg);

// Supervised fine-tuning: copies the conv base of `base` into a fresh model
// (first freeze_layers conv layers frozen), adds a K-way head, and minimizes
// the categorical cross-entropy on d. Every class count must respect
// cfg.per_class_budget. Throws on an empty label set or divergence.
ModelParameters train_supervised(const ModelParameters& base, const LabeledDataset& d,
                                 std::size_t freeze_layers, const TrainConfig& cfg);

struct EnsembleConfig {
  std::size_t members = 5;  // M >= 1
  double width_lo = 0.75;   // width multiplier r sampled uniformly per member
  double width_hi = 1.25;
  std::vector<std::uint64_t> seeds;  // one distinct seed per member

  void validate() const;  // throws std::invalid_argument
};

struct EnsembleMemberInfo {
  std::uint64_t seed = 0;
  double width_multiplier = 1.0;
};

struct EnsembleTrainResult {
  std::vector<ModelParameters> members;
  std::vector<EnsembleMemberInfo> info;  // parallel to members
};

// Trains M members, each fully independently: its own width draw, pretext
// run, base transfer, and supervised run, all derived from its own seed only
// (so member results never depend on training order). A diverging member
// fails the whole call with an error naming it.
EnsembleTrainResult train_ensemble(const UnlabeledDataset& d_u,
                                   const LabeledDataset& d_l,
                                   const ArchitectureConfig& arch,
                                   const EnsembleConfig& cfg,
                                   const TransformParams& tparams,
                                   const TrainConfig& pretext_cfg,
                                   const TrainConfig& supervised_cfg,
                                   std::size_t freeze_layers);

// Per sample, the ordered list of member distributions — (B, M, K), never
// averaged, so the diversity survives for distillation. Throws when members
// is empty or their class counts disagree.
Tensor ensemble_predict(const std::vector<ModelParameters>& members, const Tensor& x);

// Member-mean point prediction: (B, M, K) -> (B, K).
Tensor ensemble_mean(const Tensor& member_probs);

// Checkpoint directory: member_NNN.bin per member plus manifest.json holding
// count, seeds, widths, and the run's config hash.
void save_ensemble(const std::string& dir, const EnsembleTrainResult& ensemble,
                   const std::string& config_hash);
EnsembleTrainResult load_ensemble(const std::string& dir);

}  // namespace edd
