#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "edd/data.hpp"
#include "edd/models.hpp"
#include "edd/tensor.hpp"
#include "edd/transforms.hpp"

namespace edd {

// Temperature annealing: t(e) = clamp(t0 - rate * e, 1, max). Epochs are
// 0-based, so epoch 0 sees the initial temperature.
struct AnnealSchedule {
  double initial_temperature = 10.0;  // t0 >= 1
  double rate = 0.25;                 // >= 0
  double max_temperature = 10.0;      // >= 1

  void validate() const;  // throws std::invalid_argument
};

double temperature_at(const AnnealSchedule& s, std::size_t epoch);

// Combo-depth growth: C(e) = min(floor(rate * e), max_combos). Depth 0 means
// a sample is used as-is (no augmentation); epoch 0 always gives depth 0.
struct ComboConfig {
  double weight = 0.5;         // r in (0, 1]
  std::size_t max_combos = 4;  // N_C >= 1
  double rate = 0.05;          // v_C >= 0

  void validate() const;  // throws std::invalid_argument
};

std::size_t combo_depth_at(const ComboConfig& c, std::size_t epoch);

// Geometric-weight average y = sum_i r^i x_i / sum_i r^i (i from 0). All
// windows must share one shape; N = 1 returns x_0 unchanged.
SensorWindow weighted_combo(const std::vector<const SensorWindow*>& xs, double r);

// Floors every probability at `floor` and renormalizes each row (last axis).
Tensor floor_probabilities(const Tensor& probs, double floor = 1e-6);

// p -> p^(1/t), renormalized per row. t = 1 returns the input unchanged.
Tensor temper_probabilities(const Tensor& probs, double temperature);

// Mean over the batch and over ensemble members of -ln Dir(pi_m; alpha),
// with ln Dir(pi; alpha) = lnGamma(S) - sum_i lnGamma(alpha_i)
//                          + sum_i (alpha_i - 1) ln pi_i,   S = sum_i alpha_i.
// alpha: (B, K); targets: (B, M, K), already floored/tempered as desired.
// Throws std::runtime_error naming the sample on non-finite intermediates.
double dirichlet_nll_value(const Tensor& alpha, const Tensor& targets);

// Same quantity as a differentiable graph over alpha (targets are constants).
VarId dirichlet_nll_graph(Tape& tape, VarId alpha, const Tensor& targets);

// Convenience: floors targets at 1e-6, tempers them by 1/t, then evaluates.
double dirichlet_nll(const Tensor& alpha, const Tensor& targets,
                     double target_temperature);

struct DistillConfig {
  AnnealSchedule schedule;
  ComboConfig combos;
  TransformParams transform_params;
  bool use_transforms = true;  // augment D_U with the 8 transforms
  bool use_combos = true;      // weighted-combination augmentation
  std::size_t freeze_layers = 0;
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double width_multiplier = 1.0;  // same architecture as a width-1 member
  std::uint64_t seed = 0;
};

struct DistillLogRow {
  std::size_t epoch = 0;
  double temperature = 1.0;
  std::size_t combo_depth = 0;
  std::size_t combo_samples = 0;  // samples replaced by combos this epoch
  double mean_nll = 0.0;
};

struct DistillResult {
  ModelParameters model;  // evaluate with forward_dirichlet_alpha(..., 1.0)
  std::vector<DistillLogRow> log;
};

// The full distillation loop: builds the augmented pool (originals + all
// transforms when enabled), optionally initializes from a pretrained base
// (first freeze_layers conv layers frozen), and per epoch anneals the
// temperature, grows the combo depth, replaces each sample by a weighted
// combo with n ~ Uniform{0..C} extra pool draws, and descends the NLL
// against the frozen ensemble's tempered outputs.
//
// on_epoch (may be null) receives each log row as soon as the epoch ends,
// before any divergence error is raised, so logs survive failed runs.
DistillResult distill(const std::vector<ModelParameters>& ensemble,
                      const UnlabeledDataset& d_u,
                      const ModelParameters* pretrained_base,
                      const DistillConfig& cfg,
                      const std::function<void(const DistillLogRow&)>& on_epoch = {});

}  // namespace edd
