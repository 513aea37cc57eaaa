#pragma once

#include <functional>
#include <vector>

#include "edd/data.hpp"
#include "edd/models.hpp"
#include "edd/tensor.hpp"

namespace edd {

// Differentiable point-prediction graph: input (B, C, T) -> probabilities
// (B, K). FGSM attacks each model kind white-box through its own graph.
using PointPredictionGraph = std::function<VarId(Tape&, VarId)>;

// Softmax classifier probabilities.
PointPredictionGraph single_model_attack_graph(const ModelParameters& m);

// Member-mean distribution, differentiating through every member jointly —
// the strongest plain-FGSM attacker for the ensemble.
PointPredictionGraph ensemble_attack_graph(const std::vector<ModelParameters>& members);

// Predictive mean of the Dirichlet model at inference temperature 1. Equals
// softmax of the logits wherever the concentration clamp is inactive, which
// avoids a division on the tape.
PointPredictionGraph distilled_attack_graph(const ModelParameters& m);

struct FgsmConfig {
  double epsilon = 0.1;  // >= 0, in standardized input units

  void validate() const;  // throws std::invalid_argument
};

// x' = x + epsilon * sign(grad_x CE(model(x), y)) with sign(0) = 0, so the
// l-infinity distance never exceeds epsilon. epsilon = 0 returns x bitwise.
// Throws std::runtime_error on a non-finite input gradient.
Tensor fgsm_perturb(const PointPredictionGraph& model, const Tensor& x,
                    const std::vector<std::size_t>& labels, const FgsmConfig& cfg);

// Applies the white-box attack to every window, keeping the labels.
LabeledDataset perturb_dataset(const PointPredictionGraph& model,
                               const LabeledDataset& d, const FgsmConfig& cfg,
                               std::size_t batch_size = 64);

}  // namespace edd
