#include "edd/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace edd {

void FgsmConfig::validate() const {
  if (!(epsilon >= 0.0)) {
    throw std::invalid_argument("FgsmConfig: epsilon must be non-negative");
  }
}

PointPredictionGraph single_model_attack_graph(const ModelParameters& m) {
  return [&m](Tape& tape, VarId x) {
    BoundModel bm = bind_model(tape, m, false);
    return forward_classifier_graph(tape, bm, x, nullptr);
  };
}

PointPredictionGraph ensemble_attack_graph(const std::vector<ModelParameters>& members) {
  if (members.empty()) {
    throw std::invalid_argument("ensemble_attack_graph: no members");
  }
  return [&members](Tape& tape, VarId x) {
    VarId sum = 0;
    for (std::size_t m = 0; m < members.size(); ++m) {
      BoundModel bm = bind_model(tape, members[m], false);
      VarId probs = forward_classifier_graph(tape, bm, x, nullptr);
      sum = m == 0 ? probs : tape.add(sum, probs);
    }
    return tape.scale(sum, 1.0 / static_cast<double>(members.size()));
  };
}

PointPredictionGraph distilled_attack_graph(const ModelParameters& m) {
  // mu = alpha / S = softmax(z / T) at T = 1 while the clamp is inactive.
  return [&m](Tape& tape, VarId x) {
    BoundModel bm = bind_model(tape, m, false);
    return forward_classifier_graph(tape, bm, x, nullptr);
  };
}

Tensor fgsm_perturb(const PointPredictionGraph& model, const Tensor& x,
                    const std::vector<std::size_t>& labels, const FgsmConfig& cfg) {
  cfg.validate();
  if (x.rank() != 3) {
    throw ShapeError("fgsm_perturb: expected (B, C, T), got " + x.shape_str());
  }
  if (labels.size() != x.dim(0)) {
    throw std::invalid_argument("fgsm_perturb: one label per window required");
  }
  if (cfg.epsilon == 0.0) return x;  // bitwise identity

  Tape tape;  // recording mode; parameters are constants, only x gets a gradient
  VarId xid = tape.leaf(x, true);
  VarId probs = model(tape, xid);
  const Tensor& p = tape.value(probs);
  if (p.rank() != 2 || p.dim(0) != x.dim(0)) {
    throw ShapeError("fgsm_perturb: model graph returned " + p.shape_str());
  }
  const std::size_t num_classes = p.dim(1);
  Tensor onehot({x.dim(0), num_classes}, 0.0);
  for (std::size_t j = 0; j < labels.size(); ++j) {
    if (labels[j] >= num_classes) {
      throw std::invalid_argument("fgsm_perturb: label " + std::to_string(labels[j]) +
                                  " out of range");
    }
    onehot.at2(j, labels[j]) = 1.0;
  }
  VarId picked = tape.mul(tape.leaf(onehot), tape.log(tape.clamp(probs, 1e-12, 1.0)));
  VarId loss =
      tape.scale(tape.neg(tape.sum(picked)), 1.0 / static_cast<double>(x.dim(0)));
  auto grads = tape.backward(loss);
  const Tensor& g = grads.at(xid);
  if (!g.all_finite()) {
    throw std::runtime_error("fgsm_perturb: non-finite input gradient");
  }
  Tensor out = x;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const double gi = g.values[i];
    if (gi > 0.0) {
      out.values[i] += cfg.epsilon;
    } else if (gi < 0.0) {
      out.values[i] -= cfg.epsilon;
    }  // sign(0) = 0: leave the value untouched
  }
  return out;
}

LabeledDataset perturb_dataset(const PointPredictionGraph& model,
                               const LabeledDataset& d, const FgsmConfig& cfg,
                               std::size_t batch_size) {
  cfg.validate();
  if (batch_size == 0) throw std::invalid_argument("perturb_dataset: batch size 0");
  LabeledDataset out = d;
  if (d.size() == 0 || cfg.epsilon == 0.0) return out;
  const std::size_t channels = d.windows.front().channels();
  const std::size_t timesteps = d.windows.front().timesteps();
  for (std::size_t start = 0; start < d.size(); start += batch_size) {
    const std::size_t b = std::min(batch_size, d.size() - start);
    Tensor x({b, channels, timesteps});
    std::vector<std::size_t> labels(b);
    for (std::size_t j = 0; j < b; ++j) {
      std::memcpy(x.values.data() + j * channels * timesteps,
                  d.windows[start + j].values.values.data(),
                  channels * timesteps * sizeof(double));
      labels[j] = d.labels[start + j];
    }
    const Tensor adv = fgsm_perturb(model, x, labels, cfg);
    for (std::size_t j = 0; j < b; ++j) {
      std::memcpy(out.windows[start + j].values.values.data(),
                  adv.values.data() + j * channels * timesteps,
                  channels * timesteps * sizeof(double));
    }
  }
  return out;
}

}  // namespace edd
