#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "edd/rng.hpp"
#include "edd/tensor.hpp"

namespace edd {

struct ArchitectureConfig {
  std::size_t input_channels = 6;
  std::size_t input_length = 128;
  std::vector<std::size_t> base_filters = {32, 64, 96};  // scaled by r, ceiling
  std::vector<std::size_t> kernel_widths = {24, 16, 8};
  std::size_t hidden_units = 256;
  double dropout = 0.1;

  std::size_t receptive_field() const;
};

struct Layer {
  enum class Kind { conv, dense };
  Kind kind = Kind::dense;
  std::string name;
  Tensor weight;
  Tensor bias;
  bool frozen = false;
};

// A convolutional base plus any number of two-layer dense heads. Classifier
// and Dirichlet models carry one head; the pretext model carries eight.
struct ModelParameters {
  ArchitectureConfig arch;
  double width_multiplier = 1.0;
  std::vector<Layer> conv;  // one entry per conv block, ReLU + dropout follow each

  struct Head {
    Layer hidden;  // pooled features -> hidden_units, ReLU
    Layer out;     // hidden_units -> task outputs
  };
  std::vector<Head> heads;

  // Name/tensor view over every parameter, e.g. "conv0.weight", "head1.out.bias".
  std::vector<std::pair<std::string, Tensor*>> named_parameters();
  std::vector<std::pair<std::string, const Tensor*>> named_parameters() const;
  std::vector<std::string> frozen_names() const;
};

// Builds the convolutional base with filter counts ceil(r * base_filters),
// truncated-normal fan-in initialization, no heads yet. Throws if the input
// is shorter than the receptive field or r produces an invalid width.
ModelParameters build_base(const ArchitectureConfig& arch, double width_multiplier,
                           Rng& rng);

// Appends one head with `outputs` output units.
void add_head(ModelParameters& m, std::size_t outputs, Rng& rng);

// Copies base weights from src into dst and marks the first freeze_layers conv
// layers frozen. Architectures must match exactly.
void transfer_base(const ModelParameters& src, ModelParameters& dst,
                   std::size_t freeze_layers);

// --- graph building ----------------------------------------------------------

// Tape leaves for every parameter of a model, keyed by parameter name.
// Trainable parameters get gradients unless frozen; with trainable = false
// the whole model is treated as constant (e.g. when attacking inputs).
struct BoundModel {
  const ModelParameters* model = nullptr;
  std::unordered_map<std::string, VarId> ids;

  VarId id(const std::string& name) const;
};

BoundModel bind_model(Tape& tape, const ModelParameters& m, bool trainable);

// Pooled feature vector (B, last_filters). dropout_rng enables the per-block
// dropout; pass nullptr for deterministic inference.
VarId forward_base(Tape& tape, const BoundModel& bm, VarId x, Rng* dropout_rng);

// Logits of one head applied to pooled features.
VarId forward_head_logits(Tape& tape, const BoundModel& bm, std::size_t head,
                          VarId features, Rng* dropout_rng);

// Full classifier graph: softmax probabilities (B, K) of head 0.
VarId forward_classifier_graph(Tape& tape, const BoundModel& bm, VarId x,
                               Rng* dropout_rng);

// Dirichlet concentration graph: alpha = clamp(exp(logits / T), 1e-6, 1e6).
VarId forward_dirichlet_graph(Tape& tape, const BoundModel& bm, VarId x,
                              double temperature, Rng* dropout_rng);

inline constexpr double kAlphaClampLo = 1e-6;
inline constexpr double kAlphaClampHi = 1e6;

// --- plain-tensor forwards (inference mode, no dropout) -----------------------

// (B, K) rows summing to 1.
Tensor forward_classifier(const ModelParameters& m, const Tensor& x);

// (B, K) concentration parameters.
Tensor forward_dirichlet_alpha(const ModelParameters& m, const Tensor& x,
                               double temperature);

// (B, num_heads) per-task binary probabilities.
Tensor forward_pretext(const ModelParameters& m, const Tensor& x);

// --- checkpointing -------------------------------------------------------------

// Self-describing binary checkpoint (magic, version, architecture descriptor,
// named tensors with freeze flags, RNG state). Round-trips bit-exactly.
void save_model(const ModelParameters& m, const std::string& path,
                std::uint64_t rng_state = 0);
ModelParameters load_model(const std::string& path, std::uint64_t* rng_state = nullptr);

}  // namespace edd
