#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace edd {

class Rng;

// Dense row-major tensor of 64-bit reals. Rank 1-3 is what the models use.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);
  Tensor(std::vector<std::size_t> s, std::vector<double> v);

  static Tensor scalar(double v);
  static Tensor row(std::vector<double> v);

  std::size_t numel() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at2(std::size_t i, std::size_t j) { return values[i * shape[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return values[i * shape[1] + j]; }
  double& at3(std::size_t i, std::size_t j, std::size_t k) {
    return values[(i * shape[1] + j) * shape[2] + k];
  }
  double at3(std::size_t i, std::size_t j, std::size_t k) const {
    return values[(i * shape[1] + j) * shape[2] + k];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// Thrown by primitives on shape violations; the message names the
// primitive and both shapes involved.
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using VarId = std::size_t;

// Records primitive applications for reverse-mode differentiation.
// Replaying backward visits each recorded operation exactly once in
// reverse order of creation (a reverse topological order, since inputs
// always precede their consumers).
class Tape {
public:
  enum class Mode { train, inference };

  explicit Tape(Mode mode = Mode::train) : mode_(mode) {}

  VarId leaf(Tensor value, bool needs_grad = false);

  // References stay valid as later operations are recorded (node storage
  // never relocates), but backward() destroys them along with the tape.
  const Tensor& value(VarId id) const { return nodes_[id].value; }
  bool needs_grad(VarId id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool recording() const { return mode_ == Mode::train; }

  // --- primitives -----------------------------------------------------
  // x: (B, C, T), w: (F, C, K), b: (F) -> (B, F, T_out)
  VarId conv1d(VarId x, VarId w, VarId b, std::size_t stride = 1);
  // x: (B, N), w: (M, N), b: (M) -> (B, M)
  VarId affine(VarId x, VarId w, VarId b);
  VarId relu(VarId x);
  // Inverted dropout; train-mode only, mask drawn from rng.
  VarId dropout(VarId x, double p, Rng& rng);
  // x: (B, C, T) -> (B, C), max over the time axis
  VarId max_pool_time(VarId x);
  // Softmax over the last dimension at the given temperature.
  VarId softmax(VarId x, double temperature = 1.0);
  VarId sigmoid(VarId x);
  VarId exp(VarId x);
  VarId log(VarId x);
  VarId neg(VarId x);
  VarId add(VarId a, VarId b);
  VarId sub(VarId a, VarId b);
  VarId mul(VarId a, VarId b);
  VarId scale(VarId x, double c);
  VarId shift(VarId x, double c);
  VarId clamp(VarId x, double lo, double hi);
  VarId lgamma(VarId x);
  // x: (..., C) -> (...), sum over the last dimension
  VarId row_sum(VarId x);
  // x: (B, F), rows: indices into B -> (n, F)
  VarId gather_rows(VarId x, const std::vector<std::size_t>& rows);
  VarId sum(VarId x);
  VarId mean(VarId x);

  // Reverse pass from a scalar loss. Returns the gradient of every
  // grad-enabled leaf (zeros for leaves the loss does not reach) and
  // clears the tape; all VarIds are invalidated.
  std::unordered_map<VarId, Tensor> backward(VarId loss);

private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool needs_grad = false;
    bool is_leaf = false;
    std::function<void(Tape&, VarId)> back;  // second arg: the node's own id
  };

  std::deque<Node> nodes_;  // deque: stable references across emissions
  Mode mode_;

  VarId emit(Tensor value, std::initializer_list<VarId> parents,
             std::function<void(Tape&, VarId)> back);
  Tensor& grad_buf(VarId id);
  bool has_grad(VarId id) const { return !nodes_[id].grad.values.empty(); }
  friend struct TapeAccess;
};

}  // namespace edd
