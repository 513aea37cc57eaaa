#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "edd/tensor.hpp"

namespace edd {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with per-parameter first/second moment estimates and bias correction.
// Parameters are owned by the caller and addressed by name; frozen parameters
// are skipped entirely, so their values and moment buffers stay bit-identical.
class Adam {
public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  // Applies one update to every non-frozen parameter. `grads` must contain an
  // entry of matching shape for each of them; extra entries are ignored.
  void step(std::unordered_map<std::string, Tensor>& params,
            const std::unordered_map<std::string, Tensor>& grads,
            const std::vector<std::string>& frozen = {});

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return config_; }

  // Moment access for checkpointing.
  const std::unordered_map<std::string, Tensor>& first_moments() const { return m_; }
  const std::unordered_map<std::string, Tensor>& second_moments() const { return v_; }
  void restore(std::size_t step_count, std::unordered_map<std::string, Tensor> m,
               std::unordered_map<std::string, Tensor> v);

private:
  AdamConfig config_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, Tensor> m_;
  std::unordered_map<std::string, Tensor> v_;
};

}  // namespace edd
