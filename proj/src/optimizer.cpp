#include "edd/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace edd {

void Adam::step(std::unordered_map<std::string, Tensor>& params,
                const std::unordered_map<std::string, Tensor>& grads,
                const std::vector<std::string>& frozen) {
  std::unordered_set<std::string> skip(frozen.begin(), frozen.end());
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (skip.count(name)) continue;
    auto git = grads.find(name);
    if (git == grads.end()) {
      throw std::runtime_error("adam: missing gradient for parameter '" + name + "'");
    }
    const Tensor& g = git->second;
    if (!g.same_shape(p)) {
      throw ShapeError("adam: gradient " + g.shape_str() + " vs parameter " +
                       p.shape_str() + " for '" + name + "'");
    }
    Tensor& m = m_.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor& v = v_.try_emplace(name, Tensor(p.shape)).first->second;
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double gi = g.values[i];
      m.values[i] = config_.beta1 * m.values[i] + (1.0 - config_.beta1) * gi;
      v.values[i] = config_.beta2 * v.values[i] + (1.0 - config_.beta2) * gi * gi;
      const double mhat = m.values[i] / bc1;
      const double vhat = v.values[i] / bc2;
      p.values[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

void Adam::restore(std::size_t step_count, std::unordered_map<std::string, Tensor> m,
                   std::unordered_map<std::string, Tensor> v) {
  t_ = step_count;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace edd
