#include "edd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_map>

#include "edd/optimizer.hpp"
#include "edd/special.hpp"

namespace edd {

void AnnealSchedule::validate() const {
  if (!(initial_temperature >= 1.0)) {
    throw std::invalid_argument("AnnealSchedule: initial temperature must be >= 1");
  }
  if (!(rate >= 0.0)) {
    throw std::invalid_argument("AnnealSchedule: rate must be >= 0");
  }
  if (!(max_temperature >= 1.0)) {
    throw std::invalid_argument("AnnealSchedule: max temperature must be >= 1");
  }
}

double temperature_at(const AnnealSchedule& s, std::size_t epoch) {
  s.validate();
  const double t = s.initial_temperature - s.rate * static_cast<double>(epoch);
  return std::clamp(t, 1.0, s.max_temperature);
}

void ComboConfig::validate() const {
  if (!(weight > 0.0 && weight <= 1.0)) {
    throw std::invalid_argument("ComboConfig: weight must be in (0, 1]");
  }
  if (max_combos < 1) {
    throw std::invalid_argument("ComboConfig: max_combos must be >= 1");
  }
  if (!(rate >= 0.0)) {
    throw std::invalid_argument("ComboConfig: rate must be >= 0");
  }
}

std::size_t combo_depth_at(const ComboConfig& c, std::size_t epoch) {
  c.validate();
  const double raw = std::floor(c.rate * static_cast<double>(epoch));
  if (raw >= static_cast<double>(c.max_combos)) return c.max_combos;
  return static_cast<std::size_t>(raw);
}

SensorWindow weighted_combo(const std::vector<const SensorWindow*>& xs, double r) {
  if (xs.empty()) throw std::invalid_argument("weighted_combo: no windows");
  if (!(r > 0.0)) throw std::invalid_argument("weighted_combo: r must be positive");
  const SensorWindow& first = *xs[0];
  SensorWindow out;
  out.sample_rate_hz = first.sample_rate_hz;
  out.values = Tensor(first.values.shape, 0.0);
  double w = 1.0;       // r^0
  double w_total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!xs[i]->values.same_shape(first.values)) {
      throw ShapeError("weighted_combo: window " + std::to_string(i) + " has shape " +
                       xs[i]->values.shape_str() + ", expected " +
                       first.values.shape_str());
    }
    const std::vector<double>& v = xs[i]->values.values;
    for (std::size_t j = 0; j < v.size(); ++j) out.values.values[j] += w * v[j];
    w_total += w;
    w *= r;
  }
  for (double& v : out.values.values) v /= w_total;
  return out;
}

namespace {

// Rows are the trailing axis; applies fn to every row in place.
template <class Fn>
void for_each_row(Tensor& t, Fn&& fn) {
  if (t.rank() == 0 || t.numel() == 0) {
    throw ShapeError("expected a tensor with rows, got " + t.shape_str());
  }
  const std::size_t k = t.shape.back();
  for (std::size_t i = 0; i < t.numel(); i += k) fn(t.values.data() + i, k);
}

}  // namespace

Tensor floor_probabilities(const Tensor& probs, double floor) {
  if (!(floor >= 0.0) || floor >= 1.0) {
    throw std::invalid_argument("floor_probabilities: floor must be in [0, 1)");
  }
  Tensor out = probs;
  for_each_row(out, [&](double* row, std::size_t k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      row[i] = std::max(row[i], floor);
      sum += row[i];
    }
    for (std::size_t i = 0; i < k; ++i) row[i] /= sum;
  });
  return out;
}

Tensor temper_probabilities(const Tensor& probs, double temperature) {
  if (!(temperature >= 1.0)) {
    throw std::invalid_argument("temper_probabilities: temperature must be >= 1");
  }
  if (temperature == 1.0) return probs;  // exact identity
  Tensor out = probs;
  const double inv_t = 1.0 / temperature;
  for_each_row(out, [&](double* row, std::size_t k) {
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      row[i] = std::pow(row[i], inv_t);
      sum += row[i];
    }
    for (std::size_t i = 0; i < k; ++i) row[i] /= sum;
  });
  return out;
}

namespace {

void check_nll_shapes(const Tensor& alpha, const Tensor& targets) {
  if (alpha.rank() != 2 || targets.rank() != 3 || targets.dim(0) != alpha.dim(0) ||
      targets.dim(2) != alpha.dim(1)) {
    throw ShapeError("dirichlet_nll: alpha " + alpha.shape_str() + " vs targets " +
                     targets.shape_str() + ", expected (B, K) and (B, M, K)");
  }
}

// Per-sample mean over members of ln pi_{m,i}: (B, K). The member mean can be
// folded into the density because only the sum_i (alpha_i - 1) ln pi term
// depends on the member.
Tensor mean_log_targets(const Tensor& targets) {
  const std::size_t b = targets.dim(0);
  const std::size_t m = targets.dim(1);
  const std::size_t k = targets.dim(2);
  Tensor out({b, k}, 0.0);
  for (std::size_t s = 0; s < b; ++s) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < k; ++i) {
        const double p = targets.at3(s, j, i);
        if (!(p > 0.0)) {
          throw std::runtime_error(
              "dirichlet_nll: non-positive target probability at sample " +
              std::to_string(s) + " (floor the targets first)");
        }
        out.at2(s, i) += std::log(p);
      }
    }
    for (std::size_t i = 0; i < k; ++i) out.at2(s, i) /= static_cast<double>(m);
  }
  return out;
}

}  // namespace

double dirichlet_nll_value(const Tensor& alpha, const Tensor& targets) {
  check_nll_shapes(alpha, targets);
  const Tensor lbar = mean_log_targets(targets);
  const std::size_t b = alpha.dim(0);
  const std::size_t k = alpha.dim(1);
  double total = 0.0;
  for (std::size_t s = 0; s < b; ++s) {
    double a_sum = 0.0;
    double log_like = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double a = alpha.at2(s, i);
      if (!(a > 0.0)) {
        throw std::runtime_error("dirichlet_nll: non-positive alpha at sample " +
                                 std::to_string(s));
      }
      a_sum += a;
      log_like -= lgamma_pos(a);
      log_like += (a - 1.0) * lbar.at2(s, i);
    }
    log_like += lgamma_pos(a_sum);
    if (!std::isfinite(log_like)) {
      throw std::runtime_error("dirichlet_nll: non-finite density at sample " +
                               std::to_string(s));
    }
    total -= log_like;
  }
  return total / static_cast<double>(b);
}

VarId dirichlet_nll_graph(Tape& tape, VarId alpha, const Tensor& targets) {
  const Tensor& a = tape.value(alpha);
  check_nll_shapes(a, targets);
  const Tensor lbar = mean_log_targets(targets);
  VarId lbar_id = tape.leaf(lbar, false);
  VarId s = tape.row_sum(alpha);                          // (B)
  VarId term_norm = tape.lgamma(s);                       // lnGamma(S)
  VarId term_parts = tape.row_sum(tape.lgamma(alpha));    // sum_i lnGamma(alpha_i)
  VarId term_data =
      tape.row_sum(tape.mul(tape.shift(alpha, -1.0), lbar_id));  // sum (a-1) ln pi
  VarId log_like = tape.add(tape.sub(term_norm, term_parts), term_data);  // (B)
  const Tensor& ll = tape.value(log_like);
  for (std::size_t i = 0; i < ll.numel(); ++i) {
    if (!std::isfinite(ll.values[i])) {
      throw std::runtime_error("dirichlet_nll: non-finite density at sample " +
                               std::to_string(i));
    }
  }
  return tape.neg(tape.mean(log_like));
}

double dirichlet_nll(const Tensor& alpha, const Tensor& targets,
                     double target_temperature) {
  return dirichlet_nll_value(
      alpha, temper_probabilities(floor_probabilities(targets), target_temperature));
}

namespace {

void copy_window_into(Tensor& batch, std::size_t row, const Tensor& window) {
  const std::size_t stride = window.numel();
  std::memcpy(batch.values.data() + row * stride, window.values.data(),
              stride * sizeof(double));
}

std::size_t ensemble_classes(const std::vector<ModelParameters>& ensemble) {
  if (ensemble.empty()) {
    throw std::invalid_argument("distill: ensemble must be nonempty");
  }
  std::size_t k = 0;
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    if (ensemble[m].heads.empty()) {
      throw std::invalid_argument("distill: ensemble member " + std::to_string(m) +
                                  " has no classification head");
    }
    const std::size_t mk = ensemble[m].heads[0].out.weight.dim(0);
    if (m == 0) {
      k = mk;
    } else if (mk != k) {
      throw std::invalid_argument("distill: member " + std::to_string(m) + " has " +
                                  std::to_string(mk) + " classes, expected " +
                                  std::to_string(k));
    }
  }
  return k;
}

}  // namespace

DistillResult distill(const std::vector<ModelParameters>& ensemble,
                      const UnlabeledDataset& d_u,
                      const ModelParameters* pretrained_base, const DistillConfig& cfg,
                      const std::function<void(const DistillLogRow&)>& on_epoch) {
  const std::size_t num_classes = ensemble_classes(ensemble);
  if (d_u.size() == 0) throw std::invalid_argument("distill: empty unlabeled set");
  d_u.validate();
  cfg.schedule.validate();
  cfg.combos.validate();
  cfg.transform_params.validate();
  if (cfg.batch_size == 0) throw std::invalid_argument("distill: batch size 0");
  if (!(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("distill: learning rate must be positive");
  }

  const ArchitectureConfig& arch = ensemble.front().arch;
  const std::size_t members = ensemble.size();

  // Augmented pool: every original plus every transform of it (9x), or the
  // originals alone when transform augmentation is disabled.
  std::vector<SensorWindow> pool;
  if (cfg.use_transforms) {
    pool = build_pretext_dataset(d_u, cfg.transform_params, cfg.seed).pool;
  } else {
    pool = d_u.windows;
  }
  const std::size_t pool_size = pool.size();
  const std::size_t channels = pool.front().channels();
  const std::size_t timesteps = pool.front().timesteps();

  // The pool is fixed, so the frozen ensemble's outputs on it are too:
  // compute them once, floored away from the simplex boundary. Only combo
  // samples need fresh teacher passes.
  Tensor teacher_cache({pool_size, members, num_classes});
  for (std::size_t start = 0; start < pool_size; start += cfg.batch_size) {
    const std::size_t b = std::min(cfg.batch_size, pool_size - start);
    Tensor x({b, channels, timesteps});
    for (std::size_t j = 0; j < b; ++j) copy_window_into(x, j, pool[start + j].values);
    for (std::size_t m = 0; m < members; ++m) {
      const Tensor probs = floor_probabilities(forward_classifier(ensemble[m], x));
      for (std::size_t j = 0; j < b; ++j) {
        for (std::size_t i = 0; i < num_classes; ++i) {
          teacher_cache.at3(start + j, m, i) = probs.at2(j, i);
        }
      }
    }
  }

  Rng root(cfg.seed);
  Rng init_rng = root.split("init");
  ModelParameters model = build_base(arch, cfg.width_multiplier, init_rng);
  if (pretrained_base) transfer_base(*pretrained_base, model, cfg.freeze_layers);
  add_head(model, num_classes, init_rng);
  const std::vector<std::string> frozen = model.frozen_names();

  Adam opt(AdamConfig{.learning_rate = cfg.learning_rate});
  Rng shuffle_rng = root.split("shuffle");
  Rng combo_rng = root.split("combo");
  Rng dropout_rng = root.split("dropout");

  DistillResult result;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const double t = temperature_at(cfg.schedule, e);
    const std::size_t depth = cfg.use_combos ? combo_depth_at(cfg.combos, e) : 0;
    std::vector<std::size_t> perm(pool_size);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle_rng.shuffle(perm);

    double nll_sum = 0.0;
    std::size_t batches = 0;
    std::size_t combo_samples = 0;
    for (std::size_t start = 0; start < pool_size; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, pool_size - start);
      Tensor x({b, channels, timesteps});
      Tensor targets({b, members, num_classes});
      std::vector<std::size_t> fresh;  // batch rows holding combo samples
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t p = perm[start + j];
        const std::size_t n = combo_rng.uniform_int(depth + 1);
        if (n == 0) {
          copy_window_into(x, j, pool[p].values);
          const double* src = teacher_cache.values.data() +
                              p * members * num_classes;
          std::memcpy(targets.values.data() + j * members * num_classes, src,
                      members * num_classes * sizeof(double));
        } else {
          ++combo_samples;
          std::vector<const SensorWindow*> parts;
          parts.reserve(n + 1);
          parts.push_back(&pool[p]);
          for (std::size_t i = 0; i < n; ++i) {
            parts.push_back(&pool[combo_rng.uniform_int(pool_size)]);
          }
          copy_window_into(x, j, weighted_combo(parts, cfg.combos.weight).values);
          fresh.push_back(j);
        }
      }
      if (!fresh.empty()) {
        Tensor fx({fresh.size(), channels, timesteps});
        for (std::size_t i = 0; i < fresh.size(); ++i) {
          std::memcpy(fx.values.data() + i * channels * timesteps,
                      x.values.data() + fresh[i] * channels * timesteps,
                      channels * timesteps * sizeof(double));
        }
        for (std::size_t m = 0; m < members; ++m) {
          const Tensor probs = floor_probabilities(forward_classifier(ensemble[m], fx));
          for (std::size_t i = 0; i < fresh.size(); ++i) {
            for (std::size_t c = 0; c < num_classes; ++c) {
              targets.at3(fresh[i], m, c) = probs.at2(i, c);
            }
          }
        }
      }
      const Tensor tempered = temper_probabilities(targets, t);

      Tape tape;
      BoundModel bm = bind_model(tape, model, true);
      VarId xid = tape.leaf(x, false);
      VarId alpha = forward_dirichlet_graph(tape, bm, xid, t, &dropout_rng);
      VarId loss = dirichlet_nll_graph(tape, alpha, tempered);
      const double loss_value = tape.value(loss).values[0];
      auto grads_by_id = tape.backward(loss);

      std::unordered_map<std::string, Tensor> params, grads;
      for (auto& [name, tensor] : model.named_parameters()) params.emplace(name, *tensor);
      for (const auto& [name, id] : bm.ids) {
        if (auto it = grads_by_id.find(id); it != grads_by_id.end()) {
          grads.emplace(name, std::move(it->second));
        }
      }
      opt.step(params, grads, frozen);
      for (auto& [name, tensor] : model.named_parameters()) *tensor = params.at(name);

      nll_sum += loss_value;
      ++batches;
    }

    DistillLogRow row;
    row.epoch = e;
    row.temperature = t;
    row.combo_depth = depth;
    row.combo_samples = combo_samples;
    row.mean_nll = nll_sum / static_cast<double>(batches);
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
    if (!std::isfinite(row.mean_nll)) {
      throw std::runtime_error("distill: training diverged at epoch " +
                               std::to_string(e));
    }
  }

  result.model = std::move(model);
  return result;
}

}  // namespace edd
