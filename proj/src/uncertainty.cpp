#include "edd/uncertainty.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "edd/special.hpp"

namespace edd {

namespace {

void check_distribution(const double* p, std::size_t k) {
  double sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(p[i] >= 0.0)) {
      throw std::invalid_argument("entropy: negative or non-finite probability " +
                                  std::to_string(p[i]));
    }
    sum += p[i];
  }
  if (std::fabs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument("entropy: probabilities sum to " + std::to_string(sum) +
                                ", not 1");
  }
}

UncertaintyTriple ensemble_triple(const double* probs, std::size_t m, std::size_t k,
                                  std::vector<double>& mean_buf) {
  mean_buf.assign(k, 0.0);
  double mean_entropy = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double* row = probs + j * k;
    check_distribution(row, k);
    mean_entropy += entropy(row, k);
    for (std::size_t i = 0; i < k; ++i) mean_buf[i] += row[i];
  }
  for (double& v : mean_buf) v /= static_cast<double>(m);
  UncertaintyTriple t;
  t.total = entropy(mean_buf.data(), k);
  t.aleatoric = mean_entropy / static_cast<double>(m);
  t.epistemic = t.total - t.aleatoric;
  return t;
}

UncertaintyTriple dirichlet_triple(const double* alpha, std::size_t k,
                                   AleatoricForm form) {
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(alpha[i] > 0.0)) {
      throw std::domain_error("dirichlet_uncertainty: alpha must be positive, got " +
                              std::to_string(alpha[i]));
    }
    s += alpha[i];
  }
  UncertaintyTriple t;
  const double psi_s = form == AleatoricForm::expected_entropy ? digamma(s + 1.0)
                                                               : digamma(s);
  for (std::size_t i = 0; i < k; ++i) {
    const double mu = alpha[i] / s;
    if (mu > 0.0) t.total -= mu * std::log(mu);
    const double psi_a = form == AleatoricForm::expected_entropy
                             ? digamma(alpha[i] + 1.0)
                             : digamma(alpha[i]);
    t.aleatoric -= mu * (psi_a - psi_s);
  }
  t.epistemic = t.total - t.aleatoric;
  return t;
}

}  // namespace

double entropy(const double* p, std::size_t k) {
  check_distribution(p, k);
  double h = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  }
  return h;
}

double entropy(const std::vector<double>& p) { return entropy(p.data(), p.size()); }

UncertaintyTriple ensemble_uncertainty(const Tensor& member_probs) {
  if (member_probs.rank() != 2) {
    throw ShapeError("ensemble_uncertainty: expected (M, K), got " +
                     member_probs.shape_str());
  }
  std::vector<double> buf;
  return ensemble_triple(member_probs.values.data(), member_probs.dim(0),
                         member_probs.dim(1), buf);
}

std::vector<UncertaintyTriple> ensemble_uncertainty_batch(const Tensor& member_probs) {
  if (member_probs.rank() != 3) {
    throw ShapeError("ensemble_uncertainty_batch: expected (B, M, K), got " +
                     member_probs.shape_str());
  }
  const std::size_t b = member_probs.dim(0);
  const std::size_t m = member_probs.dim(1);
  const std::size_t k = member_probs.dim(2);
  std::vector<UncertaintyTriple> out(b);
  std::vector<double> buf;
  for (std::size_t i = 0; i < b; ++i) {
    out[i] = ensemble_triple(member_probs.values.data() + i * m * k, m, k, buf);
  }
  return out;
}

UncertaintyTriple dirichlet_uncertainty(const Tensor& alpha, AleatoricForm form) {
  if (alpha.rank() != 1) {
    throw ShapeError("dirichlet_uncertainty: expected (K), got " + alpha.shape_str());
  }
  return dirichlet_triple(alpha.values.data(), alpha.dim(0), form);
}

std::vector<UncertaintyTriple> dirichlet_uncertainty_batch(const Tensor& alpha,
                                                           AleatoricForm form) {
  if (alpha.rank() != 2) {
    throw ShapeError("dirichlet_uncertainty_batch: expected (B, K), got " +
                     alpha.shape_str());
  }
  const std::size_t b = alpha.dim(0);
  const std::size_t k = alpha.dim(1);
  std::vector<UncertaintyTriple> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    out[i] = dirichlet_triple(alpha.values.data() + i * k, k, form);
  }
  return out;
}

Tensor dirichlet_mean(const Tensor& alpha) {
  if (alpha.rank() != 2) {
    throw ShapeError("dirichlet_mean: expected (B, K), got " + alpha.shape_str());
  }
  Tensor mu = alpha;
  const std::size_t k = alpha.dim(1);
  for (std::size_t i = 0; i < alpha.dim(0); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      if (!(mu.at2(i, j) > 0.0)) {
        throw std::domain_error("dirichlet_mean: non-positive concentration at row " +
                                std::to_string(i));
      }
      s += mu.at2(i, j);
    }
    for (std::size_t j = 0; j < k; ++j) mu.at2(i, j) /= s;
  }
  return mu;
}

std::vector<double> single_model_scores(const Tensor& probs) {
  if (probs.rank() != 2) {
    throw ShapeError("single_model_scores: expected (B, K), got " + probs.shape_str());
  }
  std::vector<double> out(probs.dim(0));
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    out[i] = entropy(probs.values.data() + i * probs.dim(1), probs.dim(1));
  }
  return out;
}

std::vector<double> ensemble_scores(const Tensor& member_probs) {
  const auto triples = ensemble_uncertainty_batch(member_probs);
  std::vector<double> out(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) out[i] = triples[i].total;
  return out;
}

std::vector<double> dirichlet_scores(const Tensor& alpha) {
  const auto triples = dirichlet_uncertainty_batch(alpha);
  std::vector<double> out(triples.size());
  for (std::size_t i = 0; i < triples.size(); ++i) out[i] = triples[i].total;
  return out;
}

}  // namespace edd
