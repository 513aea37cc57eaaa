#pragma once

#include <vector>

#include "edd/tensor.hpp"

namespace edd {

// Entropy-based uncertainty decomposition in nats. Epistemic is defined as
// total - aleatoric, so additivity holds exactly by construction.
struct UncertaintyTriple {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

// Shannon entropy with 0 ln 0 = 0. Throws std::invalid_argument on negative
// entries or rows that do not sum to 1 within 1e-6.
double entropy(const double* p, std::size_t k);
double entropy(const std::vector<double>& p);

// member_probs: (M, K), one categorical distribution per ensemble member.
// total = entropy of the member mean; aleatoric = mean member entropy;
// epistemic = the difference (the mutual information between the prediction
// and the member identity). Non-negative by Jensen's inequality.
UncertaintyTriple ensemble_uncertainty(const Tensor& member_probs);

// Batched form over (B, M, K).
std::vector<UncertaintyTriple> ensemble_uncertainty_batch(const Tensor& member_probs);

// How the expected categorical entropy under Dir(alpha) is computed.
enum class AleatoricForm {
  // -sum_i mu_i (psi(alpha_i + 1) - psi(S + 1)): the exact expectation of the
  // categorical entropy, always <= total.
  expected_entropy,
  // -sum_i mu_i (psi(alpha_i) - psi(S)): a variant that appears in some
  // write-ups but can exceed the total entropy (alpha = (1,1) gives 1 > ln 2),
  // producing negative epistemic values. Provided for comparison only.
  unshifted_digamma,
};

// alpha: (K) concentration vector, every entry > 0 (else std::domain_error).
// total = entropy of mu where mu_i = alpha_i / S.
UncertaintyTriple dirichlet_uncertainty(
    const Tensor& alpha, AleatoricForm form = AleatoricForm::expected_entropy);

// Batched form over (B, K).
std::vector<UncertaintyTriple> dirichlet_uncertainty_batch(
    const Tensor& alpha, AleatoricForm form = AleatoricForm::expected_entropy);

// Predictive mean of the Dirichlet: row-normalized alpha. (B, K) -> (B, K).
Tensor dirichlet_mean(const Tensor& alpha);

// Per-sample total-uncertainty scores, the uniform scoring interface used for
// quantile sorting. All three agree for M = 1 / a concentrated Dirichlet.
std::vector<double> single_model_scores(const Tensor& probs);        // (B, K)
std::vector<double> ensemble_scores(const Tensor& member_probs);     // (B, M, K)
std::vector<double> dirichlet_scores(const Tensor& alpha);           // (B, K)

}  // namespace edd
