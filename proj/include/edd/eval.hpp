#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "edd/tensor.hpp"

namespace edd {

// Argmax with ties broken toward the lowest class index.
std::size_t argmax_row(const double* p, std::size_t k);
std::vector<std::size_t> argmax_rows(const Tensor& probs);  // (B, K)

// Fraction of matching entries. Throws on empty or mismatched lengths.
double accuracy(const std::vector<std::size_t>& predictions,
                const std::vector<std::size_t>& labels);

// Stable-sorts by ascending score (ties keep input order) and reports the
// accuracy over the first ceil(q*n) samples for each quantile q in (0, 1].
std::vector<double> quantile_accuracy(const std::vector<double>& scores,
                                      const std::vector<bool>& correct,
                                      const std::vector<double>& quantiles);

// Probability that a uniformly drawn incorrect sample scores strictly higher
// than a uniformly drawn correct one, plus half the tie probability (the
// midrank statistic). Throws std::invalid_argument when either class is empty.
double auc_roc(const std::vector<double>& scores, const std::vector<bool>& correct);

// Mean over rows of KL(p_row || q_row) in nats; 0 ln 0 terms are 0.
double mean_kl(const Tensor& p, const Tensor& q);  // both (B, K)

// One evaluated (model, epsilon) cell of the report.
struct EvalRecord {
  std::string model;  // "single" | "ensemble" | "distilled"
  double epsilon = 0.0;
  double overall_accuracy = 0.0;
  std::vector<double> quantiles;            // e.g. 0.25, 0.5, 0.75, 1.0
  std::vector<double> quantile_accuracies;  // parallel to quantiles
  double auc = 0.0;
  bool auc_valid = false;  // false when the correct/incorrect split is degenerate
};

// Machine-readable evaluation report. Serialization is deterministic: no
// timestamps, keys sorted, fixed float formatting. Wall-clock metadata
// belongs to the run manifest, not the report.
struct EvalReport {
  std::string dataset;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<EvalRecord> records;

  std::string to_json() const;
  // Flat rows: model,epsilon,quantile,quantile_accuracy,overall_accuracy,auc
  std::string to_csv() const;
};

}  // namespace edd
