#include "edd/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace edd {

namespace {

// Shortest decimal string that round-trips the exact double, so reports are
// both deterministic and lossless.
std::string format_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::size_t argmax_row(const double* p, std::size_t k) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < k; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return best;
}

std::vector<std::size_t> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) {
    throw ShapeError("argmax_rows: expected (B, K), got " + probs.shape_str());
  }
  std::vector<std::size_t> out(probs.dim(0));
  for (std::size_t i = 0; i < probs.dim(0); ++i) {
    out[i] = argmax_row(probs.values.data() + i * probs.dim(1), probs.dim(1));
  }
  return out;
}

double accuracy(const std::vector<std::size_t>& predictions,
                const std::vector<std::size_t>& labels) {
  if (predictions.empty()) throw std::invalid_argument("accuracy: empty input");
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("accuracy: length mismatch");
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

std::vector<double> quantile_accuracy(const std::vector<double>& scores,
                                      const std::vector<bool>& correct,
                                      const std::vector<double>& quantiles) {
  const std::size_t n = scores.size();
  if (n == 0) throw std::invalid_argument("quantile_accuracy: empty input");
  if (correct.size() != n) {
    throw std::invalid_argument("quantile_accuracy: length mismatch");
  }
  for (double q : quantiles) {
    if (!(q > 0.0 && q <= 1.0)) {
      throw std::invalid_argument("quantile_accuracy: quantile " + format_double(q) +
                                  " outside (0, 1]");
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Prefix counts of correct predictions in score order.
  std::vector<std::size_t> prefix(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) {
    prefix[i + 1] = prefix[i] + (correct[order[i]] ? 1 : 0);
  }
  std::vector<double> out;
  out.reserve(quantiles.size());
  for (double q : quantiles) {
    const auto take = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(n) - 1e-12));
    std::size_t m = std::max<std::size_t>(1, std::min(take, n));
    // A sample tied with the prefix boundary cannot be ranked below it, so the
    // whole tied group joins the prefix. With all scores equal, every quantile
    // therefore covers the full set and equals the overall accuracy.
    while (m < n && scores[order[m]] == scores[order[m - 1]]) ++m;
    out.push_back(static_cast<double>(prefix[m]) / static_cast<double>(m));
  }
  return out;
}

double auc_roc(const std::vector<double>& scores, const std::vector<bool>& correct) {
  const std::size_t n = scores.size();
  if (correct.size() != n) throw std::invalid_argument("auc_roc: length mismatch");
  std::size_t n_pos = 0;  // positives = incorrect predictions
  for (bool c : correct) n_pos += c ? 0 : 1;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw std::invalid_argument(
        "auc_roc: degenerate input, needs at least one correct and one incorrect sample");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks: tied scores all receive the average of their rank range.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t t = i; t < j; ++t) {
      if (!correct[order[t]]) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double mean_kl(const Tensor& p, const Tensor& q) {
  if (p.rank() != 2 || !p.same_shape(q)) {
    throw ShapeError("mean_kl: expected matching (B, K), got " + p.shape_str() +
                     " vs " + q.shape_str());
  }
  const std::size_t b = p.dim(0);
  const std::size_t k = p.dim(1);
  if (b == 0) throw std::invalid_argument("mean_kl: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double pv = p.at2(i, j);
      if (pv <= 0.0) continue;
      const double qv = q.at2(i, j);
      if (!(qv > 0.0)) {
        throw std::domain_error("mean_kl: zero reference probability at row " +
                                std::to_string(i));
      }
      total += pv * std::log(pv / qv);
    }
  }
  return total / static_cast<double>(b);
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["dataset"] = dataset;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["records"] = nlohmann::json::array();
  for (const EvalRecord& r : records) {
    nlohmann::json rec;
    rec["model"] = r.model;
    rec["epsilon"] = r.epsilon;
    rec["overall_accuracy"] = r.overall_accuracy;
    rec["quantiles"] = r.quantiles;
    rec["quantile_accuracies"] = r.quantile_accuracies;
    if (r.auc_valid) {
      rec["auc"] = r.auc;
    } else {
      rec["auc"] = nullptr;  // degenerate split: not applicable
    }
    j["records"].push_back(rec);
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::to_csv() const {
  std::string out =
      "model,epsilon,quantile,quantile_accuracy,overall_accuracy,auc\n";
  for (const EvalRecord& r : records) {
    for (std::size_t i = 0; i < r.quantiles.size(); ++i) {
      out += r.model + ',' + format_double(r.epsilon) + ',' +
             format_double(r.quantiles[i]) + ',' +
             format_double(r.quantile_accuracies[i]) + ',' +
             format_double(r.overall_accuracy) + ',' +
             (r.auc_valid ? format_double(r.auc) : std::string("NA")) + '\n';
    }
  }
  return out;
}

}  // namespace edd
