#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "doctest.h"
#include "edd/eval.hpp"
#include "edd/rng.hpp"
#include "support/oracles.hpp"

using namespace edd;

TEST_CASE("argmax_row: ties break toward the lowest index") {
  const std::vector<double> a = {0.2, 0.5, 0.5};
  CHECK(argmax_row(a.data(), a.size()) == 1);
  const std::vector<double> b = {0.4, 0.4, 0.2};
  CHECK(argmax_row(b.data(), b.size()) == 0);
  const std::vector<double> c = {0.1, 0.2, 0.7};
  CHECK(argmax_row(c.data(), c.size()) == 2);
  const std::vector<double> d = {1.0};
  CHECK(argmax_row(d.data(), d.size()) == 0);
}

TEST_CASE("argmax_rows: batched and shape-checked") {
  const Tensor probs({2, 3}, {0.1, 0.8, 0.1, 0.5, 0.3, 0.2});
  const auto preds = argmax_rows(probs);
  REQUIRE(preds.size() == 2);
  CHECK(preds[0] == 1);
  CHECK(preds[1] == 0);
  CHECK_THROWS(argmax_rows(Tensor({6}, std::vector<double>(6, 0.1))));
}

TEST_CASE("accuracy: counts matches") {
  CHECK(accuracy({0, 1, 2, 1}, {0, 1, 1, 1}) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(accuracy({2, 2}, {2, 2}) == 1.0);
  CHECK(accuracy({0}, {1}) == 0.0);
  CHECK_THROWS_AS(accuracy({}, {}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy({0, 1}, {0}), std::invalid_argument);
}

TEST_CASE("quantile_accuracy: perfect ranking") {
  // Low score = correct, 50/50 split, distinct scores.
  std::vector<double> scores;
  std::vector<bool> correct;
  for (int i = 0; i < 8; ++i) {
    scores.push_back(static_cast<double>(i));
    correct.push_back(i < 4);
  }
  const auto acc = quantile_accuracy(scores, correct, {0.25, 0.5, 0.75, 1.0});
  REQUIRE(acc.size() == 4);
  CHECK(acc[0] == 1.0);
  CHECK(acc[1] == 1.0);
  CHECK(acc[2] == doctest::Approx(4.0 / 6.0).epsilon(1e-15));
  CHECK(acc[3] == 0.5);
}

TEST_CASE("quantile_accuracy: prefix size is ceil(q*n)") {
  // n = 5, q = 0.25 -> ceil(1.25) = 2 samples; q = 0.2 -> exactly 1.
  const std::vector<double> scores = {1.0, 2.0, 3.0, 4.0, 5.0};
  const std::vector<bool> correct = {true, false, true, true, true};
  const auto acc = quantile_accuracy(scores, correct, {0.2, 0.25, 0.4});
  CHECK(acc[0] == 1.0);                                       // {s1}
  CHECK(acc[1] == doctest::Approx(0.5).epsilon(1e-15));       // {s1, s2}
  CHECK(acc[2] == doctest::Approx(0.5).epsilon(1e-15));       // ceil(2.0) = 2
}

TEST_CASE("quantile_accuracy: 100% equals overall accuracy exactly") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(200);
    std::vector<double> scores(n);
    std::vector<bool> correct(n);
    std::vector<std::size_t> preds(n), labels(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform();
      preds[i] = rng.uniform_int(2);
      correct[i] = preds[i] == labels[i];
    }
    const auto acc = quantile_accuracy(scores, correct, {1.0});
    CHECK(acc[0] == accuracy(preds, labels));  // bitwise: same count / same n
  }
}

TEST_CASE("quantile_accuracy: constant scores give overall accuracy at every quantile") {
  const std::vector<double> scores(7, 0.42);
  const std::vector<bool> correct = {true, false, true, true, false, true, true};
  const double overall = 5.0 / 7.0;
  const auto acc = quantile_accuracy(scores, correct, {0.25, 0.5, 0.75, 1.0});
  for (double a : acc) CHECK(a == doctest::Approx(overall).epsilon(1e-15));
}

TEST_CASE("quantile_accuracy: boundary ties join the prefix") {
  // scores: 1 1 2 2 2 3 — q = 0.5 takes 3, but the third sample ties with the
  // next two, so the prefix covers all five score <= 2 samples.
  const std::vector<double> scores = {1.0, 1.0, 2.0, 2.0, 2.0, 3.0};
  const std::vector<bool> correct = {true, true, false, true, false, false};
  const auto acc = quantile_accuracy(scores, correct, {0.5});
  CHECK(acc[0] == doctest::Approx(3.0 / 5.0).epsilon(1e-15));
}

TEST_CASE("quantile_accuracy: tied groups make the result order independent") {
  // A quantile cutting through a tied group would otherwise depend on input
  // order; absorbing the whole group makes shuffled inputs agree.
  const std::vector<double> s1 = {0.5, 0.5, 0.1};
  const std::vector<bool> c1 = {true, false, true};
  const std::vector<bool> c2 = {false, true, true};  // tied pair swapped
  const std::vector<double> qs = {1.0 / 3.0, 0.5, 1.0};
  const auto a1 = quantile_accuracy(s1, c1, qs);
  const auto a2 = quantile_accuracy(s1, c2, qs);
  for (std::size_t i = 0; i < a1.size(); ++i) CHECK(a1[i] == a2[i]);
  CHECK(a1[0] == 1.0);  // the 0.1 sample alone
  // q = 0.5 lands inside the tied pair, so the prefix covers all 3 samples.
  CHECK(a1[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(a1[2] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("quantile_accuracy: matches an independent prefix oracle on distinct scores") {
  Rng rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.uniform_int(120);
    std::vector<double> scores(n);
    std::vector<bool> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = rng.uniform();  // continuous: ties have measure zero
      correct[i] = rng.uniform() < 0.7;
    }
    const std::vector<double> qs = {0.1, 0.25, 0.5, 0.75, 0.9, 1.0};
    const auto acc = quantile_accuracy(scores, correct, qs);

    // Oracle: sort (score, correct) pairs, count correct in the first
    // ceil(q * n) — with distinct scores tie absorption never fires.
    std::vector<std::pair<double, bool>> pairs;
    for (std::size_t i = 0; i < n; ++i) pairs.emplace_back(scores[i], correct[i]);
    std::sort(pairs.begin(), pairs.end());
    std::size_t prev_take = 0;
    for (std::size_t qi = 0; qi < qs.size(); ++qi) {
      auto take = static_cast<std::size_t>(
          std::ceil(qs[qi] * static_cast<double>(n) - 1e-12));
      take = std::max<std::size_t>(1, std::min(take, n));
      CHECK(take >= prev_take);  // nesting: prefixes grow with q
      prev_take = take;
      std::size_t good = 0;
      for (std::size_t i = 0; i < take; ++i) good += pairs[i].second ? 1 : 0;
      CHECK(acc[qi] == static_cast<double>(good) / static_cast<double>(take));
    }
  }
}

TEST_CASE("quantile_accuracy: input validation") {
  CHECK_THROWS_AS(quantile_accuracy({}, {}, {0.5}), std::invalid_argument);
  CHECK_THROWS_AS(quantile_accuracy({1.0}, {true, false}, {0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(quantile_accuracy({1.0}, {true}, {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(quantile_accuracy({1.0}, {true}, {1.5}), std::invalid_argument);
  CHECK_THROWS_AS(quantile_accuracy({1.0}, {true}, {-0.25}), std::invalid_argument);
}

TEST_CASE("auc_roc: hand cases") {
  // Higher score on the incorrect sample: perfect discrimination.
  CHECK(auc_roc({0.9, 0.1}, {false, true}) == 1.0);
  // Reversed: worst case.
  CHECK(auc_roc({0.1, 0.9}, {false, true}) == 0.0);
  // All scores equal: chance level by the tie correction.
  CHECK(auc_roc({0.5, 0.5, 0.5, 0.5}, {false, true, false, true}) == 0.5);
  CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {true, true}), std::invalid_argument);
  CHECK_THROWS_AS(auc_roc({0.1, 0.2}, {false, false}), std::invalid_argument);
  CHECK_THROWS_AS(auc_roc({0.1}, {true, false}), std::invalid_argument);
}

TEST_CASE("auc_roc: matches the brute-force pairwise oracle exactly") {
  Rng rng(20260601);
  for (int instance = 0; instance < 100; ++instance) {
    const std::size_t n = 2 + rng.uniform_int(499);  // up to 500
    std::vector<double> scores(n);
    std::vector<bool> correct(n);
    std::vector<int> labels(n);  // oracle wants 1 = positive = incorrect
    bool have_pos = false, have_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse grid so ties happen often.
      scores[i] = static_cast<double>(rng.uniform_int(40)) / 8.0;
      correct[i] = rng.uniform() < 0.6;
      labels[i] = correct[i] ? 0 : 1;
      (correct[i] ? have_neg : have_pos) = true;
    }
    if (!have_pos) {
      correct[0] = false;
      labels[0] = 1;
    }
    if (!have_neg) {
      correct[n - 1] = true;
      labels[n - 1] = 0;
    }
    const double fast = auc_roc(scores, correct);
    const double brute = test::auc_brute_force(scores, labels);
    CHECK(std::abs(fast - brute) < 1e-12);
  }
}

TEST_CASE("mean_kl: hand values") {
  const Tensor p({1, 2}, {0.5, 0.5});
  CHECK(mean_kl(p, p) == doctest::Approx(0.0).epsilon(1e-15));

  // KL((1,0) || (0.5,0.5)) = ln 2, the 0 ln 0 term dropping out.
  const Tensor onehot({1, 2}, {1.0, 0.0});
  const Tensor uniform({1, 2}, {0.5, 0.5});
  CHECK(mean_kl(onehot, uniform) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // Batched: mean of the two rows above.
  const Tensor pb({2, 2}, {0.5, 0.5, 1.0, 0.0});
  const Tensor qb({2, 2}, {0.5, 0.5, 0.5, 0.5});
  CHECK(mean_kl(pb, qb) == doctest::Approx(0.5 * std::log(2.0)).epsilon(1e-12));

  // q = 0 where p > 0 is infinite relative information: rejected.
  CHECK_THROWS_AS(mean_kl(onehot, Tensor({1, 2}, {0.0, 1.0})), std::domain_error);
  CHECK_THROWS(mean_kl(p, Tensor({1, 3}, {0.4, 0.3, 0.3})));  // shape mismatch
}

TEST_CASE("mean_kl: non-negative on random distribution pairs") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = 2 + rng.uniform_int(5);
    Tensor p({1, k}), q({1, k});
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      p.values[i] = 1e-3 + rng.uniform();
      q.values[i] = 1e-3 + rng.uniform();
      sp += p.values[i];
      sq += q.values[i];
    }
    for (std::size_t i = 0; i < k; ++i) {
      p.values[i] /= sp;
      q.values[i] /= sq;
    }
    CHECK(mean_kl(p, q) >= -1e-12);
  }
}

TEST_CASE("EvalReport: JSON is deterministic and machine-readable") {
  EvalReport report;
  report.dataset = "synthetic";
  report.config_hash = "abc123";
  report.seed = 7;
  EvalRecord rec;
  rec.model = "distilled";
  rec.epsilon = 0.1;
  rec.overall_accuracy = 0.75;
  rec.quantiles = {0.25, 1.0};
  rec.quantile_accuracies = {0.9, 0.75};
  rec.auc = 0.8125;
  rec.auc_valid = true;
  report.records.push_back(rec);

  const std::string a = report.to_json();
  const std::string b = report.to_json();
  CHECK(a == b);  // byte-identical across calls
  CHECK(a.find("\"dataset\"") != std::string::npos);
  CHECK(a.find("synthetic") != std::string::npos);
  CHECK(a.find("0.8125") != std::string::npos);
  CHECK(a.find("timestamp") == std::string::npos);

  // Degenerate AUC serializes as null, never as a fake number.
  report.records[0].auc_valid = false;
  const std::string c = report.to_json();
  CHECK(c.find("null") != std::string::npos);
}

TEST_CASE("EvalReport: CSV rows are one per model x epsilon x quantile") {
  EvalReport report;
  report.dataset = "synthetic";
  EvalRecord rec;
  rec.model = "single";
  rec.epsilon = 0.0;
  rec.overall_accuracy = 0.5;
  rec.quantiles = {0.25, 0.5};
  rec.quantile_accuracies = {1.0, 0.75};
  rec.auc_valid = false;
  report.records.push_back(rec);
  rec.model = "ensemble";
  rec.epsilon = 0.1;
  rec.auc = 0.625;
  rec.auc_valid = true;
  report.records.push_back(rec);

  const std::string csv = report.to_csv();
  CHECK(csv.find("model,epsilon,quantile,quantile_accuracy,overall_accuracy,auc") == 0);
  std::size_t rows = 0;
  for (char ch : csv) rows += ch == '\n' ? 1 : 0;
  CHECK(rows == 5);  // header + 2 records x 2 quantiles
  CHECK(csv.find("single,0,0.25,1,0.5,NA") != std::string::npos);
  CHECK(csv.find("ensemble,0.1,0.5,0.75,0.5,0.625") != std::string::npos);
  CHECK(report.to_csv() == csv);
}
