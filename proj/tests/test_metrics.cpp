#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "quench/metrics.hpp"
#include "quench/rng.hpp"

using namespace quench;
using namespace quench::metrics;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("hallucination ratio basics") {
  MatrixXd modes(2, 2);
  modes.col(0) = Eigen::Vector2d(0, 0);
  modes.col(1) = Eigen::Vector2d(1, 0);

  MatrixXd at_modes(2, 4);
  at_modes << 0, 1, 0, 1, 0, 0, 0, 0;
  CHECK(hallucination_ratio(at_modes, modes, 0.05) == 0.0);

  MatrixXd one_out = at_modes;
  one_out.col(3) = Eigen::Vector2d(0.5, 0.0);  // 10 sigma from both modes
  CHECK(hallucination_ratio(one_out, modes, 0.05) == doctest::Approx(0.25));

  CHECK_THROWS_AS(hallucination_ratio(MatrixXd(2, 0), modes, 0.05),
                  std::invalid_argument);
}

TEST_CASE("hallucination ratio is translation invariant") {
  Rng rng(1);
  MatrixXd modes = rng.normal_matrix(2, 5);
  MatrixXd samples = rng.normal_matrix(2, 100);
  const double base = hallucination_ratio(samples, modes, 0.3);
  const Eigen::Vector2d shift(12.5, -3.75);
  CHECK(hallucination_ratio(samples.colwise() + shift, modes.colwise() + shift, 0.3) ==
        base);
}

TEST_CASE("wilson interval brackets the point estimate") {
  const auto ci = wilson_interval_95(20, 100);
  CHECK(ci.lo < 0.2);
  CHECK(ci.hi > 0.2);
  CHECK(ci.lo >= 0.0);
  CHECK(ci.hi <= 1.0);
  const auto zero = wilson_interval_95(0, 50);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi > 0.0);
}

TEST_CASE("mmd of identical multisets is exactly zero") {
  Rng rng(2);
  const MatrixXd x = rng.normal_matrix(2, 64);
  CHECK(mmd(x, x) == 0.0);
}

TEST_CASE("mmd is symmetric and permutation invariant") {
  Rng rng(3);
  const MatrixXd x = rng.normal_matrix(2, 40);
  const MatrixXd y = rng.normal_matrix(2, 50).colwise() + Eigen::Vector2d(0.5, 0);
  CHECK(mmd(x, y) == mmd(y, x));

  MatrixXd xp = x;
  xp.col(0).swap(xp.col(17));
  xp.col(3).swap(xp.col(21));
  CHECK(mmd(xp, y) == doctest::Approx(mmd(x, y)).epsilon(1e-14));
}

TEST_CASE("mmd separates far-apart distributions") {
  Rng rng(4);
  const MatrixXd x = rng.normal_matrix(2, 1000);
  const MatrixXd y = rng.normal_matrix(2, 1000).colwise() + Eigen::Vector2d(10, 10);
  CHECK(mmd(x, y) > 0.5);
}

TEST_CASE("mmd rejects a degenerate pooled set") {
  const MatrixXd x = MatrixXd::Zero(2, 8);
  CHECK_THROWS_AS(mmd(x, x), std::invalid_argument);
}

TEST_CASE("unbiased mmd and explicit bandwidth options") {
  Rng rng(5);
  const MatrixXd x = rng.normal_matrix(2, 30);
  const MatrixXd y = rng.normal_matrix(2, 30);
  MmdOptions opts;
  opts.unbiased = true;
  CHECK(std::isfinite(mmd(x, y, opts)));
  opts.unbiased = false;
  opts.bandwidth = 1.0;
  CHECK(mmd(x, y, opts) >= 0.0);
  opts.max_samples = 10;
  CHECK(std::isfinite(mmd(x, y, opts)));
}

namespace {
std::vector<LabeledScore> four_point() {
  return {{0.1, false}, {0.2, true}, {0.3, false}, {0.4, true}};
}
}  // namespace

TEST_CASE("roc auc basics") {
  std::vector<LabeledScore> separated = {{1.0, false}, {2.0, false}, {5.0, true},
                                         {6.0, true}};
  CHECK(roc_auc(separated) == 1.0);

  std::vector<LabeledScore> ties = {{3.0, false}, {3.0, true}, {3.0, false}, {3.0, true}};
  CHECK(roc_auc(ties) == 0.5);

  CHECK(roc_auc(four_point()) == doctest::Approx(0.75));

  std::vector<LabeledScore> single = {{1.0, true}, {2.0, true}};
  CHECK_THROWS_AS(roc_auc(single), std::invalid_argument);
}

TEST_CASE("roc auc is invariant under strictly increasing transforms") {
  Rng rng(6);
  std::vector<LabeledScore> scores;
  for (int i = 0; i < 200; ++i)
    scores.push_back({rng.normal(), rng.uniform() < 0.3});
  const double base = roc_auc(scores);
  auto mapped = scores;
  for (auto& s : mapped) s.score = std::exp(2.0 * s.score + 1.0);
  CHECK(roc_auc(mapped) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("pr auc basics") {
  std::vector<LabeledScore> best = {{5.0, true}, {4.0, true}, {1.0, false}, {0.5, false}};
  CHECK(pr_auc(best) == 1.0);

  std::vector<LabeledScore> single_top = {{9.0, true}, {1.0, false}, {0.5, false}};
  CHECK(pr_auc(single_top) == 1.0);

  std::vector<LabeledScore> none = {{1.0, false}, {2.0, false}};
  CHECK_THROWS_AS(pr_auc(none), std::invalid_argument);
}

TEST_CASE("pr auc of random scores approaches the positive rate") {
  Rng rng(7);
  const double p = 0.3;
  std::vector<LabeledScore> scores;
  for (int i = 0; i < 20000; ++i)
    scores.push_back({rng.normal(), rng.uniform() < p});
  CHECK(pr_auc(scores) == doctest::Approx(p).epsilon(0.1));
}

TEST_CASE("cohens d basics") {
  std::vector<LabeledScore> equal = {{1.0, true}, {3.0, true}, {1.0, false}, {3.0, false}};
  CHECK(cohens_d(equal) == 0.0);

  std::vector<LabeledScore> degenerate = {{2.0, true}, {2.0, true}, {0.0, false},
                                          {0.0, false}};
  CHECK_THROWS_AS(cohens_d(degenerate), std::invalid_argument);

  // h = {1,3}, c = {0,2}: means 2 and 1, pooled std sqrt(2).
  std::vector<LabeledScore> hand = {{1.0, true}, {3.0, true}, {0.0, false}, {2.0, false}};
  CHECK(cohens_d(hand) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  auto flipped = hand;
  for (auto& s : flipped) s.hallucinated = !s.hallucinated;
  CHECK(cohens_d(flipped) == doctest::Approx(-cohens_d(hand)).epsilon(1e-12));
}
