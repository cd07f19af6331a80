#include "quench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace quench::metrics {

double hallucination_ratio(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                           const Eigen::Ref<const Eigen::MatrixXd>& modes,
                           double sigma_mode) {
  if (samples.cols() == 0) throw std::invalid_argument("hallucination_ratio: empty sample set");
  if (modes.cols() == 0) throw std::invalid_argument("hallucination_ratio: need at least one mode");
  if (sigma_mode <= 0.0) throw std::invalid_argument("hallucination_ratio: sigma_mode > 0");
  const auto labels = three_sigma_labels(samples, modes, sigma_mode);
  const auto count = std::count(labels.begin(), labels.end(), true);
  return static_cast<double>(count) / static_cast<double>(labels.size());
}

std::vector<bool> three_sigma_labels(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                     const Eigen::Ref<const Eigen::MatrixXd>& modes,
                                     double sigma_mode) {
  const double thresh2 = 9.0 * sigma_mode * sigma_mode;
  std::vector<bool> labels(samples.cols());
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < modes.cols(); ++k)
      best = std::min(best, (samples.col(i) - modes.col(k)).squaredNorm());
    labels[i] = best > thresh2;
  }
  return labels;
}

Interval wilson_interval_95(int successes, int trials) {
  if (trials <= 0) throw std::invalid_argument("wilson_interval_95: trials > 0");
  const double z = 1.959963984540054;
  const double n = trials;
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  Interval out{std::max(0.0, center - half), std::min(1.0, center + half)};
  // The bound is exact at the extremes; rounding must not pull it inward.
  if (successes == 0) out.lo = 0.0;
  if (successes == trials) out.hi = 1.0;
  return out;
}

namespace {

Eigen::MatrixXd strided_subsample(const Eigen::Ref<const Eigen::MatrixXd>& x, int cap) {
  if (cap <= 0 || x.cols() <= cap) return x;
  Eigen::MatrixXd out(x.rows(), cap);
  for (int i = 0; i < cap; ++i) {
    const auto idx = static_cast<Eigen::Index>(
        static_cast<double>(i) * static_cast<double>(x.cols()) / cap);
    out.col(i) = x.col(idx);
  }
  return out;
}

double median_pairwise_distance(const Eigen::MatrixXd& pooled) {
  const Eigen::Index m = pooled.cols();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j)
      d.push_back((pooled.col(i) - pooled.col(j)).norm());
  if (d.empty()) throw std::invalid_argument("mmd: not enough samples for the bandwidth heuristic");
  std::nth_element(d.begin(), d.begin() + (d.size() - 1) / 2, d.end());
  return d[(d.size() - 1) / 2];
}

// Mean RBF kernel value over all ordered pairs (V-statistic) or all
// off-diagonal pairs (U-statistic).
double mean_kernel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double gamma,
                   bool exclude_diagonal) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      if (exclude_diagonal && i == j) continue;
      acc += std::exp(-gamma * (a.col(i) - b.col(j)).squaredNorm());
    }
  const double pairs = exclude_diagonal
                           ? static_cast<double>(a.cols()) * (b.cols() - 1)
                           : static_cast<double>(a.cols()) * b.cols();
  return acc / pairs;
}

}  // namespace

namespace {
// Canonical argument order (by size, then lexicographic on the data) so the
// floating-point summation order, and hence the result, is symmetric in
// (x, y) exactly.
bool canonical_before(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return true;
}
}  // namespace

double mmd(const Eigen::Ref<const Eigen::MatrixXd>& x,
           const Eigen::Ref<const Eigen::MatrixXd>& y, const MmdOptions& opts) {
  if (x.cols() < 2 || y.cols() < 2) throw std::invalid_argument("mmd: need >= 2 samples per set");
  if (x.rows() != y.rows()) throw std::invalid_argument("mmd: dimension mismatch");
  Eigen::MatrixXd xs = strided_subsample(x, opts.max_samples);
  Eigen::MatrixXd ys = strided_subsample(y, opts.max_samples);
  if (!canonical_before(xs, ys)) xs.swap(ys);

  double h;
  if (opts.bandwidth) {
    h = *opts.bandwidth;
  } else {
    Eigen::MatrixXd pooled(xs.rows(), xs.cols() + ys.cols());
    pooled << xs, ys;
    h = median_pairwise_distance(pooled);
  }
  if (!(h > 0.0))
    throw std::invalid_argument("mmd: degenerate pooled set, bandwidth undefined");
  const double gamma = 1.0 / (2.0 * h * h);

  const double xx = mean_kernel(xs, xs, gamma, opts.unbiased);
  const double yy = mean_kernel(ys, ys, gamma, opts.unbiased);
  const double xy = mean_kernel(xs, ys, gamma, false);
  const double m2 = xx + yy - 2.0 * xy;
  return std::sqrt(std::max(0.0, m2));
}

namespace {
void require_both_classes(const std::vector<LabeledScore>& scores, const char* who) {
  bool pos = false, neg = false;
  for (const auto& s : scores) (s.hallucinated ? pos : neg) = true;
  if (!pos || !neg)
    throw std::invalid_argument(std::string(who) + ": both classes must be present");
}
}  // namespace

double roc_auc(const std::vector<LabeledScore>& scores) {
  require_both_classes(scores, "roc_auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].score < scores[b].score; });
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]].score == scores[order[i]].score) ++j;
    const double mid = 0.5 * ((i + 1) + (j + 1));  // midrank, 1-based
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }
  double w = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t k = 0; k < n; ++k)
    if (scores[k].hallucinated) {
      w += rank[k];
      ++n_pos;
    }
  const std::size_t n_neg = n - n_pos;
  return (w - 0.5 * n_pos * (n_pos + 1)) / (static_cast<double>(n_pos) * n_neg);
}

double pr_auc(const std::vector<LabeledScore>& scores) {
  std::size_t n_pos = 0;
  for (const auto& s : scores) n_pos += s.hallucinated ? 1 : 0;
  if (n_pos == 0) throw std::invalid_argument("pr_auc: at least one positive required");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].score > scores[b].score; });
  double ap = 0.0;
  std::size_t tp = 0, seen = 0;
  std::size_t i = 0;
  const std::size_t n = scores.size();
  while (i < n) {
    std::size_t j = i;
    std::size_t group_tp = scores[order[i]].hallucinated ? 1 : 0;
    while (j + 1 < n && scores[order[j + 1]].score == scores[order[i]].score) {
      ++j;
      group_tp += scores[order[j]].hallucinated ? 1 : 0;
    }
    const std::size_t group_size = j - i + 1;
    tp += group_tp;
    seen += group_size;
    const double precision = static_cast<double>(tp) / seen;
    const double delta_recall = static_cast<double>(group_tp) / n_pos;
    ap += precision * delta_recall;
    i = j + 1;
  }
  return ap;
}

double cohens_d(const std::vector<LabeledScore>& scores) {
  double sum_h = 0, sum_c = 0;
  std::size_t n_h = 0, n_c = 0;
  for (const auto& s : scores) {
    if (s.hallucinated) {
      sum_h += s.score;
      ++n_h;
    } else {
      sum_c += s.score;
      ++n_c;
    }
  }
  if (n_h < 2 || n_c < 2)
    throw std::invalid_argument("cohens_d: both classes need >= 2 members");
  const double mean_h = sum_h / n_h;
  const double mean_c = sum_c / n_c;
  double ss_h = 0, ss_c = 0;
  for (const auto& s : scores) {
    if (s.hallucinated)
      ss_h += (s.score - mean_h) * (s.score - mean_h);
    else
      ss_c += (s.score - mean_c) * (s.score - mean_c);
  }
  const double pooled = std::sqrt((ss_h + ss_c) / static_cast<double>(n_h + n_c - 2));
  if (pooled == 0.0) throw std::invalid_argument("cohens_d: zero pooled std");
  return (mean_h - mean_c) / pooled;
}

}  // namespace quench::metrics
