#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

namespace quench::metrics {

// Fraction of samples farther than 3 sigma from every mode.
double hallucination_ratio(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                           const Eigen::Ref<const Eigen::MatrixXd>& modes,
                           double sigma_mode);

// Per-sample hallucination labels under the same 3-sigma rule.
std::vector<bool> three_sigma_labels(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                                     const Eigen::Ref<const Eigen::MatrixXd>& modes,
                                     double sigma_mode);

// Wilson score interval for a binomial proportion at 95% confidence.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};
Interval wilson_interval_95(int successes, int trials);

struct MmdOptions {
  std::optional<double> bandwidth;  // median pairwise heuristic when absent
  bool unbiased = false;            // U-statistic variant (diagonal excluded)
  int max_samples = 0;              // 0 = no cap; otherwise strided subsample
};

// RBF-kernel maximum mean discrepancy between sample sets (columns are
// samples). Returns sqrt of the biased V-statistic by default, which is 0
// exactly for identical multisets. Rejects a degenerate pooled set where the
// median heuristic has no positive bandwidth.
double mmd(const Eigen::Ref<const Eigen::MatrixXd>& x,
           const Eigen::Ref<const Eigen::MatrixXd>& y, const MmdOptions& opts = {});

struct LabeledScore {
  double score = 0.0;
  bool hallucinated = false;
};

// Mann-Whitney formulation with midrank tie handling; higher score means
// hallucinated. Rejects single-class inputs.
double roc_auc(const std::vector<LabeledScore>& scores);

// Average precision: precision * delta-recall over descending thresholds,
// ties grouped. Rejects inputs without positives.
double pr_auc(const std::vector<LabeledScore>& scores);

// (mean_h - mean_c) / pooled std. Rejects zero pooled std or classes with
// fewer than two members.
double cohens_d(const std::vector<LabeledScore>& scores);

}  // namespace quench::metrics
