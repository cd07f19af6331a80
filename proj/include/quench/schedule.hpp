#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace quench {

enum class ScheduleKind { kLinear, kCosine };

// Discrete variance-preserving schedule. All the linear-Gaussian quantities
// of the forward kernel are scalar multiples of the identity here, exposed
// as scalars: H(i) = sqrt(abar_i), Sigma(i) = (1 - abar_i) I, Phi(i) = H(i).
// Step indices run 1..T; alpha_bar(0) = 1 is the noiseless endpoint and the
// normalized time of step i is i/T.
class DiffusionSchedule {
 public:
  static DiffusionSchedule make_linear(int steps, double beta_min, double beta_max);
  static DiffusionSchedule make_cosine(int steps);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int i) const;       // i in [1, T]
  double alpha_bar(int i) const;  // i in [0, T]
  double t_norm(int i) const { return static_cast<double>(i) / steps(); }

  double h(int i) const { return std::sqrt(alpha_bar(i)); }
  double sigma2(int i) const { return 1.0 - alpha_bar(i); }
  double phi(int i) const { return h(i); }

  // x_t = sqrt(abar_i) x0 + sqrt(1 - abar_i) eps; the caller owns the noise.
  Eigen::VectorXd forward_sample(const Eigen::Ref<const Eigen::VectorXd>& x0,
                                 int i,
                                 const Eigen::Ref<const Eigen::VectorXd>& eps) const;

  // Posterior mean of x0 given x_t, from the score or from the predicted noise.
  Eigen::VectorXd tweedie_from_score(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                     const Eigen::Ref<const Eigen::VectorXd>& score,
                                     int i) const;
  Eigen::VectorXd tweedie_from_eps(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                   const Eigen::Ref<const Eigen::VectorXd>& eps_hat,
                                   int i) const;

  ScheduleKind kind() const { return kind_; }
  double beta_min() const { return beta_min_; }
  double beta_max() const { return beta_max_; }

 private:
  DiffusionSchedule(ScheduleKind kind, std::vector<double> betas, double bmin, double bmax);

  ScheduleKind kind_;
  std::vector<double> betas_;       // beta_1 .. beta_T
  std::vector<double> alpha_bars_;  // abar_0 = 1, abar_1 .. abar_T
  double beta_min_ = 0.0;
  double beta_max_ = 0.0;
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& s);

}  // namespace quench
