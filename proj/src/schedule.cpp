#include "quench/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace quench {

DiffusionSchedule::DiffusionSchedule(ScheduleKind kind, std::vector<double> betas,
                                     double bmin, double bmax)
    : kind_(kind), betas_(std::move(betas)), beta_min_(bmin), beta_max_(bmax) {
  alpha_bars_.resize(betas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0))
      throw std::invalid_argument("DiffusionSchedule: betas must lie in (0,1)");
    alpha_bars_[i + 1] = alpha_bars_[i] * (1.0 - betas_[i]);
  }
}

DiffusionSchedule DiffusionSchedule::make_linear(int steps, double beta_min,
                                                 double beta_max) {
  if (steps < 1) throw std::invalid_argument("make_linear: steps >= 1");
  if (!(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw std::invalid_argument("make_linear: need 0 < beta_min < beta_max < 1");
  std::vector<double> betas(steps);
  if (steps == 1) {
    betas[0] = beta_min;
  } else {
    for (int i = 0; i < steps; ++i)
      betas[i] = beta_min + (beta_max - beta_min) * static_cast<double>(i) / (steps - 1);
  }
  return DiffusionSchedule(ScheduleKind::kLinear, std::move(betas), beta_min, beta_max);
}

DiffusionSchedule DiffusionSchedule::make_cosine(int steps) {
  if (steps < 1) throw std::invalid_argument("make_cosine: steps >= 1");
  const double s = 0.008;
  auto f = [s](double u) {
    double c = std::cos((u + s) / (1.0 + s) * M_PI / 2.0);
    return c * c;
  };
  const double f0 = f(0.0);
  std::vector<double> betas(steps);
  double prev = 1.0;
  for (int i = 1; i <= steps; ++i) {
    double abar = f(static_cast<double>(i) / steps) / f0;
    double beta = 1.0 - abar / prev;
    beta = std::min(beta, 0.999);
    betas[i - 1] = beta;
    prev *= (1.0 - beta);
  }
  return DiffusionSchedule(ScheduleKind::kCosine, std::move(betas), 0.0, 0.0);
}

double DiffusionSchedule::beta(int i) const {
  if (i < 1 || i > steps()) throw std::out_of_range("beta: step index out of range");
  return betas_[i - 1];
}

double DiffusionSchedule::alpha_bar(int i) const {
  if (i < 0 || i > steps()) throw std::out_of_range("alpha_bar: step index out of range");
  return alpha_bars_[i];
}

Eigen::VectorXd DiffusionSchedule::forward_sample(
    const Eigen::Ref<const Eigen::VectorXd>& x0, int i,
    const Eigen::Ref<const Eigen::VectorXd>& eps) const {
  const double ab = alpha_bar(i);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::VectorXd DiffusionSchedule::tweedie_from_score(
    const Eigen::Ref<const Eigen::VectorXd>& x_t,
    const Eigen::Ref<const Eigen::VectorXd>& score, int i) const {
  const double ab = alpha_bar(i);
  if (ab <= 0.0) throw std::domain_error("tweedie_from_score: alpha_bar must be positive");
  return (x_t + (1.0 - ab) * score) / std::sqrt(ab);
}

Eigen::VectorXd DiffusionSchedule::tweedie_from_eps(
    const Eigen::Ref<const Eigen::VectorXd>& x_t,
    const Eigen::Ref<const Eigen::VectorXd>& eps_hat, int i) const {
  const double ab = alpha_bar(i);
  if (ab <= 0.0) throw std::domain_error("tweedie_from_eps: alpha_bar must be positive");
  return (x_t - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

std::string to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "cosine";
}

ScheduleKind schedule_kind_from_string(const std::string& s) {
  if (s == "linear") return ScheduleKind::kLinear;
  if (s == "cosine") return ScheduleKind::kCosine;
  throw std::invalid_argument("unknown schedule kind: " + s);
}

}  // namespace quench
