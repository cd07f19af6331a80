#include "quench/filters.hpp"

#include <cmath>
#include <stdexcept>

#include "quench/autodiff.hpp"
#include "quench/oracles.hpp"

namespace quench::filters {

double tvf(const Trajectory& traj, double t1, double t2, int t_total) {
  if (!(t1 < t2)) throw std::invalid_argument("tvf: need t1 < t2");
  std::vector<const Eigen::VectorXd*> window;
  for (std::size_t s = 0; s < traj.step_indices.size(); ++s) {
    const double t = static_cast<double>(traj.step_indices[s]) / t_total;
    if (t >= t1 && t <= t2) window.push_back(&traj.xhat0_series[s]);
  }
  if (window.size() < 2)
    throw std::invalid_argument("tvf: fewer than 2 retained steps in window");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(window.front()->size());
  for (const auto* v : window) mean += *v;
  mean /= static_cast<double>(window.size());
  double acc = 0.0;
  for (const auto* v : window) acc += (*v - mean).squaredNorm();
  return acc / static_cast<double>(window.size());
}

double lmi_generic(const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& generator,
                   const Eigen::Ref<const Eigen::VectorXd>& x_T, double beta,
                   int m_perturbations, Rng& rng) {
  if (beta <= 0.0) throw std::invalid_argument("lmi: beta > 0");
  if (m_perturbations < 2) throw std::invalid_argument("lmi: m >= 2");
  const int n = static_cast<int>(x_T.size());
  Eigen::MatrixXd inputs =
      beta * rng.normal_matrix(n, m_perturbations);
  inputs.colwise() += x_T.col(0);
  const Eigen::MatrixXd y = generator(inputs);
  const Eigen::VectorXd mean = y.rowwise().mean();
  return (y.colwise() - mean).squaredNorm() / static_cast<double>(m_perturbations - 1);
}

double lmi(const EpsModel& model, const DiffusionSchedule& schedule,
           const Eigen::Ref<const Eigen::VectorXd>& x_T, double beta, int m_perturbations,
           int gen_steps, Rng& rng) {
  auto gen = [&](const Eigen::MatrixXd& x) {
    return generate_deterministic_batch(model, schedule, x, gen_steps);
  };
  return lmi_generic(gen, x_T, beta, m_perturbations, rng);
}

double lid_dsm_with_noise(const EpsModel& model, const DiffusionSchedule& schedule,
                          const Eigen::Ref<const Eigen::VectorXd>& x0, int step,
                          const Eigen::Ref<const Eigen::MatrixXd>& noise) {
  const double ab = schedule.alpha_bar(step);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  const auto k = static_cast<int>(noise.cols());
  Eigen::MatrixXd x_t = (a * x0).replicate(1, k) + b * noise;
  Eigen::MatrixXd eps_hat = model.eps(x_t, schedule, step);
  return (noise - eps_hat).squaredNorm() / k;
}

double lid_dsm(const EpsModel& model, const DiffusionSchedule& schedule,
               const Eigen::Ref<const Eigen::VectorXd>& x0, int step, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("lid_dsm: k >= 1");
  return lid_dsm_with_noise(model, schedule, x0, step,
                            rng.normal_matrix(static_cast<int>(x0.size()), k));
}

double ism_with_noise(const EpsModel& model, const DiffusionSchedule& schedule,
                      const Eigen::Ref<const Eigen::VectorXd>& x0, int step,
                      const Eigen::Ref<const Eigen::MatrixXd>& noise) {
  const int n = static_cast<int>(x0.size());
  const double ab = schedule.alpha_bar(step);
  const double a = std::sqrt(ab);
  const double b2 = 1.0 - ab;
  const double b = std::sqrt(b2);
  const auto k = static_cast<int>(noise.cols());

  Eigen::MatrixXd x_t = (a * x0).replicate(1, k) + b * noise;
  ad::Tape tape;
  ad::Var x = tape.leaf(x_t);
  ad::Var eps_hat = model.eps_on_tape(tape, x, schedule, step);
  ad::Var score = tape.scale(eps_hat, -1.0 / b);

  // Exact Jacobian trace: one reverse pass per output component. Summing a
  // score row over the batch gives, per column j, the diagonal entry
  // ds_r/dx_r at x_tj, because columns never mix.
  Eigen::VectorXd traces = Eigen::VectorXd::Zero(k);
  for (int r = 0; r < n; ++r) {
    Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(n, k);
    selector.row(r).setOnes();
    ad::Var root = tape.weighted_sum(score, selector);
    tape.backward(root);
    traces += tape.adjoint(x).row(r).transpose();
  }

  const Eigen::MatrixXd& s = tape.value(score);
  double acc = 0.0;
  for (int j = 0; j < k; ++j)
    acc += b2 * traces[j] + 0.5 * b2 * s.col(j).squaredNorm();
  return acc / k;
}

double ism(const EpsModel& model, const DiffusionSchedule& schedule,
           const Eigen::Ref<const Eigen::VectorXd>& x0, int step, int k, Rng& rng) {
  if (k < 1) throw std::invalid_argument("ism: k >= 1");
  return ism_with_noise(model, schedule, x0, step,
                        rng.normal_matrix(static_cast<int>(x0.size()), k));
}

CollinearityResult collinearity_check(const EpsModel& model,
                                      const DiffusionSchedule& schedule,
                                      const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                      int step, int k, Rng& rng) {
  const int n = static_cast<int>(x_t.size());
  const Eigen::MatrixXd noise = rng.normal_matrix(n, k);

  const Eigen::VectorXd g_dsm =
      energy_with_noise(model, schedule, x_t, step, noise).grad;

  const double a = std::sqrt(schedule.alpha_bar(step));
  const double b = std::sqrt(schedule.sigma2(step));
  auto ism_at = [&](const Eigen::VectorXd& x) {
    const Eigen::VectorXd eps_hat = model.eps(x, schedule, step).col(0);
    const Eigen::VectorXd xhat0 = (x - b * eps_hat) / a;
    return ism_with_noise(model, schedule, xhat0, step, noise);
  };
  const Eigen::VectorXd g_ism = oracles::fd_gradient(ism_at, x_t);

  const double norm_dsm = g_dsm.norm();
  const double norm_ism = g_ism.norm();
  if (norm_dsm == 0.0 || norm_ism == 0.0)
    throw std::domain_error("collinearity_check: zero-norm gradient");
  return {g_dsm.dot(g_ism) / (norm_dsm * norm_ism), norm_dsm / norm_ism};
}

}  // namespace quench::filters
