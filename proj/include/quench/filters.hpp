#pragma once

#include <Eigen/Dense>
#include <functional>

#include "quench/model.hpp"
#include "quench/rng.hpp"
#include "quench/sampler.hpp"
#include "quench/schedule.hpp"

namespace quench::filters {

// Trajectory variance over the window t1 <= i/T <= t2: mean squared deviation
// of the recorded posterior means from their window average. Needs at least
// two retained steps inside the window.
double tvf(const Trajectory& traj, double t1, double t2, int t_total);

// Local manifold instability: total variance (trace of the unbiased sample
// covariance) of the generator output under N(0, beta^2 I) input
// perturbations. The generic form takes any deterministic generator; the
// model form runs the strided deterministic sampler.
double lmi_generic(const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& generator,
                   const Eigen::Ref<const Eigen::VectorXd>& x_T, double beta,
                   int m_perturbations, Rng& rng);
double lmi(const EpsModel& model, const DiffusionSchedule& schedule,
           const Eigen::Ref<const Eigen::VectorXd>& x_T, double beta, int m_perturbations,
           int gen_steps, Rng& rng);

// DSM-based LID estimate at a data-space point:
// mean_j |eps_j - eps_theta(sqrt(abar) x0 + sqrt(1-abar) eps_j)|^2.
double lid_dsm(const EpsModel& model, const DiffusionSchedule& schedule,
               const Eigen::Ref<const Eigen::VectorXd>& x0, int step, int k, Rng& rng);
double lid_dsm_with_noise(const EpsModel& model, const DiffusionSchedule& schedule,
                          const Eigen::Ref<const Eigen::VectorXd>& x0, int step,
                          const Eigen::Ref<const Eigen::MatrixXd>& noise);

// ISM estimate with the exact Jacobian trace (one reverse pass per output
// component, so ambient dimension must stay small):
// mean_j [ (1-abar) tr(ds/dx)(x_tj) + 0.5 (1-abar) |s(x_tj)|^2 ].
double ism(const EpsModel& model, const DiffusionSchedule& schedule,
           const Eigen::Ref<const Eigen::VectorXd>& x0, int step, int k, Rng& rng);
double ism_with_noise(const EpsModel& model, const DiffusionSchedule& schedule,
                      const Eigen::Ref<const Eigen::VectorXd>& x0, int step,
                      const Eigen::Ref<const Eigen::MatrixXd>& noise);

// Compares the DSM energy gradient (reverse mode) against the ISM gradient
// (central differences of ism composed with the posterior mean), both with
// the same noise draws. Returns the cosine and |grad_dsm| / |grad_ism|.
struct CollinearityResult {
  double cosine = 0.0;
  double norm_ratio = 0.0;
};
CollinearityResult collinearity_check(const EpsModel& model,
                                      const DiffusionSchedule& schedule,
                                      const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                      int step, int k, Rng& rng);

}  // namespace quench::filters
