#pragma once

#include <Eigen/Dense>
#include <functional>

#include "quench/model.hpp"
#include "quench/schedule.hpp"

namespace quench::oracles {

// Isotropic Gaussian mixture with shared per-mode std. Under the VP kernel
// the diffused density at step i stays a mixture with component covariance
// (abar * sigma^2 + 1 - abar) I, so the score has a closed softmax form.
struct GMMOracle {
  Eigen::VectorXd weights;  // K, positive, sums to 1
  Eigen::MatrixXd means;    // n x K
  double sigma_mode = 0.05;

  void validate() const;
  int dim() const { return static_cast<int>(means.rows()); }
  int modes() const { return static_cast<int>(means.cols()); }

  double log_density(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                     const DiffusionSchedule& schedule, int step) const;
  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                        const DiffusionSchedule& schedule, int step) const;
  Eigen::MatrixXd score_batch(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                              const DiffusionSchedule& schedule, int step) const;
};

// Zero-mean Gaussian supported on a d-dimensional subspace: x = U (s .* z).
// The diffused covariance is C = abar U S^2 U' + (1-abar) I; the score
// -C^{-1} x is evaluated through the d-dimensional Woodbury form, which stays
// well conditioned when 1-abar is tiny.
struct SubspaceGaussianOracle {
  int n = 2;
  int d = 1;
  Eigen::MatrixXd basis;        // n x d, orthonormal columns
  Eigen::VectorXd latent_stds;  // d

  void validate() const;

  Eigen::VectorXd score(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                        const DiffusionSchedule& schedule, int step) const;
  Eigen::MatrixXd score_batch(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                              const DiffusionSchedule& schedule, int step) const;

  // Exact E[L_DSM] at step i for an on-manifold point: tr(B'B) with
  // B = I - (1-abar) C^{-1} the linear residual map. The optional point term
  // a^2 b^2 |C^{-1} x0|^2 is added by the _at variant.
  double closed_form_lid_expectation(const DiffusionSchedule& schedule, int step) const;
  double closed_form_lid_expectation_at(const Eigen::Ref<const Eigen::VectorXd>& x0,
                                        const DiffusionSchedule& schedule, int step) const;
  // Exact E[L_ISM] at a point, from the trace and expected-norm terms.
  // Satisfies E[L_DSM] = n + 2 E[L_ISM] algebraically.
  double closed_form_ism_expectation_at(const Eigen::Ref<const Eigen::VectorXd>& x0,
                                        const DiffusionSchedule& schedule, int step) const;
};

// Explicit linear map used as a generator stand-in, with its SVD as the
// reference spectrum.
struct LinearGenerator {
  Eigen::MatrixXd a;  // n x n

  int dim() const { return static_cast<int>(a.rows()); }
  Eigen::VectorXd singular_values() const;
  double frobenius_sq() const { return a.squaredNorm(); }
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const { return a * x; }
};

// beta^2 |A|_F^2, the exact total output variance of x -> A x under
// N(0, beta^2 I) input perturbations.
double linear_lmi_closed_form(const LinearGenerator& gen, double beta);

// Central differences with per-coordinate step h * (1 + |x_i|).
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::Ref<const Eigen::VectorXd>& x, double h = 1e-5);

// Drop-in eps-prediction adapters so every estimator runs unchanged against
// ground truth: eps_hat = -sqrt(1 - abar) * score.
class GmmEpsModel : public EpsModel {
 public:
  explicit GmmEpsModel(GMMOracle oracle);
  int dim() const override { return oracle_.dim(); }
  Eigen::MatrixXd eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const DiffusionSchedule& schedule, int step) const override;
  // Single-mode mixtures have an affine score, so they can go on a tape.
  bool supports_tape() const override { return oracle_.modes() == 1; }
  ad::Var eps_on_tape(ad::Tape& tape, ad::Var x, const DiffusionSchedule& schedule,
                      int step) const override;
  const GMMOracle& oracle() const { return oracle_; }

 private:
  GMMOracle oracle_;
};

class SubspaceEpsModel : public EpsModel {
 public:
  explicit SubspaceEpsModel(SubspaceGaussianOracle oracle);
  int dim() const override { return oracle_.n; }
  Eigen::MatrixXd eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const DiffusionSchedule& schedule, int step) const override;
  bool supports_tape() const override { return true; }
  ad::Var eps_on_tape(ad::Tape& tape, ad::Var x, const DiffusionSchedule& schedule,
                      int step) const override;
  const SubspaceGaussianOracle& oracle() const { return oracle_; }

 private:
  SubspaceGaussianOracle oracle_;
};

}  // namespace quench::oracles
