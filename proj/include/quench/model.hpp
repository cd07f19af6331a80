#pragma once

#include <Eigen/Dense>

#include "quench/autodiff.hpp"
#include "quench/schedule.hpp"

namespace quench {

// Anything that predicts the forward noise eps given a noisy state and a
// schedule step. Trained networks and the closed-form reference models both
// implement this, so samplers, filters and estimators run the same code path
// against ground truth as against a checkpoint.
class EpsModel {
 public:
  virtual ~EpsModel() = default;

  virtual int dim() const = 0;

  // Batched prediction; x holds one state per column.
  virtual Eigen::MatrixXd eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const DiffusionSchedule& schedule, int step) const = 0;

  // True when eps_on_tape is available for input differentiation.
  virtual bool supports_tape() const { return false; }

  // Builds the prediction on a tape so gradients w.r.t. the input state can
  // be taken. Weights (if any) enter as constants.
  virtual ad::Var eps_on_tape(ad::Tape& tape, ad::Var x,
                              const DiffusionSchedule& schedule, int step) const;
};

// score = -eps / sqrt(1 - abar_i); rejects abar_i == 1 (noiseless endpoint).
Eigen::MatrixXd eps_to_score(const Eigen::Ref<const Eigen::MatrixXd>& eps,
                             const DiffusionSchedule& schedule, int step);
Eigen::MatrixXd score_to_eps(const Eigen::Ref<const Eigen::MatrixXd>& score,
                             const DiffusionSchedule& schedule, int step);

}  // namespace quench
