#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <utility>
#include <vector>

#include "quench/network.hpp"
#include "quench/rng.hpp"
#include "quench/schedule.hpp"

namespace quench {

struct TrainConfig {
  int n_steps = 20000;
  int batch_size = 512;
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int loss_log_every = 100;

  void validate() const;
};

struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static AdamState zeros(int n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }
};

// Affine map to zero mean / unit scale, fit on the training set and stored
// in the checkpoint so sampling can be inverted back to data space. A single
// scalar scale keeps the geometry (rotations, mode distances) intact.
struct Standardizer {
  Eigen::VectorXd center;
  double scale = 1.0;

  static Standardizer identity(int dim);
  static Standardizer fit(const Eigen::Ref<const Eigen::MatrixXd>& data);
  Eigen::MatrixXd apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
  Eigen::MatrixXd invert(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
};

// Batch DSM loss and its parameter gradient on a tape, with the timestep and
// noise draws injected. Shared by the training step and the gradient checks.
double dsm_loss_and_grad(const ScoreNetwork& net, const DiffusionSchedule& schedule,
                         const Eigen::Ref<const Eigen::MatrixXd>& x0_batch,
                         const std::vector<int>& steps,
                         const Eigen::Ref<const Eigen::MatrixXd>& noise,
                         Eigen::VectorXd* grad,
                         const Eigen::MatrixXd* embed_table = nullptr);

// One embedding column per schedule step (column i holds the embedding of
// normalized time i/T); the training loop reuses it across all steps.
Eigen::MatrixXd build_embedding_table(int embed_dim, const DiffusionSchedule& schedule);

// One DSM step: per sample draw i ~ U{1..T} and eps ~ N(0, I), form
// x_t = sqrt(abar_i) x0 + sqrt(1-abar_i) eps, take the mean squared noise
// residual over the batch and apply one Adam update. Throws NumericalError
// on a non-finite loss.
double dsm_train_step(ScoreNetwork& net, const DiffusionSchedule& schedule,
                      const Eigen::Ref<const Eigen::MatrixXd>& x0_batch,
                      AdamState& adam, const TrainConfig& cfg, Rng& rng,
                      const Eigen::MatrixXd* embed_table = nullptr);

struct TrainResult {
  std::vector<std::pair<long, double>> loss_history;
  double final_loss = 0.0;
};

using TrainProgressFn = std::function<void(long step, double loss)>;

TrainResult train(ScoreNetwork& net, const DiffusionSchedule& schedule,
                  const Eigen::Ref<const Eigen::MatrixXd>& dataset, const TrainConfig& cfg,
                  const TrainProgressFn& progress = {});

// Forward-only batch DSM loss with injected draws; lets closed-form models
// plug in as the prediction and keeps the test oracle independent of the
// training tape.
double dsm_batch_loss(const EpsModel& model, const DiffusionSchedule& schedule,
                      const Eigen::Ref<const Eigen::MatrixXd>& x0,
                      const std::vector<int>& steps,
                      const Eigen::Ref<const Eigen::MatrixXd>& noise);

}  // namespace quench
