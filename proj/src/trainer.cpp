#include "quench/trainer.hpp"

#include <cmath>

#include "quench/alloc.hpp"
#include "quench/errors.hpp"

namespace quench {

void TrainConfig::validate() const {
  if (n_steps < 0) throw std::invalid_argument("TrainConfig: n_steps >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
  if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate > 0");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0 && adam_beta2 > 0.0 && adam_beta2 < 1.0))
    throw std::invalid_argument("TrainConfig: Adam betas must lie in (0,1)");
  if (adam_eps <= 0.0) throw std::invalid_argument("TrainConfig: adam_eps > 0");
  if (loss_log_every < 1) throw std::invalid_argument("TrainConfig: loss_log_every >= 1");
}

Standardizer Standardizer::identity(int dim) {
  return {Eigen::VectorXd::Zero(dim), 1.0};
}

Standardizer Standardizer::fit(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  Standardizer s;
  s.center = data.rowwise().mean();
  const double var =
      (data.colwise() - s.center.col(0)).squaredNorm() / static_cast<double>(data.size());
  s.scale = var > 0.0 ? std::sqrt(var) : 1.0;
  return s;
}

Eigen::MatrixXd Standardizer::apply(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  return (x.colwise() - center) / scale;
}

Eigen::MatrixXd Standardizer::invert(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  return (scale * x).colwise() + center;
}

double dsm_loss_and_grad(const ScoreNetwork& net, const DiffusionSchedule& schedule,
                         const Eigen::Ref<const Eigen::MatrixXd>& x0_batch,
                         const std::vector<int>& steps,
                         const Eigen::Ref<const Eigen::MatrixXd>& noise,
                         Eigen::VectorXd* grad, const Eigen::MatrixXd* embed_table) {
  const int n = net.arch().in_dim;
  const auto batch = static_cast<int>(x0_batch.cols());
  if (batch < 1) throw std::invalid_argument("dsm_loss_and_grad: empty batch");
  if (x0_batch.rows() != n || static_cast<int>(steps.size()) != batch ||
      noise.cols() != batch || noise.rows() != n)
    throw std::invalid_argument("dsm_loss_and_grad: shape mismatch");

  Eigen::MatrixXd x_t(n, batch);
  for (int c = 0; c < batch; ++c)
    x_t.col(c) = schedule.forward_sample(x0_batch.col(c), steps[c], noise.col(c));

  ad::Tape tape;
  ScoreNetwork::TapeParams tp = net.params_on_tape(tape);
  ad::Var x = tape.constant(x_t);
  ad::Var eps_hat;
  if (embed_table) {
    Eigen::MatrixXd emb(embed_table->rows(), batch);
    for (int c = 0; c < batch; ++c) emb.col(c) = embed_table->col(steps[c]);
    eps_hat = net.forward_on_tape_embedded(tape, x, emb, tp);
  } else {
    Eigen::VectorXd t_norms(batch);
    for (int c = 0; c < batch; ++c) t_norms[c] = schedule.t_norm(steps[c]);
    eps_hat = net.forward_on_tape_multi_t(tape, x, t_norms, tp);
  }
  ad::Var diff = tape.sub(tape.constant(noise), eps_hat);
  ad::Var loss = tape.scale(tape.sum_squares(diff), 1.0 / batch);

  const double loss_value = tape.scalar_value(loss);
  if (grad && std::isfinite(loss_value)) {
    tape.backward(loss);
    *grad = net.gather_param_grad(tape, tp);
  }
  return loss_value;
}

Eigen::MatrixXd build_embedding_table(int embed_dim, const DiffusionSchedule& schedule) {
  Eigen::MatrixXd table(embed_dim, schedule.steps() + 1);
  for (int i = 0; i <= schedule.steps(); ++i)
    table.col(i) = time_embedding(schedule.t_norm(i), embed_dim);
  return table;
}

double dsm_train_step(ScoreNetwork& net, const DiffusionSchedule& schedule,
                      const Eigen::Ref<const Eigen::MatrixXd>& x0_batch,
                      AdamState& adam, const TrainConfig& cfg, Rng& rng,
                      const Eigen::MatrixXd* embed_table) {
  const int n = net.arch().in_dim;
  const auto batch = static_cast<int>(x0_batch.cols());
  if (batch < 1) throw std::invalid_argument("dsm_train_step: empty batch");
  if (x0_batch.rows() != n) throw std::invalid_argument("dsm_train_step: dimension mismatch");
  const int t_max = schedule.steps();

  // Draw order is pinned: all timesteps first, then the noise matrix.
  std::vector<int> steps(batch);
  for (int c = 0; c < batch; ++c)
    steps[c] = 1 + static_cast<int>(rng.uniform_int(t_max));
  Eigen::MatrixXd noise = rng.normal_matrix(n, batch);

  Eigen::VectorXd grad;
  const double loss_value =
      dsm_loss_and_grad(net, schedule, x0_batch, steps, noise, &grad, embed_table);
  if (!std::isfinite(loss_value))
    throw NumericalError("dsm_train_step: non-finite loss " + std::to_string(loss_value) +
                         " at adam step " + std::to_string(adam.step + 1));

  adam.step += 1;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  adam.m = b1 * adam.m + (1.0 - b1) * grad;
  adam.v = b2 * adam.v + (1.0 - b2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
  Eigen::VectorXd update =
      (adam.m / bc1).array() / ((adam.v / bc2).array().sqrt() + cfg.adam_eps);
  Eigen::VectorXd p = net.params();
  p -= cfg.learning_rate * update;
  net.set_params(p);
  return loss_value;
}

TrainResult train(ScoreNetwork& net, const DiffusionSchedule& schedule,
                  const Eigen::Ref<const Eigen::MatrixXd>& dataset, const TrainConfig& cfg,
                  const TrainProgressFn& progress) {
  detail::tune_allocator();
  cfg.validate();
  const auto n_data = static_cast<std::uint64_t>(dataset.cols());
  if (dataset.cols() < cfg.batch_size)
    throw std::invalid_argument("train: dataset smaller than batch_size");
  TrainResult result;
  if (cfg.n_steps == 0) return result;

  AdamState adam = AdamState::zeros(net.param_count());
  Rng rng(cfg.seed);
  const Eigen::MatrixXd embed_table =
      build_embedding_table(net.arch().time_embed_dim, schedule);
  Eigen::MatrixXd batch(dataset.rows(), cfg.batch_size);
  double loss = 0.0;
  for (long step = 1; step <= cfg.n_steps; ++step) {
    for (int c = 0; c < cfg.batch_size; ++c)
      batch.col(c) = dataset.col(static_cast<Eigen::Index>(rng.uniform_int(n_data)));
    loss = dsm_train_step(net, schedule, batch, adam, cfg, rng, &embed_table);
    if (step % cfg.loss_log_every == 0) {
      result.loss_history.emplace_back(step, loss);
      if (progress) progress(step, loss);
    }
  }
  result.final_loss = loss;
  return result;
}

double dsm_batch_loss(const EpsModel& model, const DiffusionSchedule& schedule,
                      const Eigen::Ref<const Eigen::MatrixXd>& x0,
                      const std::vector<int>& steps,
                      const Eigen::Ref<const Eigen::MatrixXd>& noise) {
  const auto batch = static_cast<int>(x0.cols());
  if (batch == 0) throw std::invalid_argument("dsm_batch_loss: empty batch");
  if (static_cast<int>(steps.size()) != batch || noise.cols() != batch)
    throw std::invalid_argument("dsm_batch_loss: one step and noise column per sample");
  double acc = 0.0;
  Eigen::MatrixXd x_t(x0.rows(), 1);
  for (int c = 0; c < batch; ++c) {
    x_t.col(0) = schedule.forward_sample(x0.col(c), steps[c], noise.col(c));
    acc += (noise.col(c) - model.eps(x_t, schedule, steps[c]).col(0)).squaredNorm();
  }
  return acc / batch;
}

}  // namespace quench
