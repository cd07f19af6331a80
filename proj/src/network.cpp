#include "quench/network.hpp"

#include <cmath>
#include <stdexcept>

#include "quench/math.hpp"
#include "quench/rng.hpp"

namespace quench {

void NetworkArch::validate() const {
  if (in_dim < 1 || hidden_dim < 1 || n_hidden_layers < 1 || time_embed_dim < 1)
    throw std::invalid_argument("NetworkArch: all dimensions must be >= 1");
  if (time_embed_dim % 2 != 0)
    throw std::invalid_argument("NetworkArch: time_embed_dim must be even");
}

Eigen::VectorXd time_embedding(double t, int dim) {
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("time_embedding: dim must be even and >= 2");
  Eigen::VectorXd e(dim);
  const int half = dim / 2;
  for (int j = 0; j < half; ++j) {
    const double omega = 1000.0 * std::pow(10000.0, -2.0 * j / dim);
    e[2 * j] = std::sin(omega * t);
    e[2 * j + 1] = std::cos(omega * t);
  }
  return e;
}

ad::Var EpsModel::eps_on_tape(ad::Tape&, ad::Var, const DiffusionSchedule&, int) const {
  throw std::logic_error("eps_on_tape: model is not differentiable on a tape");
}

Eigen::MatrixXd eps_to_score(const Eigen::Ref<const Eigen::MatrixXd>& eps,
                             const DiffusionSchedule& schedule, int step) {
  const double s2 = schedule.sigma2(step);
  if (s2 <= 0.0)
    throw std::domain_error("eps_to_score: alpha_bar == 1 at this step (division by zero)");
  return -eps / std::sqrt(s2);
}

Eigen::MatrixXd score_to_eps(const Eigen::Ref<const Eigen::MatrixXd>& score,
                             const DiffusionSchedule& schedule, int step) {
  return -std::sqrt(schedule.sigma2(step)) * score;
}

ScoreNetwork::ScoreNetwork(const NetworkArch& arch) : arch_(arch) {
  arch_.validate();
  build_layout_();
  int total = 0;
  for (const auto& e : layout_) total += e.rows * e.cols;
  params_ = Eigen::VectorXd::Zero(total);
}

void ScoreNetwork::build_layout_() {
  layout_.clear();
  int off = 0;
  auto push = [&](const std::string& name, int r, int c) {
    layout_.push_back({name, r, c, off});
    off += r * c;
  };
  push("W0", arch_.hidden_dim, arch_.in_dim);
  push("b0", arch_.hidden_dim, 1);
  push("P", arch_.hidden_dim, arch_.time_embed_dim);
  for (int l = 1; l < arch_.n_hidden_layers; ++l) {
    push("W" + std::to_string(l), arch_.hidden_dim, arch_.hidden_dim);
    push("b" + std::to_string(l), arch_.hidden_dim, 1);
  }
  push("Wout", arch_.in_dim, arch_.hidden_dim);
  push("bout", arch_.in_dim, 1);
}

ScoreNetwork ScoreNetwork::init(const NetworkArch& arch, std::uint64_t seed) {
  ScoreNetwork net(arch);
  net.init_seed_ = seed;
  Rng rng(seed);
  for (const auto& e : net.layout_) {
    if (e.name[0] == 'b') continue;  // biases stay zero
    const int fan_in = e.cols;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    // Column-major fill matches Eigen storage, so the draw order is pinned.
    for (int i = 0; i < e.rows * e.cols; ++i)
      net.params_[e.offset + i] = bound * (2.0 * rng.uniform() - 1.0);
  }
  return net;
}

void ScoreNetwork::set_params(const Eigen::VectorXd& p) {
  if (p.size() != params_.size())
    throw std::invalid_argument("set_params: length does not match layout");
  params_ = p;
}

Eigen::Map<const Eigen::MatrixXd> ScoreNetwork::block_(int index) const {
  const LayoutEntry& e = layout_[index];
  return {params_.data() + e.offset, e.rows, e.cols};
}

Eigen::MatrixXd ScoreNetwork::forward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                       double t_norm) const {
  if (x.rows() != arch_.in_dim)
    throw std::invalid_argument("forward: input dimension mismatch");
  auto W0 = block_(0);
  auto b0 = block_(1);
  auto P = block_(2);
  const Eigen::VectorXd shift = b0.col(0) + P * time_embedding(t_norm, arch_.time_embed_dim);
  // Pre-activations are materialized so the plain and tape paths see the
  // same operation sequence bit for bit.
  Eigen::MatrixXd h = (W0 * x).colwise() + shift;
  h = detail::tanh_expr(h.array());
  int idx = 3;
  for (int l = 1; l < arch_.n_hidden_layers; ++l, idx += 2) {
    Eigen::MatrixXd pre = (block_(idx) * h).colwise() + block_(idx + 1).col(0);
    h = detail::tanh_expr(pre.array());
  }
  return (block_(idx) * h).colwise() + block_(idx + 1).col(0);
}

Eigen::MatrixXd ScoreNetwork::forward_multi_t(
    const Eigen::Ref<const Eigen::MatrixXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& t_norms) const {
  if (x.rows() != arch_.in_dim)
    throw std::invalid_argument("forward_multi_t: input dimension mismatch");
  if (t_norms.size() != x.cols())
    throw std::invalid_argument("forward_multi_t: one timestep per column required");
  Eigen::MatrixXd emb(arch_.time_embed_dim, x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c)
    emb.col(c) = time_embedding(t_norms[c], arch_.time_embed_dim);
  auto W0 = block_(0);
  auto b0 = block_(1);
  auto P = block_(2);
  Eigen::MatrixXd pre = W0 * x;
  pre.noalias() += P * emb;
  pre.colwise() += b0.col(0);
  Eigen::MatrixXd h = detail::tanh_expr(pre.array());
  int idx = 3;
  for (int l = 1; l < arch_.n_hidden_layers; ++l, idx += 2) {
    pre.noalias() = block_(idx) * h;
    pre.colwise() += block_(idx + 1).col(0);
    h = detail::tanh_expr(pre.array());
  }
  return (block_(idx) * h).colwise() + block_(idx + 1).col(0);
}

Eigen::MatrixXd ScoreNetwork::eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  const DiffusionSchedule& schedule, int step) const {
  return forward(x, schedule.t_norm(step));
}

ad::Var ScoreNetwork::eps_on_tape(ad::Tape& tape, ad::Var x,
                                  const DiffusionSchedule& schedule, int step) const {
  const double t_norm = schedule.t_norm(step);
  auto W0 = block_(0);
  auto b0 = block_(1);
  auto P = block_(2);
  const Eigen::VectorXd shift = b0.col(0) + P * time_embedding(t_norm, arch_.time_embed_dim);
  ad::Var h = tape.tanh_affine(tape.constant(W0), x, tape.constant(shift));
  int idx = 3;
  for (int l = 1; l < arch_.n_hidden_layers; ++l, idx += 2)
    h = tape.tanh_affine(tape.constant(block_(idx)), h, tape.constant(block_(idx + 1)));
  return tape.add_colwise(tape.matmul(tape.constant(block_(idx)), h),
                          tape.constant(block_(idx + 1)));
}

ScoreNetwork::TapeParams ScoreNetwork::params_on_tape(ad::Tape& tape) const {
  TapeParams tp;
  tp.vars.reserve(layout_.size());
  for (std::size_t i = 0; i < layout_.size(); ++i)
    tp.vars.push_back(tape.leaf(block_(static_cast<int>(i))));
  return tp;
}

ad::Var ScoreNetwork::forward_on_tape_multi_t(
    ad::Tape& tape, ad::Var x, const Eigen::Ref<const Eigen::VectorXd>& t_norms,
    const TapeParams& tp) const {
  Eigen::MatrixXd emb(arch_.time_embed_dim, t_norms.size());
  for (Eigen::Index c = 0; c < t_norms.size(); ++c)
    emb.col(c) = time_embedding(t_norms[c], arch_.time_embed_dim);
  return forward_on_tape_embedded(tape, x, emb, tp);
}

ad::Var ScoreNetwork::forward_on_tape_embedded(
    ad::Tape& tape, ad::Var x, const Eigen::Ref<const Eigen::MatrixXd>& embed_cols,
    const TapeParams& tp) const {
  ad::Var pre = tape.add(tape.matmul(tp.vars[0], x),
                         tape.matmul(tp.vars[2], tape.constant(embed_cols)));
  ad::Var h = tape.tanh(tape.add_colwise(pre, tp.vars[1]));
  int idx = 3;
  for (int l = 1; l < arch_.n_hidden_layers; ++l, idx += 2)
    h = tape.tanh_affine(tp.vars[idx], h, tp.vars[idx + 1]);
  return tape.add_colwise(tape.matmul(tp.vars[idx], h), tp.vars[idx + 1]);
}

Eigen::VectorXd ScoreNetwork::gather_param_grad(const ad::Tape& tape,
                                                const TapeParams& tp) const {
  Eigen::VectorXd g(params_.size());
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    const LayoutEntry& e = layout_[i];
    const Eigen::MatrixXd& adj = tape.adjoint(tp.vars[i]);
    Eigen::Map<Eigen::MatrixXd>(g.data() + e.offset, e.rows, e.cols) = adj;
  }
  return g;
}

}  // namespace quench
