#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "quench/autodiff.hpp"
#include "quench/model.hpp"

namespace quench {

struct NetworkArch {
  int in_dim = 2;
  int hidden_dim = 256;
  int n_hidden_layers = 3;
  int time_embed_dim = 256;

  void validate() const;
};

// Sinusoidal embedding of normalized time t in [0,1]. Frequencies follow the
// transformer convention on the integer timestep, i.e. omega_j =
// 1000 * 10000^(-2j/dim); components interleave as sin, cos. dim must be even.
Eigen::VectorXd time_embedding(double t, int dim);

// eps-prediction MLP with additive time conditioning on the first hidden
// pre-activation and a linear head:
//   h_0   = tanh(W0 x + b0 + P e(t))
//   h_l   = tanh(W_l h_{l-1} + b_l)
//   eps   = W_out h_last + b_out
// Parameters live in one flat vector with a fixed layout table; evaluation is
// a pure function of (params, x, t).
class ScoreNetwork : public EpsModel {
 public:
  struct LayoutEntry {
    std::string name;
    int rows = 0;
    int cols = 0;
    int offset = 0;
  };

  // References to per-parameter tape nodes, in layout order. Used by the
  // trainer, which needs parameters as leaves.
  struct TapeParams {
    std::vector<ad::Var> vars;
  };

  explicit ScoreNetwork(const NetworkArch& arch);  // zero-initialized params

  // Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero,
  // deterministic per seed.
  static ScoreNetwork init(const NetworkArch& arch, std::uint64_t seed);

  const NetworkArch& arch() const { return arch_; }
  std::uint64_t init_seed() const { return init_seed_; }
  const std::vector<LayoutEntry>& layout() const { return layout_; }
  int param_count() const { return static_cast<int>(params_.size()); }
  const Eigen::VectorXd& params() const { return params_; }
  void set_params(const Eigen::VectorXd& p);

  // Plain forward passes. Columns of x are independent states.
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, double t_norm) const;
  // Per-column normalized times (training draws a timestep per sample).
  Eigen::MatrixXd forward_multi_t(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& t_norms) const;

  // EpsModel interface.
  int dim() const override { return arch_.in_dim; }
  Eigen::MatrixXd eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                      const DiffusionSchedule& schedule, int step) const override;
  bool supports_tape() const override { return true; }
  ad::Var eps_on_tape(ad::Tape& tape, ad::Var x, const DiffusionSchedule& schedule,
                      int step) const override;

  // Training graph: parameters as leaves, one timestep per column of x.
  TapeParams params_on_tape(ad::Tape& tape) const;
  ad::Var forward_on_tape_multi_t(ad::Tape& tape, ad::Var x,
                                  const Eigen::Ref<const Eigen::VectorXd>& t_norms,
                                  const TapeParams& tp) const;
  // Same graph with the per-column time embeddings supplied by the caller
  // (the trainer precomputes one column per schedule step).
  ad::Var forward_on_tape_embedded(ad::Tape& tape, ad::Var x,
                                   const Eigen::Ref<const Eigen::MatrixXd>& embed_cols,
                                   const TapeParams& tp) const;
  // Flat gradient in layout order after a backward pass.
  Eigen::VectorXd gather_param_grad(const ad::Tape& tape, const TapeParams& tp) const;

 private:
  Eigen::Map<const Eigen::MatrixXd> block_(int index) const;
  void build_layout_();

  NetworkArch arch_;
  std::vector<LayoutEntry> layout_;
  Eigen::VectorXd params_;
  std::uint64_t init_seed_ = 0;
};

}  // namespace quench
