#include "quench/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace quench::oracles {

void GMMOracle::validate() const {
  if (weights.size() == 0 || means.cols() != weights.size())
    throw std::invalid_argument("GMMOracle: one weight per mode required");
  if (sigma_mode <= 0.0) throw std::invalid_argument("GMMOracle: sigma_mode > 0");
  if ((weights.array() <= 0.0).any())
    throw std::invalid_argument("GMMOracle: weights must be positive");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw std::invalid_argument("GMMOracle: weights must sum to 1");
}

namespace {
// Per-mode log weights and squared distances for the diffused mixture.
// Returns v = abar sigma^2 + (1 - abar), the component variance.
double diffused_variance(const GMMOracle& o, const DiffusionSchedule& s, int step) {
  const double ab = s.alpha_bar(step);
  return ab * o.sigma_mode * o.sigma_mode + (1.0 - ab);
}
}  // namespace

double GMMOracle::log_density(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                              const DiffusionSchedule& schedule, int step) const {
  const double ab = schedule.alpha_bar(step);
  const double v = diffused_variance(*this, schedule, step);
  const double sa = std::sqrt(ab);
  const int n = dim();
  Eigen::VectorXd logp(modes());
  for (int k = 0; k < modes(); ++k) {
    const double d2 = (x_t - sa * means.col(k)).squaredNorm();
    logp[k] = std::log(weights[k]) - 0.5 * d2 / v;
  }
  const double m = logp.maxCoeff();
  const double lse = m + std::log((logp.array() - m).exp().sum());
  return lse - 0.5 * n * std::log(2.0 * M_PI * v);
}

Eigen::VectorXd GMMOracle::score(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                 const DiffusionSchedule& schedule, int step) const {
  return score_batch(x_t, schedule, step).col(0);
}

Eigen::MatrixXd GMMOracle::score_batch(const Eigen::Ref<const Eigen::MatrixXd>& x_t,
                                       const DiffusionSchedule& schedule, int step) const {
  const double ab = schedule.alpha_bar(step);
  const double v = diffused_variance(*this, schedule, step);
  const double sa = std::sqrt(ab);
  const Eigen::Index cols = x_t.cols();

  // Responsibilities via log-sum-exp over modes, vectorized over columns.
  Eigen::MatrixXd logits(modes(), cols);
  for (int k = 0; k < modes(); ++k) {
    logits.row(k) = (x_t.colwise() - sa * means.col(k)).colwise().squaredNorm();
    logits.row(k) = (-0.5 / v) * logits.row(k).array() + std::log(weights[k]);
  }
  Eigen::RowVectorXd mx = logits.colwise().maxCoeff();
  Eigen::MatrixXd gamma = (logits.rowwise() - mx).array().exp();
  Eigen::RowVectorXd denom = gamma.colwise().sum();
  gamma.array().rowwise() /= denom.array();

  // score = (sum_k gamma_k sqrt(abar) mu_k - x) / v
  Eigen::MatrixXd s = sa * (means * gamma);
  s -= x_t;
  s /= v;
  return s;
}

void SubspaceGaussianOracle::validate() const {
  if (d < 0 || d > n) throw std::invalid_argument("SubspaceGaussianOracle: need 0 <= d <= n");
  if (basis.rows() != n || basis.cols() != d)
    throw std::invalid_argument("SubspaceGaussianOracle: basis must be n x d");
  if (latent_stds.size() != d)
    throw std::invalid_argument("SubspaceGaussianOracle: one std per latent dim");
  if (d > 0) {
    Eigen::MatrixXd gram = basis.transpose() * basis;
    if ((gram - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("SubspaceGaussianOracle: basis not orthonormal");
  }
}

Eigen::VectorXd SubspaceGaussianOracle::score(const Eigen::Ref<const Eigen::VectorXd>& x_t,
                                              const DiffusionSchedule& schedule,
                                              int step) const {
  return score_batch(x_t, schedule, step).col(0);
}

Eigen::MatrixXd SubspaceGaussianOracle::score_batch(
    const Eigen::Ref<const Eigen::MatrixXd>& x_t, const DiffusionSchedule& schedule,
    int step) const {
  const double ab = schedule.alpha_bar(step);
  const double b2 = 1.0 - ab;
  if (b2 <= 0.0)
    throw std::domain_error("SubspaceGaussianOracle: singular covariance at abar == 1");
  // C^{-1} = (1/b2) [I - U diag(w) U'], w_j = abar s_j^2 / (abar s_j^2 + b2)
  if (d == 0) return -x_t / b2;
  Eigen::VectorXd w(d);
  for (int j = 0; j < d; ++j) {
    const double as2 = ab * latent_stds[j] * latent_stds[j];
    w[j] = as2 / (as2 + b2);
  }
  Eigen::MatrixXd proj = basis * w.asDiagonal() * (basis.transpose() * x_t);
  return -(x_t - proj) / b2;
}

double SubspaceGaussianOracle::closed_form_lid_expectation(
    const DiffusionSchedule& schedule, int step) const {
  // Eigenvalues of C: abar s_j^2 + b2 on the subspace, b2 off it, so
  // B = I - b2 C^{-1} has eigenvalues abar s_j^2 / (abar s_j^2 + b2) on the
  // subspace and exactly 0 off it. tr(B'B) is the sum of their squares.
  const double ab = schedule.alpha_bar(step);
  const double b2 = 1.0 - ab;
  double acc = 0.0;
  for (int j = 0; j < d; ++j) {
    const double as2 = ab * latent_stds[j] * latent_stds[j];
    const double lam = as2 / (as2 + b2);
    acc += lam * lam;
  }
  return acc;
}

double SubspaceGaussianOracle::closed_form_lid_expectation_at(
    const Eigen::Ref<const Eigen::VectorXd>& x0, const DiffusionSchedule& schedule,
    int step) const {
  const double ab = schedule.alpha_bar(step);
  const double b2 = 1.0 - ab;
  const Eigen::VectorXd cinv_x0 = -score(x0, schedule, step);  // C^{-1} x0
  return closed_form_lid_expectation(schedule, step) + ab * b2 * cinv_x0.squaredNorm();
}

double SubspaceGaussianOracle::closed_form_ism_expectation_at(
    const Eigen::Ref<const Eigen::VectorXd>& x0, const DiffusionSchedule& schedule,
    int step) const {
  const double ab = schedule.alpha_bar(step);
  const double b2 = 1.0 - ab;
  // tr C^{-1} and tr C^{-2} from the eigenvalues.
  double tr1 = static_cast<double>(n - d) / b2;
  double tr2 = static_cast<double>(n - d) / (b2 * b2);
  for (int j = 0; j < d; ++j) {
    const double lam = ab * latent_stds[j] * latent_stds[j] + b2;
    tr1 += 1.0 / lam;
    tr2 += 1.0 / (lam * lam);
  }
  const Eigen::VectorXd cinv_x0 = -score(x0, schedule, step);
  return -b2 * tr1 + 0.5 * (ab * b2 * cinv_x0.squaredNorm() + b2 * b2 * tr2);
}

Eigen::VectorXd LinearGenerator::singular_values() const {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues();
}

double linear_lmi_closed_form(const LinearGenerator& gen, double beta) {
  return beta * beta * gen.frobenius_sq();
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::Ref<const Eigen::VectorXd>& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double step = h * (1.0 + std::abs(x[i]));
    xp[i] = x[i] + step;
    const double fp = f(xp);
    xp[i] = x[i] - step;
    const double fm = f(xp);
    xp[i] = x[i];
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::domain_error("fd_gradient: non-finite function value");
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

GmmEpsModel::GmmEpsModel(GMMOracle oracle) : oracle_(std::move(oracle)) {
  oracle_.validate();
}

Eigen::MatrixXd GmmEpsModel::eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                 const DiffusionSchedule& schedule, int step) const {
  const double b = std::sqrt(schedule.sigma2(step));
  return -b * oracle_.score_batch(x, schedule, step);
}

ad::Var GmmEpsModel::eps_on_tape(ad::Tape& tape, ad::Var x,
                                 const DiffusionSchedule& schedule, int step) const {
  if (oracle_.modes() != 1)
    throw std::logic_error("GmmEpsModel: only single-mode mixtures are affine");
  // eps_hat = (b/v) x - (sqrt(abar) b / v) mu
  const double ab = schedule.alpha_bar(step);
  const double b = std::sqrt(1.0 - ab);
  const double v = ab * oracle_.sigma_mode * oracle_.sigma_mode + (1.0 - ab);
  Eigen::MatrixXd m = (b / v) * Eigen::MatrixXd::Identity(oracle_.dim(), oracle_.dim());
  Eigen::VectorXd c = -(std::sqrt(ab) * b / v) * oracle_.means.col(0);
  return tape.add_colwise(tape.matmul(tape.constant(m), x), tape.constant(c));
}

SubspaceEpsModel::SubspaceEpsModel(SubspaceGaussianOracle oracle)
    : oracle_(std::move(oracle)) {
  oracle_.validate();
}

Eigen::MatrixXd SubspaceEpsModel::eps(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const DiffusionSchedule& schedule, int step) const {
  const double b = std::sqrt(schedule.sigma2(step));
  return -b * oracle_.score_batch(x, schedule, step);
}

ad::Var SubspaceEpsModel::eps_on_tape(ad::Tape& tape, ad::Var x,
                                      const DiffusionSchedule& schedule, int step) const {
  // eps_hat = b C^{-1} x, a constant matrix per step.
  const double ab = schedule.alpha_bar(step);
  const double b2 = 1.0 - ab;
  const double b = std::sqrt(b2);
  const int n = oracle_.n;
  Eigen::MatrixXd cinv = Eigen::MatrixXd::Identity(n, n);
  for (int j = 0; j < oracle_.d; ++j) {
    const double as2 = ab * oracle_.latent_stds[j] * oracle_.latent_stds[j];
    cinv -= (as2 / (as2 + b2)) * oracle_.basis.col(j) * oracle_.basis.col(j).transpose();
  }
  cinv *= b / b2;
  return tape.matmul(tape.constant(cinv), x);
}

}  // namespace quench::oracles
