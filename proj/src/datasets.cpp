#include "quench/datasets.hpp"

#include <stdexcept>

#include "quench/rng.hpp"

namespace quench::datasets {

void GaussianGridSpec::validate() const {
  if (modes_per_side < 1) throw std::invalid_argument("GaussianGridSpec: modes_per_side >= 1");
  if (spacing <= 0.0) throw std::invalid_argument("GaussianGridSpec: spacing must be positive");
  if (sigma_mode <= 0.0) throw std::invalid_argument("GaussianGridSpec: sigma_mode must be positive");
}

Eigen::MatrixXd gaussian_grid_modes(const GaussianGridSpec& spec) {
  spec.validate();
  const int m = spec.modes_per_side;
  Eigen::Matrix2d rot;
  rot << std::cos(spec.rotation_angle), -std::sin(spec.rotation_angle),
         std::sin(spec.rotation_angle), std::cos(spec.rotation_angle);
  Eigen::MatrixXd modes(2, m * m);
  const double offset = 0.5 * (m - 1);
  int idx = 0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      Eigen::Vector2d p((i - offset) * spec.spacing, (j - offset) * spec.spacing);
      modes.col(idx++) = rot * p;
    }
  return modes;
}

GaussianGridData gen_gaussian_grid(const GaussianGridSpec& spec, int n_samples,
                                   std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("gen_gaussian_grid: n_samples >= 1");
  GaussianGridData out;
  out.modes = gaussian_grid_modes(spec);
  out.samples.resize(2, n_samples);
  Rng rng(seed);
  const int k = static_cast<int>(out.modes.cols());
  for (int i = 0; i < n_samples; ++i) {
    const int mode = static_cast<int>(rng.uniform_int(k));
    out.samples.col(i) = out.modes.col(mode) + spec.sigma_mode * rng.normal_vector(2);
  }
  return out;
}

SubspaceData gen_subspace_gaussian(int n, int d, const Eigen::VectorXd& latent_stds,
                                   int n_samples, std::uint64_t seed) {
  if (d < 0 || d > n) throw std::invalid_argument("gen_subspace_gaussian: need 0 <= d <= n");
  if (latent_stds.size() != d)
    throw std::invalid_argument("gen_subspace_gaussian: one std per latent dim");
  Rng rng(seed);
  SubspaceData out;
  out.basis.resize(n, d);
  if (d > 0) {
    Eigen::MatrixXd g = rng.normal_matrix(n, d);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, d);
    out.basis = q;
  }
  out.samples = Eigen::MatrixXd::Zero(n, n_samples);
  for (int i = 0; i < n_samples; ++i) {
    if (d == 0) continue;
    Eigen::VectorXd z = rng.normal_vector(d);
    out.samples.col(i) = out.basis * latent_stds.cwiseProduct(z);
  }
  return out;
}

}  // namespace quench::datasets
