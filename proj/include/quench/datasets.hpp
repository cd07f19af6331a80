#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace quench::datasets {

// Rotated square grid of isotropic Gaussians centered at the origin.
struct GaussianGridSpec {
  int modes_per_side = 5;
  double spacing = 1.0;
  double rotation_angle = M_PI / 8.0;
  double sigma_mode = 0.05;

  void validate() const;
  int mode_count() const { return modes_per_side * modes_per_side; }
};

struct GaussianGridData {
  Eigen::MatrixXd samples;  // 2 x n_samples
  Eigen::MatrixXd modes;    // 2 x modes
};

GaussianGridData gen_gaussian_grid(const GaussianGridSpec& spec, int n_samples,
                                   std::uint64_t seed);
Eigen::MatrixXd gaussian_grid_modes(const GaussianGridSpec& spec);

struct SubspaceData {
  Eigen::MatrixXd samples;  // n x n_samples
  Eigen::MatrixXd basis;    // n x d, orthonormal
};

// x = U (s .* z) with U from the QR factor of a seeded random matrix.
SubspaceData gen_subspace_gaussian(int n, int d, const Eigen::VectorXd& latent_stds,
                                   int n_samples, std::uint64_t seed);

}  // namespace quench::datasets
