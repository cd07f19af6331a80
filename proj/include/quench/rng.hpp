#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

namespace quench {

// Deterministic counter-style generator built on splitmix64. Unlike the
// standard-library distributions, every draw here is pinned down by the
// implementation, so files produced from a seed are reproducible across
// compilers and platforms. Substreams are derived by hashing (seed, id),
// which lets each sampling chain own an independent stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), state_(seed) {}

  // Independent stream derived from this generator's seed; drawing from one
  // substream never advances another.
  Rng substream(std::uint64_t id) const {
    std::uint64_t s = seed_ + 0x9e3779b97f4a7c15ULL * (id + 1);
    s = mix_(s);
    return Rng(s);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix_(state_);
  }

  // Uniform in [0,1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound) via the multiply-shift reduction.
  std::uint64_t uniform_int(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  // Standard normal via Box-Muller. Consumes two uniforms per pair; the
  // second value is cached so draw order stays well-defined.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0,1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  Eigen::VectorXd normal_vector(int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  // Column-major fill so a matrix of chain noise equals per-chain vectors.
  Eigen::MatrixXd normal_matrix(int rows, int cols) {
    Eigen::MatrixXd m(rows, cols);
    for (int c = 0; c < cols; ++c)
      for (int r = 0; r < rows; ++r) m(r, c) = normal();
    return m;
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static std::uint64_t mix_(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace quench
