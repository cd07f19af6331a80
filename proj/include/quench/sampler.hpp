#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "quench/model.hpp"
#include "quench/rng.hpp"
#include "quench/schedule.hpp"

namespace quench {

// Reverse-process record. x_series holds the state entering each retained
// step, xhat0_series the posterior mean computed there (after guidance, when
// guidance is active). energy_series is NaN outside the guidance window.
struct Trajectory {
  std::vector<int> step_indices;  // strictly decreasing
  std::vector<Eigen::VectorXd> x_series;
  std::vector<Eigen::VectorXd> xhat0_series;
  std::vector<double> energy_series;
};

struct IQConfig {
  double t1 = 0.0;
  double t2 = 0.72;
  double lambda = 0.9;
  double q = 0.65;
  int k = 32;
  double eps_stab = 1e-8;

  void validate() const;
  // Step i is guided iff t1 <= i/T <= t2, inclusive on both ends.
  bool in_window(int step, int t_total) const {
    const double t = static_cast<double>(step) / t_total;
    return t >= t1 && t <= t2;
  }
};

// Per-step sorted reference energies from unguided runs; the gating
// threshold q_t is the q-th percentile read by linear interpolation between
// order statistics.
class CalibrationTable {
 public:
  CalibrationTable() = default;
  CalibrationTable(int n_reference, std::map<int, std::vector<double>> energies);

  bool covers(int step) const { return per_step_.count(step) > 0; }
  double threshold(int step, double q) const;
  int n_reference() const { return n_reference_; }
  const std::map<int, std::vector<double>>& per_step() const { return per_step_; }

 private:
  int n_reference_ = 0;
  std::map<int, std::vector<double>> per_step_;  // ascending arrays
};

enum class SampleMode { kBaseline, kIq };

struct BatchOptions {
  int threads = 1;
  int block_chains = 64;
  int record_stride = 0;     // 0 = no trajectory recording
  int record_max_chains = 0;
  std::function<void(long units_done, long units_total)> progress;
};

struct BatchResult {
  Eigen::MatrixXd x0;                     // n x chains
  std::vector<Trajectory> trajectories;   // first record_max_chains chains
};

// --- single-chain entry points ---------------------------------------------

// DDPM ancestral chain from x_T. The chain noise comes from
// chain_rng.substream(0); guided variants read estimator noise from
// substream(1), so enabling guidance never perturbs the chain stream.
Trajectory ancestral_sample(const EpsModel& model, const DiffusionSchedule& schedule,
                            const Eigen::Ref<const Eigen::VectorXd>& x_T, Rng chain_rng,
                            int record_stride = 1);

Trajectory iq_guided_sample(const EpsModel& model, const DiffusionSchedule& schedule,
                            const Eigen::Ref<const Eigen::VectorXd>& x_T,
                            const IQConfig& iq, const CalibrationTable* calib,
                            Rng chain_rng, int record_stride = 1);

// Deterministic generator (DDIM with eta = 0) over a uniform-stride
// subsample of the schedule; a pure function of x_T.
Eigen::VectorXd generate_deterministic(const EpsModel& model,
                                       const DiffusionSchedule& schedule,
                                       const Eigen::Ref<const Eigen::VectorXd>& x_T,
                                       int n_steps);
Eigen::MatrixXd generate_deterministic_batch(const EpsModel& model,
                                             const DiffusionSchedule& schedule,
                                             const Eigen::Ref<const Eigen::MatrixXd>& x_T,
                                             int n_steps);

// --- the guidance energy ----------------------------------------------------

// E(x_t) = mean_j |eps_j - eps_theta(sqrt(abar) xhat0(x_t) + sqrt(1-abar) eps_j)|^2
// with xhat0 the Tweedie posterior mean; the gradient runs in reverse mode
// through both network calls, treating eps_j as constants.
struct EnergyResult {
  double value = 0.0;
  Eigen::VectorXd grad;
};
EnergyResult energy(const EpsModel& model, const DiffusionSchedule& schedule,
                    const Eigen::Ref<const Eigen::VectorXd>& x_t, int step, int k,
                    Rng& noise_rng);
EnergyResult energy_with_noise(const EpsModel& model, const DiffusionSchedule& schedule,
                               const Eigen::Ref<const Eigen::VectorXd>& x_t, int step,
                               const Eigen::Ref<const Eigen::MatrixXd>& noise);

// Batched per-chain energies; one noise block of k columns per chain.
// grads == nullptr skips the backward sweep (forward-only evaluation).
void energy_batch(const EpsModel& model, const DiffusionSchedule& schedule,
                  const Eigen::Ref<const Eigen::MatrixXd>& x_t, int step,
                  const Eigen::Ref<const Eigen::MatrixXd>& noise,
                  Eigen::VectorXd* energies, Eigen::MatrixXd* grads);

// --- batched production drivers ---------------------------------------------

// Chains are independent given pre-split substreams of seed: chain c uses
// Rng(seed).substream(c), with substream(0) for chain noise, (1) for
// estimator noise and (2) for x_T. Blocks of chains run in parallel; the
// block partition is fixed by chain index, so results do not depend on the
// thread count.
BatchResult sample_batch(const EpsModel& model, const DiffusionSchedule& schedule,
                         int n_chains, std::uint64_t seed, SampleMode mode,
                         const IQConfig* iq, const CalibrationTable* calib,
                         const BatchOptions& opts = {});

CalibrationTable calibrate(const EpsModel& model, const DiffusionSchedule& schedule,
                           const IQConfig& iq, int n_reference, std::uint64_t seed,
                           const BatchOptions& opts = {});

}  // namespace quench
