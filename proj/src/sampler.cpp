#include "quench/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "quench/alloc.hpp"
#include "quench/autodiff.hpp"
#include "quench/errors.hpp"

namespace quench {

void IQConfig::validate() const {
  if (!(t1 >= 0.0 && t1 < t2 && t2 <= 1.0))
    throw std::invalid_argument("IQConfig: need 0 <= t1 < t2 <= 1");
  if (lambda < 0.0) throw std::invalid_argument("IQConfig: lambda >= 0");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("IQConfig: q in [0,1]");
  if (k < 1) throw std::invalid_argument("IQConfig: k >= 1");
  if (eps_stab <= 0.0) throw std::invalid_argument("IQConfig: eps_stab > 0");
}

CalibrationTable::CalibrationTable(int n_reference,
                                   std::map<int, std::vector<double>> energies)
    : n_reference_(n_reference), per_step_(std::move(energies)) {
  for (auto& [step, arr] : per_step_) {
    if (arr.empty())
      throw std::invalid_argument("CalibrationTable: empty energy array at step " +
                                  std::to_string(step));
    std::sort(arr.begin(), arr.end());
  }
}

double CalibrationTable::threshold(int step, double q) const {
  auto it = per_step_.find(step);
  if (it == per_step_.end())
    throw std::invalid_argument("CalibrationTable: no calibration for step " +
                                std::to_string(step));
  const auto& arr = it->second;
  if (arr.size() == 1) return arr[0];
  const double pos = q * static_cast<double>(arr.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= arr.size()) return arr.back();
  const double frac = pos - static_cast<double>(lo);
  return arr[lo] + frac * (arr[lo + 1] - arr[lo]);
}

namespace {

struct DdpmCoeffs {
  double c_xhat = 0.0;
  double c_x = 0.0;
  double sigma = 0.0;
};

DdpmCoeffs ddpm_coeffs(const DiffusionSchedule& s, int i) {
  const double ab_i = s.alpha_bar(i);
  const double ab_prev = s.alpha_bar(i - 1);
  const double beta = s.beta(i);
  const double rem = 1.0 - ab_i;
  DdpmCoeffs c;
  c.c_xhat = std::sqrt(ab_prev) * beta / rem;
  c.c_x = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / rem;
  c.sigma = std::sqrt(beta * (1.0 - ab_prev) / rem);
  return c;
}

enum class RunMode { kBaseline, kIq, kCalibrate };

struct BlockOutputs {
  Eigen::MatrixXd* x0 = nullptr;
  std::vector<Trajectory>* trajectories = nullptr;  // indexed by chain
  // Calibration energies: per window step, one slot per chain.
  std::map<int, std::vector<double>>* calib_energies = nullptr;
};

bool retained(int step, int t_total, int stride) {
  if (stride <= 0) return false;
  return (t_total - step) % stride == 0 || step == 1;
}

void run_block(const EpsModel& model, const DiffusionSchedule& schedule, RunMode mode,
               const IQConfig* iq, const CalibrationTable* calib, std::uint64_t seed,
               int chain_begin, int chain_end, const BatchOptions& opts,
               const BlockOutputs& out, std::atomic<long>* units_done) {
  const int n = model.dim();
  const int t_total = schedule.steps();
  const int cols = chain_end - chain_begin;
  const bool window_active = mode != RunMode::kBaseline;

  std::vector<Rng> noise_rng, energy_rng;
  noise_rng.reserve(cols);
  energy_rng.reserve(cols);
  Eigen::MatrixXd x(n, cols);
  Rng root(seed);
  for (int c = 0; c < cols; ++c) {
    Rng chain = root.substream(static_cast<std::uint64_t>(chain_begin + c));
    noise_rng.push_back(chain.substream(0));
    energy_rng.push_back(chain.substream(1));
    Rng init = chain.substream(2);
    x.col(c) = init.normal_vector(n);
  }

  const int k = iq ? iq->k : 0;
  Eigen::MatrixXd noise_block, z(n, cols);
  Eigen::VectorXd energies;
  Eigen::MatrixXd grads;

  for (int i = t_total; i >= 1; --i) {
    const double a = std::sqrt(schedule.alpha_bar(i));
    const double b = std::sqrt(schedule.sigma2(i));
    Eigen::MatrixXd eps_hat = model.eps(x, schedule, i);
    Eigen::MatrixXd xhat0 = (x - b * eps_hat) / a;

    const bool in_window = window_active && iq->in_window(i, t_total);
    bool have_energy = false;
    if (in_window) {
      // Estimator noise is drawn per chain in chain order at every window
      // step, independent of the mask, so streams stay aligned across modes.
      noise_block.resize(n, static_cast<Eigen::Index>(cols) * k);
      for (int c = 0; c < cols; ++c)
        noise_block.middleCols(static_cast<Eigen::Index>(c) * k, k) =
            energy_rng[c].normal_matrix(n, k);
      const bool need_grad = mode == RunMode::kIq && iq->lambda > 0.0;
      energy_batch(model, schedule, x, i, noise_block, &energies,
                   need_grad ? &grads : nullptr);
      have_energy = true;

      if (mode == RunMode::kIq) {
        const double raw_coeff = (1.0 - schedule.alpha_bar(i)) / a;  // Phi^{-1} Sigma
        for (int c = 0; c < cols; ++c) {
          double qt = -std::numeric_limits<double>::infinity();
          if (calib) qt = calib->threshold(i, iq->q);
          const bool mask = energies[c] >= qt;
          if (mask && iq->lambda > 0.0) {
            Eigen::VectorXd raw = raw_coeff * grads.col(c);
            Eigen::VectorXd nat = xhat0.col(c) - x.col(c) / a;
            const double scale =
                iq->lambda * nat.norm() / (raw.norm() + iq->eps_stab);
            xhat0.col(c) -= scale * raw;
          }
        }
      } else {  // calibration run: record, no correction
        auto it = out.calib_energies->find(i);
        for (int c = 0; c < cols; ++c) it->second[chain_begin + c] = energies[c];
      }
    }

    if (!xhat0.allFinite())
      throw NumericalError("sampler: non-finite state at step " + std::to_string(i));

    if (out.trajectories && retained(i, t_total, opts.record_stride)) {
      for (int c = 0; c < cols; ++c) {
        const int chain = chain_begin + c;
        if (chain >= static_cast<int>(out.trajectories->size())) break;
        Trajectory& tr = (*out.trajectories)[chain];
        tr.step_indices.push_back(i);
        tr.x_series.push_back(x.col(c));
        tr.xhat0_series.push_back(xhat0.col(c));
        tr.energy_series.push_back(have_energy ? energies[c]
                                               : std::numeric_limits<double>::quiet_NaN());
      }
    }

    if (i > 1) {
      const DdpmCoeffs cf = ddpm_coeffs(schedule, i);
      for (int c = 0; c < cols; ++c) z.col(c) = noise_rng[c].normal_vector(n);
      x = cf.c_xhat * xhat0 + cf.c_x * x;
      x.noalias() += cf.sigma * z;
    } else {
      x = xhat0;
    }
    if (units_done) ++(*units_done);
  }

  if (out.x0) out.x0->middleCols(chain_begin, cols) = x;
}

void check_window_coverage(const DiffusionSchedule& schedule, const IQConfig& iq,
                           const CalibrationTable* calib) {
  if (iq.q == 0.0 && calib == nullptr) return;  // mask is identically 1
  if (calib == nullptr)
    throw std::invalid_argument("iq sampling: calibration table required when q > 0");
  for (int i = schedule.steps(); i >= 1; --i)
    if (iq.in_window(i, schedule.steps()) && !calib->covers(i))
      throw std::invalid_argument("iq sampling: calibration missing step " +
                                  std::to_string(i));
}

BatchResult run_batch(const EpsModel& model, const DiffusionSchedule& schedule,
                      int n_chains, std::uint64_t seed, RunMode mode, const IQConfig* iq,
                      const CalibrationTable* calib, const BatchOptions& opts,
                      std::map<int, std::vector<double>>* calib_energies) {
  detail::tune_allocator();
  if (n_chains < 1) throw std::invalid_argument("sample_batch: n_chains >= 1");
  if (mode == RunMode::kIq) {
    if (!iq) throw std::invalid_argument("sample_batch: IQ mode needs an IQConfig");
    iq->validate();
    check_window_coverage(schedule, *iq, calib);
  }

  BatchResult result;
  result.x0.resize(model.dim(), n_chains);
  const int recorded =
      opts.record_stride > 0 ? std::min(n_chains, opts.record_max_chains) : 0;
  result.trajectories.resize(recorded);

  BlockOutputs out;
  out.x0 = &result.x0;
  out.trajectories = recorded > 0 ? &result.trajectories : nullptr;
  out.calib_energies = calib_energies;

  const int block = std::max(1, opts.block_chains);
  const int n_blocks = (n_chains + block - 1) / block;
  const int threads = std::max(1, std::min(opts.threads, n_blocks));
  const long units_total = static_cast<long>(n_blocks) * schedule.steps();

  std::atomic<long> units_done{0};
  std::atomic<int> next_block{0};
  std::exception_ptr error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const int bi = next_block.fetch_add(1);
      if (bi >= n_blocks) return;
      const int begin = bi * block;
      const int end = std::min(n_chains, begin + block);
      try {
        run_block(model, schedule, mode, iq, calib, seed, begin, end, opts, out,
                  &units_done);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
      if (opts.progress) opts.progress(units_done.load(), units_total);
    }
  };

  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
  return result;
}

}  // namespace

void energy_batch(const EpsModel& model, const DiffusionSchedule& schedule,
                  const Eigen::Ref<const Eigen::MatrixXd>& x_t, int step,
                  const Eigen::Ref<const Eigen::MatrixXd>& noise,
                  Eigen::VectorXd* energies, Eigen::MatrixXd* grads) {
  detail::tune_allocator();
  const auto cols = static_cast<int>(x_t.cols());
  if (cols < 1 || noise.cols() % cols != 0)
    throw std::invalid_argument("energy_batch: noise must hold k columns per chain");
  const int k = static_cast<int>(noise.cols()) / cols;
  const double ab = schedule.alpha_bar(step);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  if (!(a > 0.0)) throw std::domain_error("energy_batch: alpha_bar must be positive");

  if (grads) {
    ad::Tape tape;
    ad::Var x = tape.leaf(x_t);
    ad::Var eps1 = model.eps_on_tape(tape, x, schedule, step);
    ad::Var xhat0 = tape.scale(tape.sub(x, tape.scale(eps1, b)), 1.0 / a);
    ad::Var rep = tape.repeat_cols_blocked(xhat0, k);
    ad::Var renoised = tape.add(tape.scale(rep, a), tape.constant(b * noise));
    ad::Var eps2 = model.eps_on_tape(tape, renoised, schedule, step);
    ad::Var diff = tape.sub(tape.constant(noise), eps2);
    ad::Var per_sample = tape.colwise_sum_squares(diff);
    ad::Var per_chain = tape.scale(tape.block_sum_cols(per_sample, k), 1.0 / k);
    ad::Var root = tape.sum_all(per_chain);
    tape.backward(root);
    *energies = tape.value(per_chain).row(0).transpose();
    *grads = tape.adjoint(x);
  } else {
    Eigen::MatrixXd eps1 = model.eps(x_t, schedule, step);
    Eigen::MatrixXd xhat0 = (x_t - b * eps1) / a;
    Eigen::MatrixXd renoised(x_t.rows(), noise.cols());
    for (int c = 0; c < cols; ++c)
      renoised.middleCols(static_cast<Eigen::Index>(c) * k, k) =
          (a * xhat0.col(c)).replicate(1, k) +
          b * noise.middleCols(static_cast<Eigen::Index>(c) * k, k);
    Eigen::MatrixXd eps2 = model.eps(renoised, schedule, step);
    energies->resize(cols);
    for (int c = 0; c < cols; ++c) {
      const auto off = static_cast<Eigen::Index>(c) * k;
      (*energies)[c] =
          (noise.middleCols(off, k) - eps2.middleCols(off, k)).squaredNorm() / k;
    }
  }
  if (!energies->allFinite() || (grads && !grads->allFinite()))
    throw NumericalError("energy_batch: non-finite energy or gradient at step " +
                         std::to_string(step));
}

EnergyResult energy_with_noise(const EpsModel& model, const DiffusionSchedule& schedule,
                               const Eigen::Ref<const Eigen::VectorXd>& x_t, int step,
                               const Eigen::Ref<const Eigen::MatrixXd>& noise) {
  Eigen::VectorXd e;
  Eigen::MatrixXd g;
  energy_batch(model, schedule, x_t, step, noise, &e, &g);
  return {e[0], g.col(0)};
}

EnergyResult energy(const EpsModel& model, const DiffusionSchedule& schedule,
                    const Eigen::Ref<const Eigen::VectorXd>& x_t, int step, int k,
                    Rng& noise_rng) {
  if (k < 1) throw std::invalid_argument("energy: k >= 1");
  const Eigen::MatrixXd noise = noise_rng.normal_matrix(static_cast<int>(x_t.size()), k);
  return energy_with_noise(model, schedule, x_t, step, noise);
}

namespace {

// Shared single-chain path: run one chain through the batched machinery so
// stream discipline matches sample_batch exactly.
Trajectory single_chain(const EpsModel& model, const DiffusionSchedule& schedule,
                        const Eigen::Ref<const Eigen::VectorXd>& x_T, RunMode mode,
                        const IQConfig* iq, const CalibrationTable* calib, Rng chain_rng,
                        int record_stride) {
  const int n = model.dim();
  const int t_total = schedule.steps();
  Rng noise = chain_rng.substream(0);
  Rng energy_stream = chain_rng.substream(1);

  Trajectory tr;
  Eigen::VectorXd x = x_T;
  Eigen::MatrixXd noise_block;
  for (int i = t_total; i >= 1; --i) {
    const double a = std::sqrt(schedule.alpha_bar(i));
    const double b = std::sqrt(schedule.sigma2(i));
    Eigen::VectorXd eps_hat = model.eps(x, schedule, i).col(0);
    Eigen::VectorXd xhat0 = (x - b * eps_hat) / a;

    double e_val = std::numeric_limits<double>::quiet_NaN();
    if (mode == RunMode::kIq && iq->in_window(i, t_total)) {
      noise_block = energy_stream.normal_matrix(n, iq->k);
      Eigen::VectorXd e;
      Eigen::MatrixXd g;
      const bool need_grad = iq->lambda > 0.0;
      energy_batch(model, schedule, x, i, noise_block, &e, need_grad ? &g : nullptr);
      e_val = e[0];
      double qt = -std::numeric_limits<double>::infinity();
      if (calib) qt = calib->threshold(i, iq->q);
      if (e_val >= qt && iq->lambda > 0.0) {
        Eigen::VectorXd raw = ((1.0 - schedule.alpha_bar(i)) / a) * g.col(0);
        Eigen::VectorXd nat = xhat0 - x / a;
        const double scale = iq->lambda * nat.norm() / (raw.norm() + iq->eps_stab);
        xhat0 -= scale * raw;
      }
    }

    if (!xhat0.allFinite())
      throw NumericalError("sampler: non-finite state at step " + std::to_string(i));

    if (retained(i, t_total, record_stride)) {
      tr.step_indices.push_back(i);
      tr.x_series.push_back(x);
      tr.xhat0_series.push_back(xhat0);
      tr.energy_series.push_back(e_val);
    }

    if (i > 1) {
      const DdpmCoeffs cf = ddpm_coeffs(schedule, i);
      x = cf.c_xhat * xhat0 + cf.c_x * x + cf.sigma * noise.normal_vector(n);
    } else {
      x = xhat0;
    }
  }
  // Step 1 is always retained, so the final sample is the last posterior mean.
  return tr;
}

}  // namespace

Trajectory ancestral_sample(const EpsModel& model, const DiffusionSchedule& schedule,
                            const Eigen::Ref<const Eigen::VectorXd>& x_T, Rng chain_rng,
                            int record_stride) {
  return single_chain(model, schedule, x_T, RunMode::kBaseline, nullptr, nullptr,
                      chain_rng, record_stride);
}

Trajectory iq_guided_sample(const EpsModel& model, const DiffusionSchedule& schedule,
                            const Eigen::Ref<const Eigen::VectorXd>& x_T,
                            const IQConfig& iq, const CalibrationTable* calib,
                            Rng chain_rng, int record_stride) {
  iq.validate();
  check_window_coverage(schedule, iq, calib);
  return single_chain(model, schedule, x_T, RunMode::kIq, &iq, calib, chain_rng,
                      record_stride);
}

Eigen::MatrixXd generate_deterministic_batch(const EpsModel& model,
                                             const DiffusionSchedule& schedule,
                                             const Eigen::Ref<const Eigen::MatrixXd>& x_T,
                                             int n_steps) {
  const int t_total = schedule.steps();
  if (n_steps < 1 || n_steps > t_total)
    throw std::invalid_argument("generate_deterministic: need 1 <= n_steps <= T");
  Eigen::MatrixXd x = x_T;
  for (int s = n_steps; s >= 1; --s) {
    const int i = static_cast<int>(static_cast<long>(s) * t_total / n_steps);
    const int prev =
        s > 1 ? static_cast<int>(static_cast<long>(s - 1) * t_total / n_steps) : 0;
    const double a = std::sqrt(schedule.alpha_bar(i));
    const double b = std::sqrt(schedule.sigma2(i));
    Eigen::MatrixXd eps_hat = model.eps(x, schedule, i);
    Eigen::MatrixXd xhat0 = (x - b * eps_hat) / a;
    if (!xhat0.allFinite())
      throw NumericalError("generate_deterministic: non-finite state at step " +
                           std::to_string(i));
    const double a_prev = std::sqrt(schedule.alpha_bar(prev));
    const double b_prev = std::sqrt(schedule.sigma2(prev));
    x = a_prev * xhat0 + b_prev * eps_hat;
  }
  return x;
}

Eigen::VectorXd generate_deterministic(const EpsModel& model,
                                       const DiffusionSchedule& schedule,
                                       const Eigen::Ref<const Eigen::VectorXd>& x_T,
                                       int n_steps) {
  return generate_deterministic_batch(model, schedule, x_T, n_steps).col(0);
}

BatchResult sample_batch(const EpsModel& model, const DiffusionSchedule& schedule,
                         int n_chains, std::uint64_t seed, SampleMode mode,
                         const IQConfig* iq, const CalibrationTable* calib,
                         const BatchOptions& opts) {
  const RunMode rm = mode == SampleMode::kBaseline ? RunMode::kBaseline : RunMode::kIq;
  return run_batch(model, schedule, n_chains, seed, rm, iq, calib, opts, nullptr);
}

CalibrationTable calibrate(const EpsModel& model, const DiffusionSchedule& schedule,
                           const IQConfig& iq, int n_reference, std::uint64_t seed,
                           const BatchOptions& opts) {
  iq.validate();
  if (n_reference < 32) throw std::invalid_argument("calibrate: n_reference >= 32");
  std::map<int, std::vector<double>> energies;
  for (int i = schedule.steps(); i >= 1; --i)
    if (iq.in_window(i, schedule.steps()))
      energies[i] = std::vector<double>(n_reference, 0.0);
  run_batch(model, schedule, n_reference, seed, RunMode::kCalibrate, &iq, nullptr, opts,
            &energies);
  return CalibrationTable(n_reference, std::move(energies));
}

}  // namespace quench
