#pragma once

#include <cstdint>
#include <string>

#include "quench/datasets.hpp"
#include "quench/network.hpp"
#include "quench/sampler.hpp"
#include "quench/schedule.hpp"
#include "quench/trainer.hpp"

namespace quench {

// Experiment configuration, one plain-text section per concern. The on-disk
// format is a TOML-style subset: [section] headers, key = value lines,
// comments starting with #. serialize() is canonical (fixed section and key
// order, round-trippable doubles), which makes hash() a stable provenance
// digest embedded in every output.
struct ExperimentConfig {
  // [dataset]
  datasets::GaussianGridSpec dataset;
  int dataset_samples = 65536;

  // [network]
  NetworkArch network;

  // [schedule]
  ScheduleKind schedule_kind = ScheduleKind::kLinear;
  int schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;

  // [train]
  TrainConfig train;

  // [sample]
  int sample_n = 16384;
  int dump_stride = 10;
  int dump_max_chains = 1024;
  int block_chains = 64;

  // [iq]
  IQConfig iq;

  // [calibrate]
  int n_reference = 2048;

  // [filters]
  double lid_step_fraction = 0.01;
  int lid_k = 32;
  double lmi_beta = 0.1;
  int lmi_m = 32;
  int lmi_gen_steps = 50;
  double tvf_t1 = 0.1;
  double tvf_t2 = 0.7;

  // [metrics]
  int mmd_max_samples = 4096;
  bool mmd_unbiased = false;

  // [run]
  std::uint64_t seed = 1234;
  int threads = 0;  // 0 = hardware concurrency

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string serialize() const;
  std::string hash() const;  // 16-hex FNV-1a of the canonical serialization
  void validate() const;

  DiffusionSchedule make_schedule() const;
  // Derived seeds so the commands draw from disjoint stream families.
  std::uint64_t data_seed() const;
  std::uint64_t train_seed() const;
  std::uint64_t network_seed() const;
  std::uint64_t sample_seed() const;
  std::uint64_t calib_seed() const;
  std::uint64_t filter_seed() const;

  int effective_threads() const;
};

}  // namespace quench
