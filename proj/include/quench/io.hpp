#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "quench/datasets.hpp"
#include "quench/network.hpp"
#include "quench/sampler.hpp"
#include "quench/schedule.hpp"
#include "quench/trainer.hpp"

namespace quench::io {

// %.17g, so every double round-trips through text.
std::string format_double(double v);

// Write-to-temp-then-rename in the target directory.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

struct Checkpoint {
  int format_version = 1;
  NetworkArch arch;
  ScheduleKind schedule_kind = ScheduleKind::kLinear;
  int schedule_steps = 1000;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  Eigen::VectorXd params;
  std::uint64_t seed = 0;
  long training_steps = 0;
  double final_loss = 0.0;
  Standardizer standardize;
  std::string config_hash;

  DiffusionSchedule make_schedule() const;
  ScoreNetwork make_network() const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_calibration(const std::filesystem::path& path, const CalibrationTable& table,
                      const IQConfig& iq, const std::string& config_hash = "");
CalibrationTable load_calibration(const std::filesystem::path& path,
                                  IQConfig* iq_out = nullptr);

// Samples: one row per sample, header dim0,dim1,...; storage is n x N.
void write_samples_csv(const std::filesystem::path& path,
                       const Eigen::Ref<const Eigen::MatrixXd>& samples);
Eigen::MatrixXd read_samples_csv(const std::filesystem::path& path);

void write_loss_csv(const std::filesystem::path& path,
                    const std::vector<std::pair<long, double>>& history);

void write_trajectories_csv(const std::filesystem::path& path,
                            const std::vector<Trajectory>& trajectories, int dim);
std::vector<Trajectory> read_trajectories_csv(const std::filesystem::path& path, int dim);

struct ModesInfo {
  datasets::GaussianGridSpec spec;
  Eigen::MatrixXd modes;  // 2 x K
};
void write_modes_json(const std::filesystem::path& path, const ModesInfo& info);
ModesInfo load_modes_json(const std::filesystem::path& path);

struct FilterScoreRow {
  long sample_id = 0;
  std::string filter;
  double score = 0.0;
  std::string step_or_window;
  std::string config_hash;
};
void write_filter_scores_csv(const std::filesystem::path& path,
                             const std::vector<FilterScoreRow>& rows);
std::vector<FilterScoreRow> read_filter_scores_csv(const std::filesystem::path& path);

// Plain CSV of sample_id,label with label in {hallucinated, correct} or {1, 0}.
std::vector<std::pair<long, bool>> read_labels_csv(const std::filesystem::path& path);

}  // namespace quench::io
