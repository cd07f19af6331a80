#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>

#include "quench/config.hpp"
#include "quench/datasets.hpp"
#include "quench/errors.hpp"
#include "quench/filters.hpp"
#include "quench/io.hpp"
#include "quench/metrics.hpp"
#include "quench/network.hpp"
#include "quench/sampler.hpp"
#include "quench/svg.hpp"
#include "quench/trainer.hpp"

namespace fs = std::filesystem;
using namespace quench;

namespace {

ExperimentConfig load_config(const std::string& path) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : ExperimentConfig::load(path);
  if (const char* env = std::getenv("QUENCHLAB_SEED")) {
    cfg.seed = std::stoull(env);
  }
  cfg.validate();
  return cfg;
}

BatchOptions batch_options(const ExperimentConfig& cfg, int threads_flag,
                           const char* label) {
  BatchOptions opts;
  opts.threads = threads_flag > 0 ? threads_flag : cfg.effective_threads();
  opts.block_chains = cfg.block_chains;
  auto last = std::make_shared<std::chrono::steady_clock::time_point>(
      std::chrono::steady_clock::now());
  auto mutex = std::make_shared<std::mutex>();
  std::string tag = label;
  opts.progress = [last, mutex, tag](long done, long total) {
    std::lock_guard<std::mutex> lock(*mutex);
    const auto now = std::chrono::steady_clock::now();
    if (now - *last < std::chrono::seconds(5) && done != total) return;
    *last = now;
    std::cerr << tag << ": " << done << "/" << total << " step-blocks\n";
  };
  return opts;
}

void write_run_meta(const fs::path& dir, const ExperimentConfig& cfg,
                    const std::string& command, const std::string& extra = "") {
  std::string out = "{\n\"command\": \"" + command + "\",\n";
  out += "\"config_hash\": \"" + cfg.hash() + "\",\n";
  out += "\"seed\": " + std::to_string(cfg.seed);
  if (!extra.empty()) out += ",\n" + extra;
  out += "\n}\n";
  io::write_text_atomic(dir / "meta.json", out);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig cfg = load_config(config_path);
  fs::create_directories(out_dir);
  auto data = datasets::gen_gaussian_grid(cfg.dataset, cfg.dataset_samples, cfg.data_seed());
  io::write_samples_csv(fs::path(out_dir) / "dataset.csv", data.samples);
  io::write_modes_json(fs::path(out_dir) / "modes.json", {cfg.dataset, data.modes});
  write_run_meta(out_dir, cfg, "gen-data",
                 "\"n_samples\": " + std::to_string(cfg.dataset_samples));
  std::cout << "wrote " << cfg.dataset_samples << " samples, "
            << data.modes.cols() << " modes to " << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_path) {
  ExperimentConfig cfg = load_config(config_path);
  Eigen::MatrixXd data = io::read_samples_csv(fs::path(data_dir) / "dataset.csv");
  if (data.cols() < cfg.train.batch_size)
    throw std::invalid_argument("train: dataset smaller than batch size");

  Standardizer std_tf = Standardizer::fit(data);
  Eigen::MatrixXd train_data = std_tf.apply(data);

  NetworkArch arch = cfg.network;
  arch.in_dim = static_cast<int>(data.rows());
  ScoreNetwork net = ScoreNetwork::init(arch, cfg.network_seed());
  DiffusionSchedule schedule = cfg.make_schedule();

  TrainConfig tc = cfg.train;
  tc.seed = cfg.train_seed();
  TrainResult result = train(net, schedule, train_data, tc, [](long step, double loss) {
    std::cerr << "train step " << step << " loss " << loss << "\n";
  });

  io::Checkpoint ckpt;
  ckpt.arch = arch;
  ckpt.schedule_kind = cfg.schedule_kind;
  ckpt.schedule_steps = cfg.schedule_steps;
  ckpt.beta_min = cfg.beta_min;
  ckpt.beta_max = cfg.beta_max;
  ckpt.params = net.params();
  ckpt.seed = cfg.seed;
  ckpt.training_steps = cfg.train.n_steps;
  ckpt.final_loss = result.final_loss;
  ckpt.standardize = std_tf;
  ckpt.config_hash = cfg.hash();
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::save_checkpoint(out, ckpt);

  fs::path loss_path = out.parent_path() / (out.stem().string() + "_loss.csv");
  io::write_loss_csv(loss_path, result.loss_history);
  std::cout << "final loss " << result.final_loss << "\n";
  return 0;
}

int cmd_sample(const std::string& config_path, const std::string& ckpt_path,
               const std::string& mode, int n_override, const std::string& calib_path,
               const std::string& out_dir, bool dump_trajectories, int threads_flag) {
  ExperimentConfig cfg = load_config(config_path);
  io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
  ScoreNetwork net = ckpt.make_network();
  DiffusionSchedule schedule = ckpt.make_schedule();

  const int n = n_override > 0 ? n_override : cfg.sample_n;
  SampleMode sm;
  if (mode == "baseline")
    sm = SampleMode::kBaseline;
  else if (mode == "iq")
    sm = SampleMode::kIq;
  else
    throw std::invalid_argument("sample: mode must be baseline or iq");

  std::optional<CalibrationTable> calib;
  if (!calib_path.empty()) calib = io::load_calibration(calib_path);
  if (sm == SampleMode::kIq && cfg.iq.q > 0.0 && !calib)
    throw std::invalid_argument("sample: --calib required for iq mode with q > 0");

  BatchOptions opts = batch_options(cfg, threads_flag, "sample");
  if (dump_trajectories) {
    opts.record_stride = cfg.dump_stride;
    opts.record_max_chains = std::min(n, cfg.dump_max_chains);
  }

  BatchResult result =
      sample_batch(net, schedule, n, cfg.sample_seed(), sm,
                   sm == SampleMode::kIq ? &cfg.iq : nullptr,
                   calib ? &*calib : nullptr, opts);

  fs::create_directories(out_dir);
  io::write_samples_csv(fs::path(out_dir) / "samples.csv",
                        ckpt.standardize.invert(result.x0));
  if (dump_trajectories)
    io::write_trajectories_csv(fs::path(out_dir) / "trajectories.csv",
                               result.trajectories, net.dim());
  write_run_meta(out_dir, cfg, "sample",
                 "\"mode\": \"" + mode + "\", \"n\": " + std::to_string(n));
  std::cout << "wrote " << n << " " << mode << " samples to " << out_dir << "\n";
  return 0;
}

int cmd_calibrate(const std::string& config_path, const std::string& ckpt_path,
                  const std::string& out_path, int threads_flag) {
  ExperimentConfig cfg = load_config(config_path);
  io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
  ScoreNetwork net = ckpt.make_network();
  DiffusionSchedule schedule = ckpt.make_schedule();
  BatchOptions opts = batch_options(cfg, threads_flag, "calibrate");
  CalibrationTable table =
      calibrate(net, schedule, cfg.iq, cfg.n_reference, cfg.calib_seed(), opts);
  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::save_calibration(out, table, cfg.iq, cfg.hash());
  std::cout << "calibrated " << table.per_step().size() << " steps from "
            << cfg.n_reference << " reference chains\n";
  return 0;
}

int cmd_filter(const std::string& config_path, const std::string& ckpt_path,
               const std::string& samples_dir, const std::string& filters_arg,
               const std::string& out_path, int threads_flag) {
  ExperimentConfig cfg = load_config(config_path);
  io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
  ScoreNetwork net = ckpt.make_network();
  DiffusionSchedule schedule = ckpt.make_schedule();
  const std::string hash = cfg.hash();

  std::vector<std::string> kinds;
  {
    std::string token;
    for (char c : filters_arg + ",") {
      if (c == ',') {
        if (!token.empty()) kinds.push_back(token);
        token.clear();
      } else {
        token += c;
      }
    }
  }

  std::vector<io::FilterScoreRow> rows;
  Rng filter_root(cfg.filter_seed());

  for (const std::string& kind : kinds) {
    if (kind == "lid") {
      Eigen::MatrixXd samples =
          io::read_samples_csv(fs::path(samples_dir) / "samples.csv");
      Eigen::MatrixXd x0 = ckpt.standardize.apply(samples);
      const int step = std::max(1, static_cast<int>(std::lround(
                                       cfg.lid_step_fraction * schedule.steps())));
      const std::string window = "step=" + std::to_string(step);
      for (Eigen::Index i = 0; i < x0.cols(); ++i) {
        Rng rng = filter_root.substream(0).substream(static_cast<std::uint64_t>(i));
        const double score =
            filters::lid_dsm(net, schedule, x0.col(i), step, cfg.lid_k, rng);
        rows.push_back({static_cast<long>(i), "lid", score, window, hash});
      }
    } else if (kind == "tvf" || kind == "lmi") {
      const fs::path traj_path = fs::path(samples_dir) / "trajectories.csv";
      if (!fs::exists(traj_path))
        throw std::invalid_argument("filter: " + kind +
                                    " requires trajectory dumps (run sample with "
                                    "--dump-trajectories)");
      const auto trajectories = io::read_trajectories_csv(traj_path, net.dim());
      if (kind == "tvf") {
        const std::string window = "[" + io::format_double(cfg.tvf_t1) + ";" +
                                   io::format_double(cfg.tvf_t2) + "]";
        for (std::size_t c = 0; c < trajectories.size(); ++c) {
          const double score =
              filters::tvf(trajectories[c], cfg.tvf_t1, cfg.tvf_t2, schedule.steps());
          rows.push_back({static_cast<long>(c), "tvf", score, window, hash});
        }
      } else {
        const std::string window = "beta=" + io::format_double(cfg.lmi_beta) +
                                   ";gen_steps=" + std::to_string(cfg.lmi_gen_steps);
        for (std::size_t c = 0; c < trajectories.size(); ++c) {
          if (trajectories[c].step_indices.empty() ||
              trajectories[c].step_indices.front() != schedule.steps())
            throw std::invalid_argument("filter: lmi needs the step-T state in dumps");
          Rng rng = filter_root.substream(1).substream(c);
          const double score =
              filters::lmi(net, schedule, trajectories[c].x_series.front(), cfg.lmi_beta,
                           cfg.lmi_m, cfg.lmi_gen_steps, rng);
          rows.push_back({static_cast<long>(c), "lmi", score, window, hash});
        }
      }
    } else {
      throw std::invalid_argument("filter: unknown filter kind " + kind);
    }
  }
  (void)threads_flag;

  fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  io::write_filter_scores_csv(out, rows);
  std::cout << "wrote " << rows.size() << " filter scores to " << out_path << "\n";
  return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& samples_dir,
                 const std::string& modes_path, const std::string& scores_path,
                 const std::string& labels_path, const std::string& ref_path,
                 const std::string& out_path) {
  ExperimentConfig cfg = load_config(config_path);
  Eigen::MatrixXd samples = io::read_samples_csv(fs::path(samples_dir) / "samples.csv");
  if (samples.cols() == 0) throw std::invalid_argument("evaluate: empty sample set");
  io::ModesInfo modes = io::load_modes_json(modes_path);

  const auto auto_labels =
      metrics::three_sigma_labels(samples, modes.modes, modes.spec.sigma_mode);
  const auto n_hallucinated =
      std::count(auto_labels.begin(), auto_labels.end(), true);
  const double hr = static_cast<double>(n_hallucinated) / auto_labels.size();
  const auto ci = metrics::wilson_interval_95(static_cast<int>(n_hallucinated),
                                              static_cast<int>(auto_labels.size()));

  std::string out = "{\n";
  out += "\"hr\": " + io::format_double(hr) + ",\n";
  out += "\"hr_ci_95\": [" + io::format_double(ci.lo) + ", " + io::format_double(ci.hi) +
         "],\n";

  if (!ref_path.empty()) {
    Eigen::MatrixXd ref = io::read_samples_csv(ref_path);
    metrics::MmdOptions mopts;
    mopts.max_samples = cfg.mmd_max_samples;
    mopts.unbiased = cfg.mmd_unbiased;
    out += "\"mmd\": " + io::format_double(metrics::mmd(samples, ref, mopts)) + ",\n";
  } else {
    out += "\"mmd\": null,\n";
  }

  // Labels: explicit file wins, 3-sigma auto-labels otherwise.
  std::vector<bool> labels = auto_labels;
  if (!labels_path.empty()) {
    std::fill(labels.begin(), labels.end(), false);
    for (const auto& [id, hallucinated] : io::read_labels_csv(labels_path)) {
      if (id < 0 || id >= static_cast<long>(labels.size()))
        throw std::invalid_argument("evaluate: label sample_id out of range");
      labels[static_cast<std::size_t>(id)] = hallucinated;
    }
  }

  std::string filters_json;
  std::string flat_json;
  if (!scores_path.empty()) {
    const auto rows = io::read_filter_scores_csv(scores_path);
    std::map<std::string, std::vector<metrics::LabeledScore>> by_kind;
    for (const auto& r : rows) {
      if (r.sample_id < 0 || r.sample_id >= static_cast<long>(labels.size()))
        throw std::invalid_argument("evaluate: score sample_id out of range");
      by_kind[r.filter].push_back(
          {r.score, labels[static_cast<std::size_t>(r.sample_id)]});
    }
    // Degenerate labelings (a single class) make the separability metrics
    // undefined; report null for those rather than failing the run.
    auto try_metric = [](const std::function<double()>& f) -> std::string {
      try {
        return io::format_double(f());
      } catch (const std::invalid_argument&) {
        return "null";
      }
    };
    bool first = true;
    for (const auto& [kind, scored] : by_kind) {
      const std::string roc = try_metric([&] { return metrics::roc_auc(scored); });
      const std::string pr = try_metric([&] { return metrics::pr_auc(scored); });
      const std::string d = try_metric([&] { return metrics::cohens_d(scored); });
      if (!first) filters_json += ",\n";
      first = false;
      filters_json += "\"" + kind + "\": {\"roc_auc\": " + roc + ", \"pr_auc\": " + pr +
                      ", \"cohens_d\": " + d + "}";
      if (flat_json.empty() || kind == "lid")
        flat_json = "\"roc_auc\": " + roc + ",\n\"pr_auc\": " + pr +
                    ",\n\"cohens_d\": " + d + ",\n";
    }
  }
  if (!flat_json.empty()) out += flat_json;
  out += "\"filters\": {" + filters_json + "},\n";
  out += "\"n_samples\": " + std::to_string(samples.cols()) + ",\n";
  out += "\"config_hash\": \"" + cfg.hash() + "\"\n}\n";

  fs::path outp(out_path);
  if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
  io::write_text_atomic(outp, out);
  std::cout << "hr " << hr << " [" << ci.lo << ", " << ci.hi << "]\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& sample_dirs, const std::string& modes_path,
             const std::string& out_path, int max_points) {
  io::ModesInfo modes = io::load_modes_json(modes_path);
  std::vector<svg::Panel> panels;
  for (const auto& dir : sample_dirs) {
    svg::Panel p;
    p.title = fs::path(dir).filename().string();
    const fs::path samples_path = fs::path(dir) / "samples.csv";
    p.points = fs::exists(samples_path) ? io::read_samples_csv(samples_path)
                                        : Eigen::MatrixXd(2, 0);
    panels.push_back(std::move(p));
  }
  if (panels.empty()) panels.push_back({"modes", Eigen::MatrixXd(2, 0)});
  const std::string doc =
      svg::scatter_panels(panels, modes.modes, modes.spec.sigma_mode, max_points);
  fs::path outp(out_path);
  if (outp.has_parent_path()) fs::create_directories(outp.parent_path());
  io::write_text_atomic(outp, doc);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quenchlab: diffusion sampling lab with hallucination filters and "
               "intrinsic-quenching guidance"};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, ckpt_path, mode = "baseline";
  std::string calib_path, samples_dir, filters_arg = "lid", modes_path, scores_path;
  std::string labels_path, ref_path;
  std::vector<std::string> sample_dirs;
  int n_override = 0, threads_flag = 0, max_points = 16384;
  bool dump_trajectories = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config file");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* tr = app.add_subcommand("train", "train the eps-prediction network");
  tr->add_option("--config", config_path, "config file");
  tr->add_option("--data", data_dir, "dataset directory")->required();
  tr->add_option("--out", out_path, "checkpoint path")->required();

  auto* sa = app.add_subcommand("sample", "run the reverse process");
  sa->add_option("--config", config_path, "config file");
  sa->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  sa->add_option("--mode", mode, "baseline or iq");
  sa->add_option("--n", n_override, "number of chains (default from config)");
  sa->add_option("--calib", calib_path, "calibration table (iq mode)");
  sa->add_option("--out", out_path, "output directory")->required();
  sa->add_flag("--dump-trajectories", dump_trajectories, "write trajectory CSV");
  sa->add_option("--threads", threads_flag, "cap worker threads");

  auto* ca = app.add_subcommand("calibrate", "build the gating threshold table");
  ca->add_option("--config", config_path, "config file");
  ca->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  ca->add_option("--out", out_path, "calibration json path")->required();
  ca->add_option("--threads", threads_flag, "cap worker threads");

  auto* fi = app.add_subcommand("filter", "score samples with hallucination filters");
  fi->add_option("--config", config_path, "config file");
  fi->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  fi->add_option("--samples", samples_dir, "sample directory")->required();
  fi->add_option("--filters", filters_arg, "comma list: tvf,lmi,lid");
  fi->add_option("--out", out_path, "scores csv path")->required();
  fi->add_option("--threads", threads_flag, "cap worker threads");

  auto* ev = app.add_subcommand("evaluate", "compute metrics report");
  ev->add_option("--config", config_path, "config file");
  ev->add_option("--samples", samples_dir, "sample directory")->required();
  ev->add_option("--modes", modes_path, "modes json")->required();
  ev->add_option("--scores", scores_path, "filter scores csv");
  ev->add_option("--labels", labels_path, "labels csv (sample_id,label)");
  ev->add_option("--ref", ref_path, "reference samples csv for MMD");
  ev->add_option("--out", out_path, "report json path")->required();

  auto* pl = app.add_subcommand("plot", "emit an SVG scatter figure");
  pl->add_option("--samples", sample_dirs, "sample directories (repeatable)");
  pl->add_option("--modes", modes_path, "modes json")->required();
  pl->add_option("--out", out_path, "svg path")->required();
  pl->add_option("--max-points", max_points, "points cap per panel");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(config_path, out_path);
    if (tr->parsed()) return cmd_train(config_path, data_dir, out_path);
    if (sa->parsed())
      return cmd_sample(config_path, ckpt_path, mode, n_override, calib_path, out_path,
                        dump_trajectories, threads_flag);
    if (ca->parsed()) return cmd_calibrate(config_path, ckpt_path, out_path, threads_flag);
    if (fi->parsed())
      return cmd_filter(config_path, ckpt_path, samples_dir, filters_arg, out_path,
                        threads_flag);
    if (ev->parsed())
      return cmd_evaluate(config_path, samples_dir, modes_path, scores_path, labels_path,
                          ref_path, out_path);
    if (pl->parsed()) return cmd_plot(sample_dirs, modes_path, out_path, max_points);
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
