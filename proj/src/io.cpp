#include "quench/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace quench::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out << content;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

DiffusionSchedule Checkpoint::make_schedule() const {
  return schedule_kind == ScheduleKind::kLinear
             ? DiffusionSchedule::make_linear(schedule_steps, beta_min, beta_max)
             : DiffusionSchedule::make_cosine(schedule_steps);
}

ScoreNetwork Checkpoint::make_network() const {
  ScoreNetwork net(arch);
  net.set_params(params);
  return net;
}

namespace {

void append_array(std::string& out, const Eigen::Ref<const Eigen::VectorXd>& v) {
  out += '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += format_double(v[i]);
  }
  out += ']';
}

}  // namespace

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  std::string out;
  out.reserve(32 + ckpt.params.size() * 26);
  out += "{\n\"format_version\": " + std::to_string(ckpt.format_version) + ",\n";
  out += "\"arch\": {\"in_dim\": " + std::to_string(ckpt.arch.in_dim) +
         ", \"hidden_dim\": " + std::to_string(ckpt.arch.hidden_dim) +
         ", \"n_hidden_layers\": " + std::to_string(ckpt.arch.n_hidden_layers) +
         ", \"time_embed_dim\": " + std::to_string(ckpt.arch.time_embed_dim) + "},\n";
  out += "\"schedule\": {\"kind\": \"" + to_string(ckpt.schedule_kind) +
         "\", \"T\": " + std::to_string(ckpt.schedule_steps) +
         ", \"beta_min\": " + format_double(ckpt.beta_min) +
         ", \"beta_max\": " + format_double(ckpt.beta_max) + "},\n";
  out += "\"seed\": " + std::to_string(ckpt.seed) + ",\n";
  out += "\"config_hash\": \"" + ckpt.config_hash + "\",\n";
  out += "\"training_meta\": {\"steps\": " + std::to_string(ckpt.training_steps) +
         ", \"final_loss\": " + format_double(ckpt.final_loss) + "},\n";
  out += "\"standardize\": {\"center\": ";
  append_array(out, ckpt.standardize.center);
  out += ", \"scale\": " + format_double(ckpt.standardize.scale) + "},\n";
  out += "\"params\": ";
  append_array(out, ckpt.params);
  out += "\n}\n";
  write_text_atomic(path, out);
}

Checkpoint load_checkpoint(const fs::path& path) {
  json j = json::parse(read_text(path));
  Checkpoint c;
  c.format_version = j.at("format_version").get<int>();
  if (c.format_version != 1)
    throw std::runtime_error("unsupported checkpoint format_version");
  const auto& a = j.at("arch");
  c.arch.in_dim = a.at("in_dim").get<int>();
  c.arch.hidden_dim = a.at("hidden_dim").get<int>();
  c.arch.n_hidden_layers = a.at("n_hidden_layers").get<int>();
  c.arch.time_embed_dim = a.at("time_embed_dim").get<int>();
  const auto& s = j.at("schedule");
  c.schedule_kind = schedule_kind_from_string(s.at("kind").get<std::string>());
  c.schedule_steps = s.at("T").get<int>();
  c.beta_min = s.at("beta_min").get<double>();
  c.beta_max = s.at("beta_max").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.config_hash = j.value("config_hash", std::string());
  c.training_steps = j.at("training_meta").at("steps").get<long>();
  c.final_loss = j.at("training_meta").at("final_loss").get<double>();
  const auto& st = j.at("standardize");
  const auto& ctr = st.at("center");
  c.standardize.center.resize(ctr.size());
  for (std::size_t i = 0; i < ctr.size(); ++i)
    c.standardize.center[static_cast<Eigen::Index>(i)] = ctr[i].get<double>();
  c.standardize.scale = st.at("scale").get<double>();
  const auto& p = j.at("params");
  c.params.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    c.params[static_cast<Eigen::Index>(i)] = p[i].get<double>();
  return c;
}

void save_calibration(const fs::path& path, const CalibrationTable& table,
                      const IQConfig& iq, const std::string& config_hash) {
  std::string out;
  out += "{\n\"config_hash\": \"" + config_hash + "\",\n";
  out += "\"iq_config\": {\"t1\": " + format_double(iq.t1) +
         ", \"t2\": " + format_double(iq.t2) + ", \"lambda\": " + format_double(iq.lambda) +
         ", \"q\": " + format_double(iq.q) + ", \"k\": " + std::to_string(iq.k) +
         ", \"eps_stab\": " + format_double(iq.eps_stab) + "},\n";
  out += "\"n_reference\": " + std::to_string(table.n_reference()) + ",\n";
  out += "\"per_step\": [";
  bool first = true;
  for (const auto& [step, arr] : table.per_step()) {
    if (!first) out += ",";
    first = false;
    out += "\n{\"step_index\": " + std::to_string(step) + ", \"sorted_energies\": [";
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (i) out += ',';
      out += format_double(arr[i]);
    }
    out += "]}";
  }
  out += "\n]\n}\n";
  write_text_atomic(path, out);
}

CalibrationTable load_calibration(const fs::path& path, IQConfig* iq_out) {
  json j = json::parse(read_text(path));
  if (iq_out) {
    const auto& q = j.at("iq_config");
    iq_out->t1 = q.at("t1").get<double>();
    iq_out->t2 = q.at("t2").get<double>();
    iq_out->lambda = q.at("lambda").get<double>();
    iq_out->q = q.at("q").get<double>();
    iq_out->k = q.at("k").get<int>();
    iq_out->eps_stab = q.at("eps_stab").get<double>();
  }
  std::map<int, std::vector<double>> per_step;
  for (const auto& entry : j.at("per_step")) {
    const int step = entry.at("step_index").get<int>();
    const auto& arr = entry.at("sorted_energies");
    std::vector<double> e(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) e[i] = arr[i].get<double>();
    per_step[step] = std::move(e);
  }
  return CalibrationTable(j.at("n_reference").get<int>(), std::move(per_step));
}

void write_samples_csv(const fs::path& path,
                       const Eigen::Ref<const Eigen::MatrixXd>& samples) {
  std::string out;
  out.reserve(static_cast<std::size_t>(samples.size()) * 26 + 64);
  for (Eigen::Index d = 0; d < samples.rows(); ++d) {
    if (d) out += ',';
    out += "dim" + std::to_string(d);
  }
  out += '\n';
  for (Eigen::Index c = 0; c < samples.cols(); ++c) {
    for (Eigen::Index d = 0; d < samples.rows(); ++d) {
      if (d) out += ',';
      out += format_double(samples(d, c));
    }
    out += '\n';
  }
  write_text_atomic(path, out);
}

namespace {
std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}
}  // namespace

Eigen::MatrixXd read_samples_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty samples file: " + path.string());
  const auto header = split(line, ',');
  const auto dim = static_cast<Eigen::Index>(header.size());
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (static_cast<Eigen::Index>(fields.size()) != dim)
      throw std::runtime_error("malformed samples row in " + path.string());
    for (const auto& f : fields) values.push_back(std::stod(f));
  }
  const auto n = static_cast<Eigen::Index>(values.size()) / dim;
  Eigen::MatrixXd samples(dim, n);
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index d = 0; d < dim; ++d) samples(d, c) = values[c * dim + d];
  return samples;
}

void write_loss_csv(const fs::path& path,
                    const std::vector<std::pair<long, double>>& history) {
  std::string out = "step,loss\n";
  for (const auto& [step, loss] : history)
    out += std::to_string(step) + "," + format_double(loss) + "\n";
  write_text_atomic(path, out);
}

void write_trajectories_csv(const fs::path& path,
                            const std::vector<Trajectory>& trajectories, int dim) {
  std::string out = "chain,step";
  for (int d = 0; d < dim; ++d) out += ",dim" + std::to_string(d);
  for (int d = 0; d < dim; ++d) out += ",xhat0_dim" + std::to_string(d);
  out += ",energy\n";
  for (std::size_t chain = 0; chain < trajectories.size(); ++chain) {
    const Trajectory& tr = trajectories[chain];
    for (std::size_t s = 0; s < tr.step_indices.size(); ++s) {
      out += std::to_string(chain) + "," + std::to_string(tr.step_indices[s]);
      for (int d = 0; d < dim; ++d) out += "," + format_double(tr.x_series[s][d]);
      for (int d = 0; d < dim; ++d) out += "," + format_double(tr.xhat0_series[s][d]);
      out += "," + format_double(tr.energy_series[s]) + "\n";
    }
  }
  write_text_atomic(path, out);
}

std::vector<Trajectory> read_trajectories_csv(const fs::path& path, int dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<Trajectory> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (static_cast<int>(fields.size()) != 2 * dim + 3)
      throw std::runtime_error("malformed trajectory row in " + path.string());
    const auto chain = static_cast<std::size_t>(std::stol(fields[0]));
    if (chain >= out.size()) out.resize(chain + 1);
    Trajectory& tr = out[chain];
    tr.step_indices.push_back(std::stoi(fields[1]));
    Eigen::VectorXd x(dim), xh(dim);
    for (int d = 0; d < dim; ++d) x[d] = std::stod(fields[2 + d]);
    for (int d = 0; d < dim; ++d) xh[d] = std::stod(fields[2 + dim + d]);
    tr.x_series.push_back(std::move(x));
    tr.xhat0_series.push_back(std::move(xh));
    tr.energy_series.push_back(std::stod(fields[2 + 2 * dim]));
  }
  return out;
}

void write_modes_json(const fs::path& path, const ModesInfo& info) {
  std::string out = "{\n\"spec\": {";
  out += "\"modes_per_side\": " + std::to_string(info.spec.modes_per_side);
  out += ", \"spacing\": " + format_double(info.spec.spacing);
  out += ", \"rotation_angle\": " + format_double(info.spec.rotation_angle);
  out += ", \"sigma_mode\": " + format_double(info.spec.sigma_mode);
  out += "},\n\"modes\": [";
  for (Eigen::Index k = 0; k < info.modes.cols(); ++k) {
    if (k) out += ',';
    out += "[" + format_double(info.modes(0, k)) + "," + format_double(info.modes(1, k)) + "]";
  }
  out += "]\n}\n";
  write_text_atomic(path, out);
}

ModesInfo load_modes_json(const fs::path& path) {
  json j = json::parse(read_text(path));
  ModesInfo info;
  const auto& s = j.at("spec");
  info.spec.modes_per_side = s.at("modes_per_side").get<int>();
  info.spec.spacing = s.at("spacing").get<double>();
  info.spec.rotation_angle = s.at("rotation_angle").get<double>();
  info.spec.sigma_mode = s.at("sigma_mode").get<double>();
  const auto& modes = j.at("modes");
  info.modes.resize(2, static_cast<Eigen::Index>(modes.size()));
  for (std::size_t k = 0; k < modes.size(); ++k) {
    info.modes(0, static_cast<Eigen::Index>(k)) = modes[k][0].get<double>();
    info.modes(1, static_cast<Eigen::Index>(k)) = modes[k][1].get<double>();
  }
  return info;
}

void write_filter_scores_csv(const fs::path& path,
                             const std::vector<FilterScoreRow>& rows) {
  std::string out = "sample_id,filter,score,step_or_window,config_hash\n";
  for (const auto& r : rows) {
    out += std::to_string(r.sample_id) + "," + r.filter + "," + format_double(r.score) +
           "," + r.step_or_window + "," + r.config_hash + "\n";
  }
  write_text_atomic(path, out);
}

std::vector<FilterScoreRow> read_filter_scores_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<FilterScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 5)
      throw std::runtime_error("malformed filter-score row in " + path.string());
    rows.push_back({std::stol(fields[0]), fields[1], std::stod(fields[2]), fields[3],
                    fields[4]});
  }
  return rows;
}

std::vector<std::pair<long, bool>> read_labels_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open: " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<std::pair<long, bool>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line, ',');
    if (fields.size() != 2)
      throw std::runtime_error("malformed label row in " + path.string());
    const bool hallucinated = fields[1] == "hallucinated" || fields[1] == "1";
    out.emplace_back(std::stol(fields[0]), hallucinated);
  }
  return out;
}

}  // namespace quench::io
