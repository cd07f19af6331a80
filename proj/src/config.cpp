#include "quench/config.hpp"

#include <charconv>
#include <map>
#include <stdexcept>
#include <thread>

#include "quench/io.hpp"
#include "quench/rng.hpp"

namespace quench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct KeyValue {
  std::map<std::string, std::string> entries;  // "section.key" -> raw value

  bool has(const std::string& key) const { return entries.count(key) > 0; }

  double number(const std::string& key, double fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: invalid number for " + key + ": " + it->second);
    }
  }

  long integer(const std::string& key, long fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    try {
      std::size_t pos = 0;
      const long v = std::stol(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config: invalid integer for " + key + ": " + it->second);
    }
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    std::uint64_t v = 0;
    const auto* b = it->second.data();
    const auto* e = b + it->second.size();
    auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e)
      throw std::invalid_argument("config: invalid unsigned integer for " + key);
    return v;
  }

  bool boolean(const std::string& key, bool fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw std::invalid_argument("config: invalid boolean for " + key);
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    auto it = entries.find(key);
    if (it == entries.end()) return fallback;
    std::string v = it->second;
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
      v = v.substr(1, v.size() - 2);
    return v;
  }
};

KeyValue parse_kv(const std::string& text) {
  KeyValue kv;
  std::string section;
  std::size_t start = 0;
  int line_no = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string line = trim(text.substr(start, nl - start));
    start = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line = trim(line.substr(0, hash));
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(line_no));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty() || key.empty())
      throw std::invalid_argument("config: key outside a section at line " +
                                  std::to_string(line_no));
    kv.entries[section + "." + key] = value;
  }
  return kv;
}

const char* const kKnownKeys[] = {
    "dataset.modes_per_side", "dataset.spacing", "dataset.rotation_angle",
    "dataset.sigma_mode", "dataset.n_samples",
    "network.hidden_dim", "network.n_hidden_layers", "network.time_embed_dim",
    "schedule.kind", "schedule.T", "schedule.beta_min", "schedule.beta_max",
    "train.n_steps", "train.batch_size", "train.learning_rate", "train.adam_beta1",
    "train.adam_beta2", "train.adam_eps", "train.loss_log_every",
    "sample.n", "sample.dump_stride", "sample.dump_max_chains", "sample.block_chains",
    "iq.t1", "iq.t2", "iq.lambda", "iq.q", "iq.k", "iq.eps_stab",
    "calibrate.n_reference",
    "filters.lid_step_fraction", "filters.lid_k", "filters.lmi_beta", "filters.lmi_m",
    "filters.lmi_gen_steps", "filters.tvf_t1", "filters.tvf_t2",
    "metrics.mmd_max_samples", "metrics.mmd_unbiased",
    "run.seed", "run.threads",
};

}  // namespace

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  const KeyValue kv = parse_kv(text);
  for (const auto& [key, value] : kv.entries) {
    bool known = false;
    for (const char* k : kKnownKeys)
      if (key == k) {
        known = true;
        break;
      }
    if (!known) throw std::invalid_argument("config: unknown key " + key);
  }

  ExperimentConfig c;
  c.dataset.modes_per_side =
      static_cast<int>(kv.integer("dataset.modes_per_side", c.dataset.modes_per_side));
  c.dataset.spacing = kv.number("dataset.spacing", c.dataset.spacing);
  c.dataset.rotation_angle = kv.number("dataset.rotation_angle", c.dataset.rotation_angle);
  c.dataset.sigma_mode = kv.number("dataset.sigma_mode", c.dataset.sigma_mode);
  c.dataset_samples = static_cast<int>(kv.integer("dataset.n_samples", c.dataset_samples));

  c.network.hidden_dim =
      static_cast<int>(kv.integer("network.hidden_dim", c.network.hidden_dim));
  c.network.n_hidden_layers =
      static_cast<int>(kv.integer("network.n_hidden_layers", c.network.n_hidden_layers));
  c.network.time_embed_dim =
      static_cast<int>(kv.integer("network.time_embed_dim", c.network.time_embed_dim));

  c.schedule_kind = schedule_kind_from_string(kv.text("schedule.kind", "linear"));
  c.schedule_steps = static_cast<int>(kv.integer("schedule.T", c.schedule_steps));
  c.beta_min = kv.number("schedule.beta_min", c.beta_min);
  c.beta_max = kv.number("schedule.beta_max", c.beta_max);

  c.train.n_steps = static_cast<int>(kv.integer("train.n_steps", c.train.n_steps));
  c.train.batch_size = static_cast<int>(kv.integer("train.batch_size", c.train.batch_size));
  c.train.learning_rate = kv.number("train.learning_rate", c.train.learning_rate);
  c.train.adam_beta1 = kv.number("train.adam_beta1", c.train.adam_beta1);
  c.train.adam_beta2 = kv.number("train.adam_beta2", c.train.adam_beta2);
  c.train.adam_eps = kv.number("train.adam_eps", c.train.adam_eps);
  c.train.loss_log_every =
      static_cast<int>(kv.integer("train.loss_log_every", c.train.loss_log_every));

  c.sample_n = static_cast<int>(kv.integer("sample.n", c.sample_n));
  c.dump_stride = static_cast<int>(kv.integer("sample.dump_stride", c.dump_stride));
  c.dump_max_chains =
      static_cast<int>(kv.integer("sample.dump_max_chains", c.dump_max_chains));
  c.block_chains = static_cast<int>(kv.integer("sample.block_chains", c.block_chains));

  c.iq.t1 = kv.number("iq.t1", c.iq.t1);
  c.iq.t2 = kv.number("iq.t2", c.iq.t2);
  c.iq.lambda = kv.number("iq.lambda", c.iq.lambda);
  c.iq.q = kv.number("iq.q", c.iq.q);
  c.iq.k = static_cast<int>(kv.integer("iq.k", c.iq.k));
  c.iq.eps_stab = kv.number("iq.eps_stab", c.iq.eps_stab);

  c.n_reference = static_cast<int>(kv.integer("calibrate.n_reference", c.n_reference));

  c.lid_step_fraction = kv.number("filters.lid_step_fraction", c.lid_step_fraction);
  c.lid_k = static_cast<int>(kv.integer("filters.lid_k", c.lid_k));
  c.lmi_beta = kv.number("filters.lmi_beta", c.lmi_beta);
  c.lmi_m = static_cast<int>(kv.integer("filters.lmi_m", c.lmi_m));
  c.lmi_gen_steps = static_cast<int>(kv.integer("filters.lmi_gen_steps", c.lmi_gen_steps));
  c.tvf_t1 = kv.number("filters.tvf_t1", c.tvf_t1);
  c.tvf_t2 = kv.number("filters.tvf_t2", c.tvf_t2);

  c.mmd_max_samples =
      static_cast<int>(kv.integer("metrics.mmd_max_samples", c.mmd_max_samples));
  c.mmd_unbiased = kv.boolean("metrics.mmd_unbiased", c.mmd_unbiased);

  c.seed = kv.u64("run.seed", c.seed);
  c.threads = static_cast<int>(kv.integer("run.threads", c.threads));
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  return parse(io::read_text(path));
}

std::string ExperimentConfig::serialize() const {
  std::string o;
  auto num = [](double v) { return io::format_double(v); };
  o += "[dataset]\n";
  o += "modes_per_side = " + std::to_string(dataset.modes_per_side) + "\n";
  o += "spacing = " + num(dataset.spacing) + "\n";
  o += "rotation_angle = " + num(dataset.rotation_angle) + "\n";
  o += "sigma_mode = " + num(dataset.sigma_mode) + "\n";
  o += "n_samples = " + std::to_string(dataset_samples) + "\n";
  o += "\n[network]\n";
  o += "hidden_dim = " + std::to_string(network.hidden_dim) + "\n";
  o += "n_hidden_layers = " + std::to_string(network.n_hidden_layers) + "\n";
  o += "time_embed_dim = " + std::to_string(network.time_embed_dim) + "\n";
  o += "\n[schedule]\n";
  o += "kind = \"" + to_string(schedule_kind) + "\"\n";
  o += "T = " + std::to_string(schedule_steps) + "\n";
  o += "beta_min = " + num(beta_min) + "\n";
  o += "beta_max = " + num(beta_max) + "\n";
  o += "\n[train]\n";
  o += "n_steps = " + std::to_string(train.n_steps) + "\n";
  o += "batch_size = " + std::to_string(train.batch_size) + "\n";
  o += "learning_rate = " + num(train.learning_rate) + "\n";
  o += "adam_beta1 = " + num(train.adam_beta1) + "\n";
  o += "adam_beta2 = " + num(train.adam_beta2) + "\n";
  o += "adam_eps = " + num(train.adam_eps) + "\n";
  o += "loss_log_every = " + std::to_string(train.loss_log_every) + "\n";
  o += "\n[sample]\n";
  o += "n = " + std::to_string(sample_n) + "\n";
  o += "dump_stride = " + std::to_string(dump_stride) + "\n";
  o += "dump_max_chains = " + std::to_string(dump_max_chains) + "\n";
  o += "block_chains = " + std::to_string(block_chains) + "\n";
  o += "\n[iq]\n";
  o += "t1 = " + num(iq.t1) + "\n";
  o += "t2 = " + num(iq.t2) + "\n";
  o += "lambda = " + num(iq.lambda) + "\n";
  o += "q = " + num(iq.q) + "\n";
  o += "k = " + std::to_string(iq.k) + "\n";
  o += "eps_stab = " + num(iq.eps_stab) + "\n";
  o += "\n[calibrate]\n";
  o += "n_reference = " + std::to_string(n_reference) + "\n";
  o += "\n[filters]\n";
  o += "lid_step_fraction = " + num(lid_step_fraction) + "\n";
  o += "lid_k = " + std::to_string(lid_k) + "\n";
  o += "lmi_beta = " + num(lmi_beta) + "\n";
  o += "lmi_m = " + std::to_string(lmi_m) + "\n";
  o += "lmi_gen_steps = " + std::to_string(lmi_gen_steps) + "\n";
  o += "tvf_t1 = " + num(tvf_t1) + "\n";
  o += "tvf_t2 = " + num(tvf_t2) + "\n";
  o += "\n[metrics]\n";
  o += "mmd_max_samples = " + std::to_string(mmd_max_samples) + "\n";
  o += "mmd_unbiased = " + std::string(mmd_unbiased ? "true" : "false") + "\n";
  o += "\n[run]\n";
  o += "seed = " + std::to_string(seed) + "\n";
  o += "threads = " + std::to_string(threads) + "\n";
  return o;
}

std::string ExperimentConfig::hash() const {
  const std::string s = serialize();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void ExperimentConfig::validate() const {
  dataset.validate();
  if (dataset_samples < 1) throw std::invalid_argument("config: dataset.n_samples >= 1");
  network.validate();
  if (schedule_steps < 1) throw std::invalid_argument("config: schedule.T >= 1");
  if (schedule_kind == ScheduleKind::kLinear &&
      !(beta_min > 0.0 && beta_min < beta_max && beta_max < 1.0))
    throw std::invalid_argument("config: need 0 < schedule.beta_min < schedule.beta_max < 1");
  train.validate();
  if (sample_n < 1) throw std::invalid_argument("config: sample.n >= 1");
  if (dump_stride < 1) throw std::invalid_argument("config: sample.dump_stride >= 1");
  if (block_chains < 1) throw std::invalid_argument("config: sample.block_chains >= 1");
  iq.validate();
  if (n_reference < 32) throw std::invalid_argument("config: calibrate.n_reference >= 32");
  if (!(lid_step_fraction > 0.0 && lid_step_fraction <= 1.0))
    throw std::invalid_argument("config: filters.lid_step_fraction in (0,1]");
  if (lid_k < 1) throw std::invalid_argument("config: filters.lid_k >= 1");
  if (lmi_beta <= 0.0) throw std::invalid_argument("config: filters.lmi_beta > 0");
  if (lmi_m < 2) throw std::invalid_argument("config: filters.lmi_m >= 2");
  if (lmi_gen_steps < 1 || lmi_gen_steps > schedule_steps)
    throw std::invalid_argument("config: filters.lmi_gen_steps in [1, schedule.T]");
  if (!(tvf_t1 < tvf_t2)) throw std::invalid_argument("config: filters.tvf_t1 < filters.tvf_t2");
  if (mmd_max_samples < 0) throw std::invalid_argument("config: metrics.mmd_max_samples >= 0");
  if (threads < 0) throw std::invalid_argument("config: run.threads >= 0");
}

DiffusionSchedule ExperimentConfig::make_schedule() const {
  return schedule_kind == ScheduleKind::kLinear
             ? DiffusionSchedule::make_linear(schedule_steps, beta_min, beta_max)
             : DiffusionSchedule::make_cosine(schedule_steps);
}

std::uint64_t ExperimentConfig::data_seed() const { return Rng(seed).substream(1).seed(); }
std::uint64_t ExperimentConfig::train_seed() const { return Rng(seed).substream(2).seed(); }
std::uint64_t ExperimentConfig::network_seed() const { return Rng(seed).substream(3).seed(); }
std::uint64_t ExperimentConfig::sample_seed() const { return Rng(seed).substream(4).seed(); }
std::uint64_t ExperimentConfig::calib_seed() const { return Rng(seed).substream(5).seed(); }
std::uint64_t ExperimentConfig::filter_seed() const { return Rng(seed).substream(6).seed(); }

int ExperimentConfig::effective_threads() const {
  if (threads > 0) return threads;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace quench
