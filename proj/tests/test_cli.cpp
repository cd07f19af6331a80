// Exercises the command-line surface: exit codes, env seed override, and
// error diagnostics. The binary path comes from QUENCHLAB_BIN (set by ctest).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "quench/io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli() {
  const char* env = std::getenv("QUENCHLAB_BIN");
  REQUIRE(env != nullptr);
  return env;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("quench_cli_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
  const int status = std::system((cli() + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("bad usage exits with code 2") {
  CHECK(run("") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("gen-data") == 2);  // missing --out
  CHECK(run("sample --ckpt missing.json --out /tmp/x") == 2);
}

TEST_CASE("invalid config field exits 2 with a diagnostic naming the field") {
  TempDir dir;
  std::ofstream(dir.path / "bad.toml") << "[dataset]\nspacing = 0.0\n";
  const std::string cmd = cli() + " gen-data --config " + (dir.path / "bad.toml").string() +
                          " --out " + (dir.path / "out").string() + " 2> " +
                          (dir.path / "err.txt").string();
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 2);
  const std::string err = quench::io::read_text(dir.path / "err.txt");
  CHECK(err.find("spacing") != std::string::npos);
}

TEST_CASE("gen-data writes the dataset and is seed-deterministic") {
  TempDir dir;
  std::ofstream(dir.path / "cfg.toml") << "[dataset]\nn_samples = 128\n[run]\nseed = 5\n";
  const std::string cfg = " --config " + (dir.path / "cfg.toml").string();
  CHECK(run("gen-data" + cfg + " --out " + (dir.path / "a").string()) == 0);
  CHECK(run("gen-data" + cfg + " --out " + (dir.path / "b").string()) == 0);
  const auto a = quench::io::read_text(dir.path / "a" / "dataset.csv");
  const auto b = quench::io::read_text(dir.path / "b" / "dataset.csv");
  CHECK(a == b);
  CHECK(a.substr(0, 9) == "dim0,dim1");
  // 128 rows + header
  CHECK(std::count(a.begin(), a.end(), '\n') == 129);
}

TEST_CASE("QUENCHLAB_SEED overrides the config seed") {
  TempDir dir;
  std::ofstream(dir.path / "cfg.toml") << "[dataset]\nn_samples = 64\n[run]\nseed = 5\n";
  const std::string cfg = " --config " + (dir.path / "cfg.toml").string();
  CHECK(run("gen-data" + cfg + " --out " + (dir.path / "a").string()) == 0);
  const int status = std::system(("QUENCHLAB_SEED=99 " + cli() + " gen-data" + cfg +
                                  " --out " + (dir.path / "b").string() +
                                  " > /dev/null 2>&1")
                                     .c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(quench::io::read_text(dir.path / "a" / "dataset.csv") !=
        quench::io::read_text(dir.path / "b" / "dataset.csv"));
}

TEST_CASE("iq sampling without calibration exits 2") {
  TempDir dir;
  // A checkpoint is required before the calibration check, so build a tiny
  // one through the real pipeline.
  std::ofstream(dir.path / "cfg.toml")
      << "[dataset]\nn_samples = 128\n[network]\nhidden_dim = 8\ntime_embed_dim = 4\n"
      << "[schedule]\nT = 10\n[train]\nn_steps = 2\nbatch_size = 8\n"
      << "[sample]\nn = 4\nblock_chains = 4\n[iq]\nk = 2\n"
      << "[filters]\nlmi_gen_steps = 5\n[run]\nseed = 3\n";
  const std::string cfg = " --config " + (dir.path / "cfg.toml").string();
  REQUIRE(run("gen-data" + cfg + " --out " + (dir.path / "data").string()) == 0);
  REQUIRE(run("train" + cfg + " --data " + (dir.path / "data").string() + " --out " +
              (dir.path / "ckpt.json").string()) == 0);
  CHECK(run("sample" + cfg + " --ckpt " + (dir.path / "ckpt.json").string() +
            " --mode iq --out " + (dir.path / "iq").string()) == 2);
  // Baseline mode needs no calibration.
  CHECK(run("sample" + cfg + " --ckpt " + (dir.path / "ckpt.json").string() +
            " --mode baseline --out " + (dir.path / "base").string()) == 0);
}

TEST_CASE("filter requiring trajectories without dumps exits 2") {
  TempDir dir;
  std::ofstream(dir.path / "cfg.toml")
      << "[dataset]\nn_samples = 128\n[network]\nhidden_dim = 8\ntime_embed_dim = 4\n"
      << "[schedule]\nT = 10\n[train]\nn_steps = 2\nbatch_size = 8\n"
      << "[sample]\nn = 4\nblock_chains = 4\n"
      << "[filters]\nlmi_gen_steps = 5\n[run]\nseed = 3\n";
  const std::string cfg = " --config " + (dir.path / "cfg.toml").string();
  REQUIRE(run("gen-data" + cfg + " --out " + (dir.path / "data").string()) == 0);
  REQUIRE(run("train" + cfg + " --data " + (dir.path / "data").string() + " --out " +
              (dir.path / "ckpt.json").string()) == 0);
  REQUIRE(run("sample" + cfg + " --ckpt " + (dir.path / "ckpt.json").string() +
              " --mode baseline --out " + (dir.path / "base").string()) == 0);
  CHECK(run("filter" + cfg + " --ckpt " + (dir.path / "ckpt.json").string() +
            " --samples " + (dir.path / "base").string() + " --filters tvf --out " +
            (dir.path / "scores.csv").string()) == 2);
}
