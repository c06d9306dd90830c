#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dsp/experiment.hpp"
#include "dsp/synthetic.hpp"

using namespace dsp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

struct CliResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args, const fs::path& scratch) {
  fs::path log = scratch / "cli_out.txt";
  std::string cmd = std::string(DSP_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  int rc = std::system(cmd.c_str());
  std::ifstream f(log);
  std::ostringstream ss;
  ss << f.rdbuf();
  int code = -1;
  if (WIFEXITED(rc)) code = WEXITSTATUS(rc);
  return {code, ss.str()};
}

void write_tiny_config(const std::string& data_dir, const std::string& out_dir,
                       const std::string& cfg_path) {
  ExperimentConfig cfg;
  cfg.datasets = {{"SynthItaly", data_dir + "/SynthItaly_TRAIN.tsv",
                   data_dir + "/SynthItaly_TEST.tsv"}};
  cfg.lambda = 1e-3;
  cfg.epochs = 2;
  cfg.ensemble_size = 1;
  cfg.seeds = {0};
  cfg.out_dir = out_dir;
  cfg.save(cfg_path);
}

}  // namespace

TEST_CASE("gen-data writes the synthetic suite") {
  TempDir dir("dsp_cli_gen");
  CliResult r = run_cli("gen-data --out " + dir.str() + "/data --seed 7", dir.path);
  CHECK(r.exit_code == 0);
  for (const auto& spec : synthetic_suite()) {
    CHECK(fs::exists(dir.path / "data" / (spec.name + "_TRAIN.tsv")));
    CHECK(fs::exists(dir.path / "data" / (spec.name + "_TEST.tsv")));
  }
}

TEST_CASE("train / prune / retrain / evaluate / analyze chain") {
  TempDir dir("dsp_cli_chain");
  write_synthetic_dataset(dir.str(), "SynthItaly", 1);
  std::string cfg = dir.str() + "/cfg.json";
  write_tiny_config(dir.str(), dir.str() + "/runs", cfg);

  CliResult t = run_cli("train --config " + cfg + " --model-out " + dir.str() + "/m", dir.path);
  CHECK(t.exit_code == 0);
  CHECK(fs::exists(dir.path / "m.json"));
  CHECK(fs::exists(dir.path / "m.bin"));
  CHECK(fs::exists(dir.path / "m_train.csv"));

  CliResult p = run_cli("prune --config " + cfg + " --model " + dir.str() + "/m --model-out " +
                            dir.str() + "/p --plan-out " + dir.str() + "/plan.json",
                        dir.path);
  CHECK(p.exit_code == 0);
  CHECK(p.output.find("pruning ratio") != std::string::npos);
  CHECK(fs::exists(dir.path / "plan.json"));

  CliResult rt = run_cli("retrain --config " + cfg + " --model " + dir.str() +
                             "/p --model-out " + dir.str() + "/f --mode finetune",
                         dir.path);
  CHECK(rt.exit_code == 0);

  CliResult ev = run_cli("evaluate --config " + cfg + " --model " + dir.str() +
                             "/f --logits-out " + dir.str() + "/l.csv",
                         dir.path);
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("accuracy") != std::string::npos);
  CHECK(fs::exists(dir.path / "l.csv"));

  CliResult an = run_cli("analyze --config " + cfg + " --model " + dir.str() + "/f --base " +
                             dir.str() + "/m",
                         dir.path);
  CHECK(an.exit_code == 0);
  CHECK(an.output.find("params") != std::string::npos);
  CHECK(an.output.find("flops") != std::string::npos);
  CHECK(an.output.find("pruning_ratio") != std::string::npos);
}

TEST_CASE("pipeline and compare subcommands") {
  TempDir dir("dsp_cli_pipe");
  write_synthetic_dataset(dir.str(), "SynthItaly", 1);
  std::string cfg = dir.str() + "/cfg.json";
  write_tiny_config(dir.str(), dir.str() + "/runs", cfg);

  CliResult pl = run_cli("pipeline --config " + cfg, dir.path);
  CHECK(pl.exit_code == 0);
  CHECK(fs::exists(dir.path / "runs" / "SynthItaly" / "report.csv"));

  // Overrides: a second run into another directory with --lambda 0.
  CliResult pl2 = run_cli("pipeline --config " + cfg + " --lambda 0 --out " + dir.str() + "/runs2",
                          dir.path);
  CHECK(pl2.exit_code == 0);

  CliResult cmp = run_cli("compare --runs " + dir.str() + "/runs " + dir.str() +
                              "/runs2 --labels sparse dense --out " + dir.str() + "/cmp",
                          dir.path);
  CHECK(cmp.exit_code == 0);
  CHECK(fs::exists(dir.path / "cmp" / "comparison.json"));
  CHECK(fs::exists(dir.path / "cmp" / "scatter.csv"));
}

TEST_CASE("errors exit nonzero with a diagnostic") {
  TempDir dir("dsp_cli_err");
  CliResult missing = run_cli("train --model-out " + dir.str() + "/x", dir.path);
  CHECK(missing.exit_code != 0);
  CHECK(missing.output.find("error:") != std::string::npos);

  CliResult badcfg = run_cli("pipeline --config " + dir.str() + "/nope.json", dir.path);
  CHECK(badcfg.exit_code != 0);
  CHECK(badcfg.output.find("error:") != std::string::npos);

  CliResult badsub = run_cli("frobnicate", dir.path);
  CHECK(badsub.exit_code != 0);
}
