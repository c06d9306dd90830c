#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsp/arch.hpp"
#include "dsp/dataset.hpp"
#include "dsp/metrics.hpp"
#include "dsp/model.hpp"

namespace dsp {

struct DatasetRef {
  std::string name, train_path, test_path;
};

struct ExperimentConfig {
  std::vector<DatasetRef> datasets;
  ArchConfig arch;  // n_classes/series_length filled per dataset at runtime
  double lambda = 1e-5;
  int epochs = 300;
  int batch_size = 64;
  double lr = 0.001;
  int ensemble_size = 5;
  std::vector<std::uint64_t> seeds;  // defaults to 0..ensemble_size-1
  std::vector<std::string> retrain_modes = {"finetune", "scratch"};
  std::vector<int> static_baselines;
  std::string out_dir = "runs";

  void validate() const;
  static ExperimentConfig load(const std::string& path);
  void save(const std::string& path) const;
  /// Stable content hash of every field that affects results.
  std::string hash() const;
};

/// Stage ledger for one (dataset) pipeline: artifact paths with content
/// hashes; a stage whose artifacts all verify is skipped on re-run.
struct RunManifest {
  std::string config_hash;
  struct Artifact {
    std::string path;  // relative to the dataset directory
    std::string hash;
  };
  std::map<std::string, std::vector<Artifact>> stages;

  void save(const std::string& path) const;
  static RunManifest load(const std::string& path);
  bool stage_done(const std::string& stage, const std::string& dir) const;
};

std::string fnv1a_file(const std::string& path);

/// Eval-mode logits over a split, batched.
Tensor eval_logits(ModelGraph& model, const Tensor& x, int batch_size = 64);
double accuracy_from_logits(const Tensor& logits, const std::vector<int>& labels);
void save_logits_csv(const std::string& path, const Tensor& logits);
Tensor load_logits_csv(const std::string& path);

/// Full per-dataset pipeline: per seed base training, sparsity pretraining,
/// consensus pruning, retraining per mode, static baselines; then ensemble
/// reports. Artifacts live in `<out_dir>/<dataset>/`; completed stages are
/// skipped when their manifest hashes verify.
RunManifest run_pipeline(const ExperimentConfig& cfg, const DatasetRef& ref,
                         std::ostream* log = nullptr);

/// Convenience: run every dataset in the config.
std::vector<RunManifest> run_all(const ExperimentConfig& cfg, std::ostream* log = nullptr);

/// Reads `report.csv` files back (inverse of save_report_csv).
std::vector<ReportRow> load_report_csv(const std::string& path);

struct CompareOutputs {
  ComparisonMatrix matrix;
  std::vector<ScatterRow> scatter;
};
/// Cross-run comparison over the shared dataset list of several pipeline
/// output roots. Methods are labeled `<run-label>:<variant>`.
CompareOutputs compare_runs(const std::vector<std::string>& run_dirs,
                            const std::vector<std::string>& labels);

extern const std::vector<std::string> kVariantOrder;  // Base..Scratch

}  // namespace dsp
