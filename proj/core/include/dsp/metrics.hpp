#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsp/model.hpp"

namespace dsp {

struct ComplexityReport {
  std::int64_t param_count = 0;
  std::int64_t flops = 0;  // single-series forward
  std::int64_t memory_bytes = 0;
  double pruning_ratio = 0;
};

/// Stored scalars of every conv/linear/batchnorm-affine tensor. The lite
/// hand-crafted filters are included: they occupy storage and compute, and
/// pruning ratios are measured against the whole stored model.
std::int64_t count_params(const ModelGraph& model);
/// 2 x multiply-accumulates for conv/linear plus elementwise op counts.
std::int64_t count_flops(const ModelGraph& model);
std::int64_t memory_bytes(const ModelGraph& model);
ComplexityReport complexity(const ModelGraph& model, const ModelGraph* base = nullptr);

/// Smallest r with the top-r singular values covering `variance_fraction` of
/// the total squared spectrum. All-zero input is defined as rank 1.
int effective_rank(const Tensor& f, double variance_fraction = 0.95);

/// Channels whose temporal mean strictly exceeds the mean of all channel
/// means.
std::vector<int> active_channels(const Tensor& f);

/// effective_rank(active submatrix) / |active set|; empty active set -> null.
std::optional<double> efficiency_score(const Tensor& f, double variance_fraction = 0.95);

/// Softmax-averaged ensemble vote. If expected_runs > 0, the run count must
/// match it.
double ensemble_accuracy(const std::vector<Tensor>& run_logits, const std::vector<int>& labels,
                         int expected_runs = -1);

/// Two-sided signed-rank p-value: zero diffs dropped, average ranks on ties,
/// exact null distribution for n <= 25, tie- and continuity-corrected normal
/// approximation above.
double wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

struct ComparisonCell {
  double mean_a = 0, mean_b = 0, mean_difference = 0;
  int wins = 0, ties = 0, losses = 0;
  double wilcoxon_p = 1.0;
};

// method -> dataset -> accuracy
using AccuracyTable = std::map<std::string, std::map<std::string, double>>;
using ComparisonMatrix = std::map<std::string, std::map<std::string, ComparisonCell>>;

ComparisonMatrix comparison_matrix(const AccuracyTable& table);
void save_comparison_json(const std::string& path, const ComparisonMatrix& m);

struct ReportRow {
  std::string dataset, method;
  double accuracy = 0;
  std::int64_t params = 0, flops = 0;
  double memory_mb = 0, pruning_ratio = 0;
  std::optional<double> efficiency_base, efficiency_pruned;
};
void save_report_csv(const std::string& path, const std::vector<ReportRow>& rows);

struct ScatterRow {
  std::string method, dataset;
  double accuracy = 0;
  std::int64_t flops = 0, params = 0;
};
void save_scatter_csv(const std::string& path, const std::vector<ScatterRow>& rows);

}  // namespace dsp
