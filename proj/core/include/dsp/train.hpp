#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsp/dataset.hpp"
#include "dsp/model.hpp"

namespace dsp {

struct TrainConfig {
  double lambda = 1e-5;
  int epochs = 1500;
  int batch_size = 64;
  double lr = 0.001;
  std::uint64_t seed = 0;
  std::vector<std::string> sparsity_blocks;  // empty: all prunable blocks
  std::string csv_path;                      // optional per-epoch trace
};

struct EpochStats {
  int epoch = 0;
  double ce_loss = 0, sparsity_loss = 0, total_loss = 0, lr = 0;
};
using TrainHistory = std::vector<EpochStats>;

/// Minimizes CE + lambda * channel-sparsity with Adam and the plateau
/// scheduler; the model is trained in place and the final epoch wins (no
/// early stopping). Deterministic in (model state, cfg.seed).
TrainHistory train(ModelGraph& model, const Dataset& data, const TrainConfig& cfg);

struct RetrainMode {
  std::string mode = "finetune";  // finetune | scratch
  int epochs = 1500;
  int batch_size = 64;
  double lr = 0.001;
  std::uint64_t seed = 0;
};

/// Post-surgery recovery under plain cross-entropy. Finetune continues from
/// the surviving weights; scratch reinitializes everything first.
TrainHistory retrain(ModelGraph& model, const Dataset& data, const RetrainMode& mode,
                     const std::string& csv_path = "");

void save_history_csv(const std::string& path, const TrainHistory& h);

}  // namespace dsp
