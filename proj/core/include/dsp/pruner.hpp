#pragma once

#include <map>
#include <string>
#include <vector>

#include "dsp/dataset.hpp"
#include "dsp/model.hpp"

namespace dsp {

/// Per-block N x C activation strengths (temporal L2 norms) over a split.
struct StrengthMatrix {
  std::map<std::string, Tensor> s;  // block -> [N, C]
  int n_samples = 0;
};

/// Eval-mode batched strength collection; only the N x C reductions are
/// retained, never the full feature maps.
StrengthMatrix collect_strengths(ModelGraph& model, const Tensor& x,
                                 const std::vector<std::string>& blocks = {},
                                 int batch_size = 64);

struct PruningMask {
  struct Block {
    Tensor m;                // [N, C] in {0,1}
    std::vector<float> tau;  // per-instance thresholds
  };
  std::map<std::string, Block> blocks;
  int n_samples = 0;
};

/// tau_i = channel mean of row i; M[i][j] = 1 iff s_ij >= tau_i (tie active).
PruningMask thresholds_and_mask(const StrengthMatrix& s);

/// Consensus rule: remove channel j iff its mask column is all zero over the
/// whole training split. If that would empty a block, the channel with the
/// largest total strength is retained.
PruningPlan consensus_plan(const PruningMask& mask, const StrengthMatrix& s,
                           const ModelGraph& model, int n_train);

/// Keep the `filters_per_layer` strongest channels of every block (total
/// strength, lower index kept on ties); remove the rest.
PruningPlan static_plan(const StrengthMatrix& s, const ModelGraph& model, int filters_per_layer);

/// 1 - params(pruned)/params(base).
double pruning_ratio(const ModelGraph& base, const ModelGraph& pruned);

}  // namespace dsp
