#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dsp/ops.hpp"
#include "dsp/tape.hpp"
#include "dsp/tensor.hpp"

namespace dsp {

enum class NodeKind {
  Input,
  Conv,       // dilated same-padding cross-correlation, optional bias
  DWConv,     // depthwise, one kernel per channel
  BatchNorm,
  ReLU,
  MaxPool,
  GlobalAvgPool,
  Linear,
  Concat,
  Add,
};

const char* node_kind_name(NodeKind k);
NodeKind node_kind_from_name(const std::string& s);

struct Node {
  NodeKind kind = NodeKind::Input;
  std::vector<int> inputs;
  int kernel = 0;
  int dilation = 1;
  int pool = 0;
  bool trainable = true;  // false: fixed weights (hand-crafted filters)
  bool has_bias = false;
  Tensor weight, bias;   // Conv/DWConv/Linear
  Tensor gamma, beta;    // BatchNorm
  ops::BatchNormStats<float> bn;
};

/// A named group of convolution output channels treated as one pruning
/// decision unit. `capture_node` is the post-activation tensor whose channel
/// range [chan_begin, chan_end) the block governs; every producer conv owns
/// the matching output rows at `row_offset`. Residual-coupled groups list the
/// shortcut conv as an additional producer so an add node's two operands are
/// always pruned identically.
struct PrunableBlock {
  std::string name;
  int capture_node = -1;
  int chan_begin = 0, chan_end = 0;
  struct Producer {
    int node = -1;
    int row_offset = 0;
  };
  std::vector<Producer> producers;
  int width() const { return chan_end - chan_begin; }
};

struct PruningPlan {
  std::map<std::string, std::vector<int>> remove;  // block-local channel indices
  std::string provenance;                          // "dsp-consensus" | "static-k"
  std::map<std::string, std::string> metadata;     // model hash, dataset, lambda, seed

  bool empty() const {
    for (const auto& [k, v] : remove)
      if (!v.empty()) return false;
    return true;
  }
  void save(const std::string& path) const;
  static PruningPlan load(const std::string& path);
};

struct ForwardOutputs {
  Tensor logits;
  std::map<std::string, Tensor> captures;  // block name -> [B, width, T]
};

struct TapeBindings {
  int logits_id = -1;
  std::map<std::string, int> capture_slices;  // block name -> sliced slot id
};

using ZeroMask = std::map<std::string, std::vector<int>>;  // block -> local channels

class ModelGraph {
 public:
  int add_node(Node n);
  void set_io(int input, int output) {
    input_node_ = input;
    output_node_ = output;
  }
  void add_block(PrunableBlock b) { blocks_.push_back(std::move(b)); }
  void set_meta(std::string arch, int series_length, int n_classes) {
    arch_ = std::move(arch);
    series_length_ = series_length;
    n_classes_ = n_classes;
  }
  void validate() const;

  const std::vector<Node>& nodes() const { return nodes_; }
  std::vector<Node>& mutable_nodes() { return nodes_; }
  const std::vector<PrunableBlock>& blocks() const { return blocks_; }
  const PrunableBlock& block(const std::string& name) const;
  std::vector<std::string> block_names() const;
  const std::string& arch() const { return arch_; }
  int series_length() const { return series_length_; }
  int n_classes() const { return n_classes_; }
  int input_node() const { return input_node_; }
  int output_node() const { return output_node_; }

  /// Records the whole graph on `tape`. When `training` is true parameters
  /// are registered for gradients and batchnorm uses batch statistics
  /// (updating running stats); eval mode is a pure function of the stored
  /// state. Captured blocks are returned as channel slices of their
  /// post-activation tensors.
  TapeBindings forward_on_tape(Tape<float>& tape, const Tensor& batch, bool training,
                               const std::vector<std::string>& capture_blocks = {},
                               const ZeroMask* zero_mask = nullptr);

  /// Convenience value-level forward (no gradients recorded).
  ForwardOutputs forward(const Tensor& batch, bool training,
                         const std::vector<std::string>& capture_blocks = {},
                         const ZeroMask* zero_mask = nullptr);

  struct ParamRef {
    std::int64_t key;
    Tensor* tensor;
  };
  /// Trainable parameters in a deterministic order, keyed stably for the
  /// optimizer and the gradient context.
  std::vector<ParamRef> trainable_parameters();

  /// Structural channel removal. Returns a new graph; the input is never
  /// mutated and invalid plans are rejected up front.
  ModelGraph apply_surgery(const PruningPlan& plan) const;

  /// Fresh parameters (fan-in-scaled uniform), batchnorm reset; topology and
  /// fixed filters untouched.
  void reinitialize(std::uint64_t seed);

  /// Writes `<base>.json` (manifest) and `<base>.bin` (little-endian float32
  /// blob); the round trip is lossless.
  void save(const std::string& base) const;
  static ModelGraph load(const std::string& base);

 private:
  std::vector<Node> nodes_;
  std::vector<PrunableBlock> blocks_;
  int input_node_ = -1, output_node_ = -1;
  std::string arch_;
  int series_length_ = 0, n_classes_ = 0;
};

/// Fan-in-scaled uniform init for a conv/linear weight tensor.
void init_weight(Tensor& w, int fan_in, std::mt19937_64& rng);

}  // namespace dsp
