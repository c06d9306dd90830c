#include "dsp/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

namespace dsp {

using nlohmann::json;

const char* node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::Input: return "input";
    case NodeKind::Conv: return "conv";
    case NodeKind::DWConv: return "dwconv";
    case NodeKind::BatchNorm: return "batchnorm";
    case NodeKind::ReLU: return "relu";
    case NodeKind::MaxPool: return "maxpool";
    case NodeKind::GlobalAvgPool: return "gap";
    case NodeKind::Linear: return "linear";
    case NodeKind::Concat: return "concat";
    case NodeKind::Add: return "add";
  }
  return "?";
}

NodeKind node_kind_from_name(const std::string& s) {
  for (NodeKind k : {NodeKind::Input, NodeKind::Conv, NodeKind::DWConv, NodeKind::BatchNorm,
                     NodeKind::ReLU, NodeKind::MaxPool, NodeKind::GlobalAvgPool,
                     NodeKind::Linear, NodeKind::Concat, NodeKind::Add})
    if (s == node_kind_name(k)) return k;
  throw std::invalid_argument("unknown node kind: " + s);
}

int ModelGraph::add_node(Node n) {
  for (int i : n.inputs)
    if (i < 0 || i >= static_cast<int>(nodes_.size()))
      throw std::invalid_argument("node input id out of range (graph must be built in "
                                  "topological order)");
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

void ModelGraph::validate() const {
  if (input_node_ < 0 || output_node_ < 0)
    throw std::logic_error("model graph input/output not set");
  std::set<std::string> names;
  for (const auto& b : blocks_) {
    if (!names.insert(b.name).second)
      throw std::logic_error("duplicate prunable block name " + b.name);
    if (b.capture_node < 0 || b.capture_node >= static_cast<int>(nodes_.size()))
      throw std::logic_error("block capture node out of range");
    if (b.producers.empty() || b.width() <= 0)
      throw std::logic_error("block " + b.name + " has no producers or zero width");
  }
}

const PrunableBlock& ModelGraph::block(const std::string& name) const {
  for (const auto& b : blocks_)
    if (b.name == name) return b;
  throw std::invalid_argument("unknown prunable block: " + name);
}

std::vector<std::string> ModelGraph::block_names() const {
  std::vector<std::string> out;
  for (const auto& b : blocks_) out.push_back(b.name);
  return out;
}

namespace {

constexpr int kSlotWeight = 0, kSlotBias = 1, kSlotGamma = 2, kSlotBeta = 3;

std::int64_t param_key(int node, int slot) { return static_cast<std::int64_t>(node) * 4 + slot; }

int node_out_channels(const std::vector<Node>& nodes, int id) {
  const Node& n = nodes[id];
  switch (n.kind) {
    case NodeKind::Input: return 1;
    case NodeKind::Conv:
    case NodeKind::Linear: return n.weight.dim(0);
    case NodeKind::DWConv: return n.weight.dim(0);
    case NodeKind::BatchNorm:
    case NodeKind::ReLU:
    case NodeKind::MaxPool:
    case NodeKind::GlobalAvgPool: return node_out_channels(nodes, n.inputs[0]);
    case NodeKind::Concat: {
      int c = 0;
      for (int i : n.inputs) c += node_out_channels(nodes, i);
      return c;
    }
    case NodeKind::Add: return node_out_channels(nodes, n.inputs[0]);
  }
  return 0;
}

}  // namespace

TapeBindings ModelGraph::forward_on_tape(Tape<float>& tape, const Tensor& batch,
                                         bool training,
                                         const std::vector<std::string>& capture_blocks,
                                         const ZeroMask* zero_mask) {
  if (batch.ndim() != 3 || batch.dim(1) != 1)
    throw std::invalid_argument("model input must be [B,1,T], got " + shape_str(batch.shape()));
  if (batch.dim(2) != series_length_)
    throw std::invalid_argument("input length " + std::to_string(batch.dim(2)) +
                                " does not match construction length " +
                                std::to_string(series_length_));
  for (const auto& name : capture_blocks) block(name);  // unknown name -> error

  // Union the zero-mask channels per capture node so consumers see the
  // masked activation.
  std::map<int, std::vector<int>> mask_by_node;
  if (zero_mask) {
    for (const auto& [name, chans] : *zero_mask) {
      const PrunableBlock& b = block(name);
      for (int c : chans) {
        if (c < 0 || c >= b.width())
          throw std::invalid_argument("zero-mask channel out of range for block " + name);
        mask_by_node[b.capture_node].push_back(b.chan_begin + c);
      }
    }
  }

  std::vector<int> slot(nodes_.size(), -1);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    auto pid = [&](int node_slot, const Tensor& t) {
      return training && n.trainable ? tape.parameter(t, param_key(static_cast<int>(i), node_slot))
                                     : tape.leaf(t, false);
    };
    int out = -1;
    switch (n.kind) {
      case NodeKind::Input:
        out = tape.leaf(batch, false);
        break;
      case NodeKind::Conv: {
        int w = pid(kSlotWeight, n.weight);
        int b = n.has_bias ? pid(kSlotBias, n.bias) : -1;
        out = ops::conv1d(tape, slot[n.inputs[0]], w, b, n.dilation);
        break;
      }
      case NodeKind::DWConv:
        out = ops::depthwise_conv1d(tape, slot[n.inputs[0]], pid(kSlotWeight, n.weight),
                                    n.dilation);
        break;
      case NodeKind::BatchNorm:
        out = ops::batchnorm1d(tape, slot[n.inputs[0]], pid(kSlotGamma, n.gamma),
                               pid(kSlotBeta, n.beta), n.bn, training);
        break;
      case NodeKind::ReLU:
        out = ops::relu(tape, slot[n.inputs[0]]);
        break;
      case NodeKind::MaxPool:
        out = ops::maxpool1d(tape, slot[n.inputs[0]], n.pool);
        break;
      case NodeKind::GlobalAvgPool:
        out = ops::global_avg_pool(tape, slot[n.inputs[0]]);
        break;
      case NodeKind::Linear: {
        int w = pid(kSlotWeight, n.weight);
        int b = n.has_bias ? pid(kSlotBias, n.bias) : -1;
        out = ops::linear(tape, slot[n.inputs[0]], w, b);
        break;
      }
      case NodeKind::Concat: {
        std::vector<int> ids;
        for (int in : n.inputs) ids.push_back(slot[in]);
        out = ops::concat_channels(tape, ids);
        break;
      }
      case NodeKind::Add:
        out = ops::add(tape, slot[n.inputs[0]], slot[n.inputs[1]]);
        break;
    }
    auto mit = mask_by_node.find(static_cast<int>(i));
    if (mit != mask_by_node.end()) out = ops::zero_channels(tape, out, mit->second);
    slot[i] = out;
  }

  TapeBindings bind;
  bind.logits_id = slot[output_node_];
  for (const auto& name : capture_blocks) {
    const PrunableBlock& b = block(name);
    bind.capture_slices[name] =
        ops::slice_channels(tape, slot[b.capture_node], b.chan_begin, b.chan_end);
  }
  return bind;
}

ForwardOutputs ModelGraph::forward(const Tensor& batch, bool training,
                                   const std::vector<std::string>& capture_blocks,
                                   const ZeroMask* zero_mask) {
  Tape<float> tape;
  TapeBindings bind = forward_on_tape(tape, batch, training, capture_blocks, zero_mask);
  ForwardOutputs out;
  out.logits = tape.value(bind.logits_id);
  for (const auto& [name, id] : bind.capture_slices) out.captures[name] = tape.value(id);
  return out;
}

std::vector<ModelGraph::ParamRef> ModelGraph::trainable_parameters() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node& n = nodes_[i];
    if (!n.trainable) continue;
    int id = static_cast<int>(i);
    switch (n.kind) {
      case NodeKind::Conv:
      case NodeKind::DWConv:
      case NodeKind::Linear:
        out.push_back({param_key(id, kSlotWeight), &n.weight});
        if (n.has_bias) out.push_back({param_key(id, kSlotBias), &n.bias});
        break;
      case NodeKind::BatchNorm:
        out.push_back({param_key(id, kSlotGamma), &n.gamma});
        out.push_back({param_key(id, kSlotBeta), &n.beta});
        break;
      default:
        break;
    }
  }
  return out;
}

namespace {

Tensor select_rows3(const Tensor& w, const std::vector<int>& rows) {
  const int Cin = w.dim(1), K = w.dim(2);
  Tensor out(Shape{static_cast<int>(rows.size()), Cin, K});
  for (std::size_t r = 0; r < rows.size(); ++r)
    std::copy(w.data() + static_cast<std::int64_t>(rows[r]) * Cin * K,
              w.data() + static_cast<std::int64_t>(rows[r] + 1) * Cin * K,
              out.data() + static_cast<std::int64_t>(r) * Cin * K);
  return out;
}

Tensor select_cols3(const Tensor& w, const std::vector<int>& cols) {
  const int Cout = w.dim(0), K = w.dim(2);
  Tensor out(Shape{Cout, static_cast<int>(cols.size()), K});
  for (int o = 0; o < Cout; ++o)
    for (std::size_t c = 0; c < cols.size(); ++c)
      std::copy(w.data() + (static_cast<std::int64_t>(o) * w.dim(1) + cols[c]) * K,
                w.data() + (static_cast<std::int64_t>(o) * w.dim(1) + cols[c] + 1) * K,
                out.data() + (static_cast<std::int64_t>(o) * cols.size() + c) * K);
  return out;
}

Tensor select_vec(const Tensor& v, const std::vector<int>& idx) {
  Tensor out(Shape{static_cast<int>(idx.size())});
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[idx[i]];
  return out;
}

Tensor select_cols2(const Tensor& w, const std::vector<int>& cols) {
  const int Cout = w.dim(0);
  Tensor out(Shape{Cout, static_cast<int>(cols.size())});
  for (int o = 0; o < Cout; ++o)
    for (std::size_t c = 0; c < cols.size(); ++c) out.at(o, static_cast<int>(c)) = w.at(o, cols[c]);
  return out;
}

}  // namespace

ModelGraph ModelGraph::apply_surgery(const PruningPlan& plan) const {
  // Validate the plan against this graph before touching anything.
  std::map<int, std::set<int>> removed_rows;  // conv node -> output rows
  for (const auto& [name, removal] : plan.remove) {
    const PrunableBlock& b = block(name);
    std::set<int> uniq(removal.begin(), removal.end());
    if (uniq.size() != removal.size())
      throw std::invalid_argument("plan has duplicate channels for block " + name);
    for (int c : removal)
      if (c < 0 || c >= b.width())
        throw std::invalid_argument("plan channel " + std::to_string(c) +
                                    " out of range for block " + name);
    if (static_cast<int>(removal.size()) >= b.width())
      throw std::invalid_argument("plan would remove every channel of block " + name);
    for (const auto& p : b.producers)
      for (int c : removal) removed_rows[p.node].insert(p.row_offset + c);
  }

  // Kept original channel indices per node output, propagated through the DAG.
  std::vector<std::vector<int>> keep(nodes_.size());
  auto all_of = [](int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
  };
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    switch (n.kind) {
      case NodeKind::Input:
        keep[i] = all_of(1);
        break;
      case NodeKind::Conv: {
        int rows = n.weight.dim(0);
        auto rit = removed_rows.find(static_cast<int>(i));
        if (rit == removed_rows.end()) {
          keep[i] = all_of(rows);
        } else {
          for (int r = 0; r < rows; ++r)
            if (!rit->second.count(r)) keep[i].push_back(r);
        }
        break;
      }
      case NodeKind::DWConv:
      case NodeKind::BatchNorm:
      case NodeKind::ReLU:
      case NodeKind::MaxPool:
      case NodeKind::GlobalAvgPool:
        keep[i] = keep[n.inputs[0]];
        break;
      case NodeKind::Linear:
        keep[i] = all_of(n.weight.dim(0));
        break;
      case NodeKind::Concat: {
        int off = 0;
        for (int in : n.inputs) {
          for (int c : keep[in]) keep[i].push_back(off + c);
          off += node_out_channels(nodes_, in);
        }
        break;
      }
      case NodeKind::Add:
        if (keep[n.inputs[0]] != keep[n.inputs[1]])
          throw std::invalid_argument(
              "plan breaks add-node shape equality at node " + std::to_string(i) +
              " (residual-coupled producers must be pruned identically)");
        keep[i] = keep[n.inputs[0]];
        break;
    }
  }

  ModelGraph out;
  out.arch_ = arch_;
  out.series_length_ = series_length_;
  out.n_classes_ = n_classes_;
  out.input_node_ = input_node_;
  out.output_node_ = output_node_;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    Node n = nodes_[i];
    const std::vector<int>* in_keep = n.inputs.empty() ? nullptr : &keep[n.inputs[0]];
    switch (n.kind) {
      case NodeKind::Conv: {
        Tensor w = select_rows3(n.weight, keep[i]);
        if (static_cast<int>(in_keep->size()) != n.weight.dim(1)) w = select_cols3(w, *in_keep);
        n.weight = std::move(w);
        if (n.has_bias) n.bias = select_vec(n.bias, keep[i]);
        break;
      }
      case NodeKind::DWConv:
        if (static_cast<int>(in_keep->size()) != n.weight.dim(0))
          n.weight = select_rows3(n.weight, *in_keep);
        break;
      case NodeKind::BatchNorm:
        if (static_cast<int>(in_keep->size()) != n.gamma.size()) {
          n.gamma = select_vec(n.gamma, *in_keep);
          n.beta = select_vec(n.beta, *in_keep);
          if (n.bn.initialized) {
            n.bn.running_mean = select_vec(n.bn.running_mean, *in_keep);
            n.bn.running_var = select_vec(n.bn.running_var, *in_keep);
          }
        }
        break;
      case NodeKind::Linear:
        if (static_cast<int>(in_keep->size()) != n.weight.dim(1))
          n.weight = select_cols2(n.weight, *in_keep);
        break;
      default:
        break;
    }
    out.nodes_.push_back(std::move(n));
  }

  for (const PrunableBlock& b : blocks_) {
    PrunableBlock nb = b;
    const std::vector<int>& ck = keep[b.capture_node];
    nb.chan_begin = static_cast<int>(
        std::lower_bound(ck.begin(), ck.end(), b.chan_begin) - ck.begin());
    nb.chan_end = static_cast<int>(
        std::lower_bound(ck.begin(), ck.end(), b.chan_end) - ck.begin());
    for (auto& p : nb.producers) {
      const std::vector<int>& rk = keep[p.node];
      p.row_offset = static_cast<int>(
          std::lower_bound(rk.begin(), rk.end(), p.row_offset) - rk.begin());
    }
    out.blocks_.push_back(std::move(nb));
  }
  out.validate();
  return out;
}

void init_weight(Tensor& w, int fan_in, std::mt19937_64& rng) {
  const float bound = std::sqrt(3.0f / static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = dist(rng);
}

void ModelGraph::reinitialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (Node& n : nodes_) {
    if (!n.trainable) continue;
    switch (n.kind) {
      case NodeKind::Conv:
        init_weight(n.weight, n.weight.dim(1) * n.weight.dim(2), rng);
        if (n.has_bias) n.bias = Tensor(n.bias.shape());
        break;
      case NodeKind::DWConv:
        init_weight(n.weight, n.weight.dim(2), rng);
        break;
      case NodeKind::Linear:
        init_weight(n.weight, n.weight.dim(1), rng);
        if (n.has_bias) n.bias = Tensor(n.bias.shape());
        break;
      case NodeKind::BatchNorm:
        n.gamma = Tensor(n.gamma.shape(), 1.0f);
        n.beta = Tensor(n.beta.shape());
        n.bn = ops::BatchNormStats<float>{};
        break;
      default:
        break;
    }
  }
}

namespace {

void append_tensor(json& tensors, const char* name, const Tensor& t, std::vector<float>& blob) {
  if (t.empty()) return;
  tensors[name] = {{"shape", t.shape()}, {"offset", blob.size()}};
  blob.insert(blob.end(), t.data(), t.data() + t.size());
}

Tensor read_tensor(const json& tensors, const char* name, const std::vector<float>& blob) {
  if (!tensors.contains(name)) return Tensor();
  Shape shape = tensors[name]["shape"].get<Shape>();
  std::size_t offset = tensors[name]["offset"].get<std::size_t>();
  std::int64_t n = shape_size(shape);
  if (offset + n > blob.size()) throw std::runtime_error("checkpoint blob truncated");
  return Tensor(shape, std::vector<float>(blob.begin() + offset, blob.begin() + offset + n));
}

}  // namespace

void ModelGraph::save(const std::string& base) const {
  json manifest;
  manifest["format"] = "dsp-checkpoint-v1";
  manifest["arch"] = arch_;
  manifest["series_length"] = series_length_;
  manifest["n_classes"] = n_classes_;
  manifest["input"] = input_node_;
  manifest["output"] = output_node_;

  std::vector<float> blob;
  json jnodes = json::array();
  for (const Node& n : nodes_) {
    json jn;
    jn["kind"] = node_kind_name(n.kind);
    jn["inputs"] = n.inputs;
    if (n.kernel) jn["kernel"] = n.kernel;
    if (n.dilation != 1) jn["dilation"] = n.dilation;
    if (n.pool) jn["pool"] = n.pool;
    jn["trainable"] = n.trainable;
    jn["has_bias"] = n.has_bias;
    json tensors = json::object();
    append_tensor(tensors, "weight", n.weight, blob);
    append_tensor(tensors, "bias", n.bias, blob);
    append_tensor(tensors, "gamma", n.gamma, blob);
    append_tensor(tensors, "beta", n.beta, blob);
    if (n.bn.initialized) {
      append_tensor(tensors, "running_mean", n.bn.running_mean, blob);
      append_tensor(tensors, "running_var", n.bn.running_var, blob);
    }
    jn["tensors"] = tensors;
    jnodes.push_back(std::move(jn));
  }
  manifest["nodes"] = std::move(jnodes);

  json jblocks = json::array();
  for (const PrunableBlock& b : blocks_) {
    json jb;
    jb["name"] = b.name;
    jb["capture"] = b.capture_node;
    jb["begin"] = b.chan_begin;
    jb["end"] = b.chan_end;
    json prods = json::array();
    for (const auto& p : b.producers) prods.push_back({{"node", p.node}, {"offset", p.row_offset}});
    jb["producers"] = std::move(prods);
    jblocks.push_back(std::move(jb));
  }
  manifest["blocks"] = std::move(jblocks);
  manifest["blob_floats"] = blob.size();

  std::ofstream jf(base + ".json");
  if (!jf) throw std::runtime_error("cannot write " + base + ".json");
  jf << manifest.dump(1) << "\n";
  std::ofstream bf(base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write " + base + ".bin");
  bf.write(reinterpret_cast<const char*>(blob.data()),
           static_cast<std::streamsize>(blob.size() * sizeof(float)));
}

ModelGraph ModelGraph::load(const std::string& base) {
  std::ifstream jf(base + ".json");
  if (!jf) throw std::runtime_error("cannot read " + base + ".json");
  json manifest = json::parse(jf);
  if (manifest.value("format", "") != "dsp-checkpoint-v1")
    throw std::runtime_error("unrecognized checkpoint format in " + base + ".json");

  std::ifstream bf(base + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot read " + base + ".bin");
  std::vector<float> blob(manifest["blob_floats"].get<std::size_t>());
  bf.read(reinterpret_cast<char*>(blob.data()),
          static_cast<std::streamsize>(blob.size() * sizeof(float)));
  if (static_cast<std::size_t>(bf.gcount()) != blob.size() * sizeof(float))
    throw std::runtime_error("checkpoint blob " + base + ".bin is truncated");

  ModelGraph g;
  g.set_meta(manifest["arch"].get<std::string>(), manifest["series_length"].get<int>(),
             manifest["n_classes"].get<int>());
  for (const json& jn : manifest["nodes"]) {
    Node n;
    n.kind = node_kind_from_name(jn["kind"].get<std::string>());
    n.inputs = jn["inputs"].get<std::vector<int>>();
    n.kernel = jn.value("kernel", 0);
    n.dilation = jn.value("dilation", 1);
    n.pool = jn.value("pool", 0);
    n.trainable = jn["trainable"].get<bool>();
    n.has_bias = jn["has_bias"].get<bool>();
    const json& tensors = jn["tensors"];
    n.weight = read_tensor(tensors, "weight", blob);
    n.bias = read_tensor(tensors, "bias", blob);
    n.gamma = read_tensor(tensors, "gamma", blob);
    n.beta = read_tensor(tensors, "beta", blob);
    if (tensors.contains("running_mean")) {
      n.bn.running_mean = read_tensor(tensors, "running_mean", blob);
      n.bn.running_var = read_tensor(tensors, "running_var", blob);
      n.bn.initialized = true;
    }
    g.add_node(std::move(n));
  }
  for (const json& jb : manifest["blocks"]) {
    PrunableBlock b;
    b.name = jb["name"].get<std::string>();
    b.capture_node = jb["capture"].get<int>();
    b.chan_begin = jb["begin"].get<int>();
    b.chan_end = jb["end"].get<int>();
    for (const json& jp : jb["producers"])
      b.producers.push_back({jp["node"].get<int>(), jp["offset"].get<int>()});
    g.add_block(std::move(b));
  }
  g.set_io(manifest["input"].get<int>(), manifest["output"].get<int>());
  g.validate();
  return g;
}

void PruningPlan::save(const std::string& path) const {
  json j;
  j["provenance"] = provenance;
  j["metadata"] = metadata;
  j["remove"] = remove;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(1) << "\n";
}

PruningPlan PruningPlan::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  json j = json::parse(f);
  PruningPlan p;
  p.provenance = j.value("provenance", "");
  if (j.contains("metadata"))
    p.metadata = j["metadata"].get<std::map<std::string, std::string>>();
  p.remove = j["remove"].get<std::map<std::string, std::vector<int>>>();
  return p;
}

}  // namespace dsp
