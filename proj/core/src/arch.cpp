#include "dsp/arch.hpp"

#include <algorithm>
#include <stdexcept>

namespace dsp {

namespace {

void check_config(const ArchConfig& cfg) {
  if (cfg.n_classes < 2) throw std::invalid_argument("n_classes must be >= 2");
  if (cfg.series_length < 1) throw std::invalid_argument("series_length must be positive");
  if (cfg.depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (cfg.n_filters < 1) throw std::invalid_argument("n_filters must be >= 1");
  for (int k : cfg.kernel_sizes)
    if (k < 1) throw std::invalid_argument("kernel sizes must be positive");
}

void check_span(const ArchConfig& cfg, int span) {
  if (cfg.series_length < span)
    throw std::invalid_argument(
        "series length " + std::to_string(cfg.series_length) +
        " is shorter than the largest effective kernel span " + std::to_string(span) +
        "; same padding would be mostly zeros");
}

Node conv_node(int input, int cout, int cin, int k, int dilation, bool bias) {
  Node n;
  n.kind = NodeKind::Conv;
  n.inputs = {input};
  n.kernel = k;
  n.dilation = dilation;
  n.has_bias = bias;
  n.weight = Tensor(Shape{cout, cin, k});
  if (bias) n.bias = Tensor(Shape{cout});
  return n;
}

Node bn_node(int input, int channels) {
  Node n;
  n.kind = NodeKind::BatchNorm;
  n.inputs = {input};
  n.gamma = Tensor(Shape{channels}, 1.0f);
  n.beta = Tensor(Shape{channels});
  return n;
}

Node unary(NodeKind kind, int input) {
  Node n;
  n.kind = kind;
  n.inputs = {input};
  return n;
}

}  // namespace

FixedFilterBank make_fixed_filters() {
  FixedFilterBank bank;
  // Trend kernels: alternating-sign ones; even positions negated detect
  // increases, odd positions negated detect decreases.
  for (int ks : {2, 4, 8, 16, 32, 64}) {
    Tensor w(Shape{2, 1, ks});
    for (int t = 0; t < ks; ++t) {
      w.at(0, 0, t) = (t % 2 == 0) ? -1.0f : 1.0f;
      w.at(1, 0, t) = (t % 2 == 0) ? 1.0f : -1.0f;
    }
    bank.groups.emplace_back(ks, std::move(w));
    bank.total_channels += 2;
  }
  // Peak kernels: negative quadratic shoulders around a doubled positive bump,
  // length 3/2 of the base size.
  for (int ks : {6, 12, 24, 48, 96}) {
    const int q = ks / 4, len = ks + ks / 2;
    std::vector<float> left(q), right(q);
    for (int m = 0; m < q; ++m) {
      float x = static_cast<float>(m + 1) / static_cast<float>(q);
      left[m] = x * x;
    }
    std::reverse_copy(left.begin(), left.end(), right.begin());
    Tensor w(Shape{1, 1, len});
    auto fill = [&](int b, int e, const std::vector<float>& v, float scale) {
      for (int t = b; t < e; ++t)
        w.at(0, 0, t) = scale * (static_cast<int>(v.size()) == e - b ? v[t - b] : v[0]);
    };
    fill(0, q, left, -1.0f);
    fill(q, ks / 2, right, -1.0f);
    fill(ks / 2, 3 * ks / 4, left, 2.0f);
    fill(3 * ks / 4, ks, right, 2.0f);
    fill(ks, 5 * ks / 4, left, -1.0f);
    fill(5 * ks / 4, len, right, -1.0f);
    bank.groups.emplace_back(len, std::move(w));
    bank.total_channels += 1;
  }
  return bank;
}

ModelGraph build_lite(const ArchConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  if (cfg.architecture != "lite") throw std::invalid_argument("config architecture is not lite");
  if (cfg.dwsc_kernels.size() != cfg.dwsc_dilations.size())
    throw std::invalid_argument("dwsc kernel/dilation schedules differ in length");
  int span = 0;
  for (int k : cfg.kernel_sizes) span = std::max(span, k);
  for (std::size_t i = 0; i < cfg.dwsc_kernels.size(); ++i)
    span = std::max(span, (cfg.dwsc_kernels[i] - 1) * cfg.dwsc_dilations[i] + 1);
  check_span(cfg, span);

  ModelGraph g;
  g.set_meta("lite", cfg.series_length, cfg.n_classes);
  Node in;
  in.kind = NodeKind::Input;
  int input = g.add_node(std::move(in));

  const int nf = cfg.n_filters;
  std::vector<int> concat_in;
  std::vector<int> branch_convs;
  for (int k : cfg.kernel_sizes) {
    int c = g.add_node(conv_node(input, nf, 1, k, 1, false));
    branch_convs.push_back(c);
    concat_in.push_back(c);
  }
  int channels = nf * static_cast<int>(cfg.kernel_sizes.size());
  if (cfg.use_custom_filters) {
    FixedFilterBank bank = make_fixed_filters();
    for (auto& [ks, w] : bank.groups) {
      Node n;
      n.kind = NodeKind::Conv;
      n.inputs = {input};
      n.kernel = ks;
      n.trainable = false;
      n.weight = std::move(w);
      concat_in.push_back(g.add_node(std::move(n)));
    }
    channels += bank.total_channels;
  }
  Node cat;
  cat.kind = NodeKind::Concat;
  cat.inputs = concat_in;
  int x = g.add_node(std::move(cat));
  x = g.add_node(bn_node(x, channels));
  x = g.add_node(unary(NodeKind::ReLU, x));

  for (std::size_t j = 0; j < branch_convs.size(); ++j) {
    PrunableBlock b;
    b.name = "block1.branch" + std::to_string(j);
    b.capture_node = x;
    b.chan_begin = static_cast<int>(j) * nf;
    b.chan_end = b.chan_begin + nf;
    b.producers = {{branch_convs[j], 0}};
    g.add_block(std::move(b));
  }

  for (std::size_t i = 0; i < cfg.dwsc_kernels.size(); ++i) {
    Node dw;
    dw.kind = NodeKind::DWConv;
    dw.inputs = {x};
    dw.kernel = cfg.dwsc_kernels[i];
    dw.dilation = cfg.dwsc_dilations[i];
    dw.weight = Tensor(Shape{channels, 1, dw.kernel});
    int d = g.add_node(std::move(dw));
    int pw = g.add_node(conv_node(d, nf, channels, 1, 1, false));
    x = g.add_node(bn_node(pw, nf));
    x = g.add_node(unary(NodeKind::ReLU, x));
    PrunableBlock b;
    b.name = "block" + std::to_string(i + 2) + ".branch0";
    b.capture_node = x;
    b.chan_begin = 0;
    b.chan_end = nf;
    b.producers = {{pw, 0}};
    g.add_block(std::move(b));
    channels = nf;
  }

  int gap = g.add_node(unary(NodeKind::GlobalAvgPool, x));
  Node lin;
  lin.kind = NodeKind::Linear;
  lin.inputs = {gap};
  lin.has_bias = true;
  lin.weight = Tensor(Shape{cfg.n_classes, channels});
  lin.bias = Tensor(Shape{cfg.n_classes});
  int out = g.add_node(std::move(lin));
  g.set_io(input, out);
  g.validate();
  g.reinitialize(seed);
  return g;
}

ModelGraph build_inception(const ArchConfig& cfg, std::uint64_t seed) {
  check_config(cfg);
  if (cfg.architecture != "inception")
    throw std::invalid_argument("config architecture is not inception");
  int span = 0;
  for (int k : cfg.kernel_sizes) span = std::max(span, k);
  check_span(cfg, span);

  ModelGraph g;
  g.set_meta("inception", cfg.series_length, cfg.n_classes);
  Node in;
  in.kind = NodeKind::Input;
  int input = g.add_node(std::move(in));

  const int nf = cfg.n_filters;
  const int n_branch = static_cast<int>(cfg.kernel_sizes.size()) + 1;
  int x = input, x_channels = 1;
  int res = input, res_channels = 1;
  for (int m = 0; m < cfg.depth; ++m) {
    // A 1-channel input gains nothing from a 1x1 bottleneck, so skip it.
    int body = x, body_ch = x_channels;
    if (x_channels > 1) {
      body = g.add_node(conv_node(x, cfg.bottleneck_size, x_channels, 1, 1, false));
      body_ch = cfg.bottleneck_size;
    }
    std::vector<int> branch_convs, concat_in;
    for (int k : cfg.kernel_sizes) {
      int c = g.add_node(conv_node(body, nf, body_ch, k, 1, false));
      branch_convs.push_back(c);
      concat_in.push_back(c);
    }
    Node mp = unary(NodeKind::MaxPool, x);
    mp.pool = 3;
    int mpc = g.add_node(conv_node(g.add_node(std::move(mp)), nf, x_channels, 1, 1, false));
    branch_convs.push_back(mpc);
    concat_in.push_back(mpc);

    Node cat;
    cat.kind = NodeKind::Concat;
    cat.inputs = concat_in;
    int channels = nf * n_branch;
    int y = g.add_node(bn_node(g.add_node(std::move(cat)), channels));

    int shortcut_conv = -1;
    bool residual = cfg.use_residual && (m % 3 == 2);
    if (residual) {
      shortcut_conv = g.add_node(conv_node(res, channels, res_channels, 1, 1, false));
      int sb = g.add_node(bn_node(shortcut_conv, channels));
      Node add;
      add.kind = NodeKind::Add;
      add.inputs = {y, sb};
      y = g.add_node(std::move(add));
    }
    y = g.add_node(unary(NodeKind::ReLU, y));

    for (int j = 0; j < n_branch; ++j) {
      PrunableBlock b;
      b.name = "block" + std::to_string(m + 1) + ".branch" + std::to_string(j);
      b.capture_node = y;
      b.chan_begin = j * nf;
      b.chan_end = b.chan_begin + nf;
      b.producers = {{branch_convs[j], 0}};
      if (residual) b.producers.push_back({shortcut_conv, j * nf});
      g.add_block(std::move(b));
    }

    x = y;
    x_channels = channels;
    if (residual) {
      res = y;
      res_channels = channels;
    }
  }

  int gap = g.add_node(unary(NodeKind::GlobalAvgPool, x));
  Node lin;
  lin.kind = NodeKind::Linear;
  lin.inputs = {gap};
  lin.has_bias = true;
  lin.weight = Tensor(Shape{cfg.n_classes, x_channels});
  lin.bias = Tensor(Shape{cfg.n_classes});
  int out = g.add_node(std::move(lin));
  g.set_io(input, out);
  g.validate();
  g.reinitialize(seed);
  return g;
}

ModelGraph build_model(const ArchConfig& cfg, std::uint64_t seed) {
  if (cfg.architecture == "lite") return build_lite(cfg, seed);
  if (cfg.architecture == "inception") return build_inception(cfg, seed);
  throw std::invalid_argument("unknown architecture: " + cfg.architecture);
}

}  // namespace dsp
