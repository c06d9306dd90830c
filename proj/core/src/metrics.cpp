#include "dsp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <json.hpp>

namespace dsp {

namespace {

int out_channels(const std::vector<Node>& nodes, int id) {
  const Node& n = nodes[id];
  switch (n.kind) {
    case NodeKind::Input: return 1;
    case NodeKind::Conv:
    case NodeKind::Linear:
    case NodeKind::DWConv: return n.weight.dim(0);
    case NodeKind::Concat: {
      int c = 0;
      for (int i : n.inputs) c += out_channels(nodes, i);
      return c;
    }
    default: return out_channels(nodes, n.inputs[0]);
  }
}

}  // namespace

std::int64_t count_params(const ModelGraph& model) {
  std::int64_t n = 0;
  for (const Node& node : model.nodes())
    n += node.weight.size() + node.bias.size() + node.gamma.size() + node.beta.size();
  return n;
}

std::int64_t count_flops(const ModelGraph& model) {
  const std::int64_t T = model.series_length();
  std::int64_t flops = 0;
  const auto& nodes = model.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const Node& n = nodes[i];
    switch (n.kind) {
      case NodeKind::Conv:
        flops += 2 * n.weight.size() * T;          // 2 x MAC per output position
        if (n.has_bias) flops += n.bias.size() * T;
        break;
      case NodeKind::DWConv:
        flops += 2 * n.weight.size() * T;
        break;
      case NodeKind::BatchNorm:
        flops += 2 * static_cast<std::int64_t>(n.gamma.size()) * T;  // scale + shift
        break;
      case NodeKind::ReLU:
        flops += static_cast<std::int64_t>(out_channels(nodes, static_cast<int>(i))) * T;
        break;
      case NodeKind::MaxPool:
        flops += static_cast<std::int64_t>(out_channels(nodes, static_cast<int>(i))) * T * n.pool;
        break;
      case NodeKind::GlobalAvgPool:
      case NodeKind::Add:
        flops += static_cast<std::int64_t>(out_channels(nodes, static_cast<int>(i))) * T;
        break;
      case NodeKind::Linear:
        flops += 2 * n.weight.size();
        if (n.has_bias) flops += n.bias.size();
        break;
      case NodeKind::Input:
      case NodeKind::Concat:
        break;
    }
  }
  return flops;
}

std::int64_t memory_bytes(const ModelGraph& model) { return 4 * count_params(model); }

ComplexityReport complexity(const ModelGraph& model, const ModelGraph* base) {
  ComplexityReport r;
  r.param_count = count_params(model);
  r.flops = count_flops(model);
  r.memory_bytes = memory_bytes(model);
  if (base)
    r.pruning_ratio = 1.0 - static_cast<double>(r.param_count) /
                                static_cast<double>(count_params(*base));
  return r;
}

int effective_rank(const Tensor& f, double variance_fraction) {
  if (f.ndim() != 2) throw std::invalid_argument("effective_rank expects a [C,T] matrix");
  const int C = f.dim(0), T = f.dim(1);
  Eigen::MatrixXd m(C, T);
  for (int c = 0; c < C; ++c)
    for (int t = 0; t < T; ++t) m(c, t) = f.at(c, t);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  Eigen::VectorXd sv = svd.singularValues();
  double total = sv.array().square().sum();
  if (total <= 0) return 1;  // all-zero matrix: degenerate convention
  double acc = 0;
  for (int r = 0; r < sv.size(); ++r) {
    acc += sv[r] * sv[r];
    if (acc >= variance_fraction * total) return r + 1;
  }
  return static_cast<int>(sv.size());
}

std::vector<int> active_channels(const Tensor& f) {
  if (f.ndim() != 2) throw std::invalid_argument("active_channels expects a [C,T] matrix");
  const int C = f.dim(0), T = f.dim(1);
  std::vector<double> mean(C, 0.0);
  for (int c = 0; c < C; ++c) {
    for (int t = 0; t < T; ++t) mean[c] += f.at(c, t);
    mean[c] /= T;
  }
  double grand = std::accumulate(mean.begin(), mean.end(), 0.0) / C;
  std::vector<int> active;
  for (int c = 0; c < C; ++c)
    if (mean[c] > grand) active.push_back(c);
  return active;
}

std::optional<double> efficiency_score(const Tensor& f, double variance_fraction) {
  std::vector<int> act = active_channels(f);
  if (act.empty()) return std::nullopt;
  Tensor sub(Shape{static_cast<int>(act.size()), f.dim(1)});
  for (std::size_t i = 0; i < act.size(); ++i)
    for (int t = 0; t < f.dim(1); ++t) sub.at(static_cast<int>(i), t) = f.at(act[i], t);
  return static_cast<double>(effective_rank(sub, variance_fraction)) /
         static_cast<double>(act.size());
}

double ensemble_accuracy(const std::vector<Tensor>& run_logits, const std::vector<int>& labels,
                         int expected_runs) {
  if (run_logits.empty()) throw std::invalid_argument("ensemble needs at least one run");
  if (expected_runs > 0 && static_cast<int>(run_logits.size()) != expected_runs)
    throw std::invalid_argument("expected " + std::to_string(expected_runs) + " runs, got " +
                                std::to_string(run_logits.size()));
  const Tensor& first = run_logits.front();
  if (first.ndim() != 2) throw std::invalid_argument("run logits must be [N,K]");
  const int N = first.dim(0), K = first.dim(1);
  if (N != static_cast<int>(labels.size()))
    throw std::invalid_argument("label count does not match logits");
  for (const Tensor& t : run_logits)
    if (!t.same_shape(first)) throw std::invalid_argument("runs disagree on logits shape");

  int correct = 0;
  std::vector<double> probs(K);
  for (int i = 0; i < N; ++i) {
    std::fill(probs.begin(), probs.end(), 0.0);
    for (const Tensor& t : run_logits) {
      double mx = t.at(i, 0);
      for (int k = 1; k < K; ++k) mx = std::max(mx, static_cast<double>(t.at(i, k)));
      double z = 0;
      for (int k = 0; k < K; ++k) z += std::exp(t.at(i, k) - mx);
      for (int k = 0; k < K; ++k) probs[k] += std::exp(t.at(i, k) - mx) / z;
    }
    int arg = 0;
    for (int k = 1; k < K; ++k)
      if (probs[k] > probs[arg]) arg = k;  // lowest index wins ties
    correct += arg == labels[i];
  }
  return static_cast<double>(correct) / N;
}

double wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("wilcoxon inputs must be equal-length and nonempty");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  if (d.empty()) return 1.0;
  const int n = static_cast<int>(d.size());

  // Average ranks of |d|, doubled so ties stay integral.
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int x, int y) { return std::abs(d[x]) < std::abs(d[y]); });
  std::vector<int> rank2(n);
  std::vector<int> tie_sizes;
  for (int i = 0; i < n;) {
    int j = i;
    while (j < n && std::abs(d[idx[j]]) == std::abs(d[idx[i]])) ++j;
    int avg2 = (i + 1) + j;  // 2 * average of ranks i+1..j
    for (int k = i; k < j; ++k) rank2[idx[k]] = avg2;
    tie_sizes.push_back(j - i);
    i = j;
  }
  long w2_pos = 0, w2_total = 0;
  for (int i = 0; i < n; ++i) {
    w2_total += rank2[i];
    if (d[i] > 0) w2_pos += rank2[i];
  }
  long w2_min = std::min(w2_pos, w2_total - w2_pos);

  if (n <= 25) {
    // Exact null: all sign assignments equally likely; DP over doubled-rank sums.
    std::vector<double> count(w2_total + 1, 0.0);
    count[0] = 1.0;
    for (int i = 0; i < n; ++i)
      for (long s = w2_total; s >= rank2[i]; --s) count[s] += count[s - rank2[i]];
    double below = 0, total = std::ldexp(1.0, n);
    for (long s = 0; s <= w2_min; ++s) below += count[s];
    return std::min(1.0, 2.0 * below / total);
  }

  double w = w2_min / 2.0;
  double mean = n * (n + 1) / 4.0;
  double var = n * (n + 1) * (2.0 * n + 1) / 24.0;
  for (int t : tie_sizes) var -= (static_cast<double>(t) * t * t - t) / 48.0;
  if (var <= 0) return 1.0;
  double z = (w - mean + 0.5) / std::sqrt(var);  // continuity correction toward the mean
  double p = std::erfc(-z / std::sqrt(2.0));    // 2 * Phi(z), z <= 0 here
  return std::min(1.0, p);
}

ComparisonMatrix comparison_matrix(const AccuracyTable& table) {
  if (table.empty()) throw std::invalid_argument("comparison_matrix needs at least one method");
  std::vector<std::string> datasets;
  for (const auto& [ds, acc] : table.begin()->second) datasets.push_back(ds);
  for (const auto& [method, accs] : table) {
    std::vector<std::string> ds;
    for (const auto& [name, acc] : accs) ds.push_back(name);
    if (ds != datasets)
      throw std::invalid_argument("method " + method + " was not evaluated on the same datasets");
  }
  if (datasets.empty()) throw std::invalid_argument("comparison_matrix needs datasets");

  ComparisonMatrix m;
  for (const auto& [ma, accs_a] : table)
    for (const auto& [mb, accs_b] : table) {
      ComparisonCell cell;
      std::vector<double> va, vb;
      for (const auto& ds : datasets) {
        double x = accs_a.at(ds), y = accs_b.at(ds);
        va.push_back(x);
        vb.push_back(y);
        if (x > y)
          ++cell.wins;
        else if (x < y)
          ++cell.losses;
        else
          ++cell.ties;
      }
      cell.mean_a = std::accumulate(va.begin(), va.end(), 0.0) / va.size();
      cell.mean_b = std::accumulate(vb.begin(), vb.end(), 0.0) / vb.size();
      cell.mean_difference = cell.mean_a - cell.mean_b;
      cell.wilcoxon_p = wilcoxon_signed_rank(va, vb);
      m[ma][mb] = cell;
    }
  return m;
}

void save_comparison_json(const std::string& path, const ComparisonMatrix& m) {
  nlohmann::json j;
  for (const auto& [a, row] : m)
    for (const auto& [b, c] : row)
      j["cells"][a][b] = {{"mean_accuracy_a", c.mean_a},    {"mean_accuracy_b", c.mean_b},
                          {"mean_difference", c.mean_difference},
                          {"wins", c.wins},                 {"ties", c.ties},
                          {"losses", c.losses},             {"wilcoxon_p", c.wilcoxon_p}};
  for (const auto& [a, row] : m) j["methods"].push_back(a);
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(1) << "\n";
}

void save_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "dataset, method, accuracy, params, flops, memory_mb, pruning_ratio, efficiency_base, "
       "efficiency_pruned\n";
  char buf[256];
  auto opt = [](const std::optional<double>& v) {
    if (!v) return std::string();
    char b[32];
    std::snprintf(b, sizeof(b), "%.6g", *v);
    return std::string(b);
  };
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s, %s, %.6g, %lld, %lld, %.6g, %.6g, %s, %s\n",
                  r.dataset.c_str(), r.method.c_str(), r.accuracy,
                  static_cast<long long>(r.params), static_cast<long long>(r.flops), r.memory_mb,
                  r.pruning_ratio, opt(r.efficiency_base).c_str(),
                  opt(r.efficiency_pruned).c_str());
    f << buf;
  }
}

void save_scatter_csv(const std::string& path, const std::vector<ScatterRow>& rows) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "method, dataset, accuracy, flops, params\n";
  char buf[192];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s, %s, %.6g, %lld, %lld\n", r.method.c_str(),
                  r.dataset.c_str(), r.accuracy, static_cast<long long>(r.flops),
                  static_cast<long long>(r.params));
    f << buf;
  }
}

}  // namespace dsp
