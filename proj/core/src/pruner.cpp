#include "dsp/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dsp/metrics.hpp"

namespace dsp {

StrengthMatrix collect_strengths(ModelGraph& model, const Tensor& x,
                                 const std::vector<std::string>& blocks, int batch_size) {
  if (x.ndim() != 3 || x.dim(0) == 0)
    throw std::invalid_argument("strength collection needs a nonempty [N,1,T] split");
  std::vector<std::string> names = blocks.empty() ? model.block_names() : blocks;
  const int N = x.dim(0), T = x.dim(2);

  StrengthMatrix out;
  out.n_samples = N;
  for (const auto& name : names)
    out.s[name] = Tensor(Shape{N, model.block(name).width()});

  for (int start = 0; start < N; start += batch_size) {
    int b = std::min(batch_size, N - start);
    Tensor batch(Shape{b, 1, T});
    std::copy(x.data() + static_cast<std::int64_t>(start) * T,
              x.data() + static_cast<std::int64_t>(start + b) * T, batch.data());
    auto fwd = model.forward(batch, false, names);
    for (const auto& name : names) {
      const Tensor& f = fwd.captures.at(name);  // [b, C, T]
      Tensor& s = out.s[name];
      for (int i = 0; i < b; ++i)
        for (int c = 0; c < f.dim(1); ++c) {
          double ss = 0;
          for (int t = 0; t < T; ++t) {
            double v = f.at(i, c, t);
            ss += v * v;
          }
          s.at(start + i, c) = static_cast<float>(std::sqrt(ss));
        }
    }
  }
  return out;
}

PruningMask thresholds_and_mask(const StrengthMatrix& s) {
  PruningMask out;
  out.n_samples = s.n_samples;
  for (const auto& [name, mat] : s.s) {
    const int N = mat.dim(0), C = mat.dim(1);
    PruningMask::Block b;
    b.m = Tensor(Shape{N, C});
    b.tau.resize(N);
    for (int i = 0; i < N; ++i) {
      double sum = 0;
      for (int c = 0; c < C; ++c) sum += mat.at(i, c);
      b.tau[i] = static_cast<float>(sum / C);
      for (int c = 0; c < C; ++c) b.m.at(i, c) = mat.at(i, c) >= b.tau[i] ? 1.0f : 0.0f;
    }
    out.blocks[name] = std::move(b);
  }
  return out;
}

PruningPlan consensus_plan(const PruningMask& mask, const StrengthMatrix& s,
                           const ModelGraph& model, int n_train) {
  if (mask.n_samples != n_train)
    throw std::invalid_argument("mask covers " + std::to_string(mask.n_samples) +
                                " samples but the training split has " +
                                std::to_string(n_train));
  PruningPlan plan;
  plan.provenance = "dsp-consensus";
  for (const auto& [name, b] : mask.blocks) {
    model.block(name);
    const int N = b.m.dim(0), C = b.m.dim(1);
    std::vector<int> removal;
    for (int c = 0; c < C; ++c) {
      bool active = false;
      for (int i = 0; i < N && !active; ++i) active = b.m.at(i, c) != 0.0f;
      if (!active) removal.push_back(c);
    }
    if (static_cast<int>(removal.size()) == C) {
      // Degenerate: keep the channel with the largest total strength.
      const Tensor& mat = s.s.at(name);
      int best = 0;
      double best_sum = -1;
      for (int c = 0; c < C; ++c) {
        double sum = 0;
        for (int i = 0; i < N; ++i) sum += mat.at(i, c);
        if (sum > best_sum) {
          best_sum = sum;
          best = c;
        }
      }
      removal.erase(std::find(removal.begin(), removal.end(), best));
    }
    if (!removal.empty()) plan.remove[name] = std::move(removal);
  }
  return plan;
}

PruningPlan static_plan(const StrengthMatrix& s, const ModelGraph& model, int filters_per_layer) {
  if (filters_per_layer <= 0)
    throw std::invalid_argument("filters_per_layer must be positive");
  PruningPlan plan;
  plan.provenance = "static-" + std::to_string(filters_per_layer);
  for (const auto& [name, mat] : s.s) {
    model.block(name);
    const int N = mat.dim(0), C = mat.dim(1);
    if (filters_per_layer > C)
      throw std::invalid_argument("filters_per_layer " + std::to_string(filters_per_layer) +
                                  " exceeds block width " + std::to_string(C) + " of " + name);
    std::vector<double> total(C, 0.0);
    for (int i = 0; i < N; ++i)
      for (int c = 0; c < C; ++c) total[c] += mat.at(i, c);
    std::vector<int> order(C);
    std::iota(order.begin(), order.end(), 0);
    // Strongest first; equal strengths keep the lower index.
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return total[a] > total[b]; });
    std::vector<int> removal(order.begin() + filters_per_layer, order.end());
    std::sort(removal.begin(), removal.end());
    if (!removal.empty()) plan.remove[name] = std::move(removal);
  }
  return plan;
}

double pruning_ratio(const ModelGraph& base, const ModelGraph& pruned) {
  return 1.0 - static_cast<double>(count_params(pruned)) /
                   static_cast<double>(count_params(base));
}

}  // namespace dsp
