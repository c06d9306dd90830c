#include "dsp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dsp {

namespace {

struct RawSplit {
  std::vector<double> labels;
  std::vector<std::vector<float>> series;
};

RawSplit read_split(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open dataset file " + path);
  RawSplit out;
  std::string line;
  std::size_t row = 0;
  while (std::getline(f, line)) {
    ++row;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string cell;
    std::vector<float> vals;
    double label = 0;
    bool first = true;
    while (std::getline(ss, cell, '\t')) {
      if (cell.empty()) continue;
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        throw std::runtime_error(path + " row " + std::to_string(row) +
                                 ": non-numeric cell '" + cell + "'");
      }
      if (used != cell.size())
        throw std::runtime_error(path + " row " + std::to_string(row) +
                                 ": non-numeric cell '" + cell + "'");
      if (!std::isfinite(v))
        throw std::runtime_error(path + " row " + std::to_string(row) +
                                 ": NaN/inf value is not supported");
      if (first) {
        label = v;
        first = false;
      } else {
        vals.push_back(static_cast<float>(v));
      }
    }
    if (first) continue;
    if (vals.empty())
      throw std::runtime_error(path + " row " + std::to_string(row) + ": label without values");
    if (!out.series.empty() && vals.size() != out.series.front().size())
      throw std::runtime_error(path + " row " + std::to_string(row) + ": ragged row (length " +
                               std::to_string(vals.size()) + " vs " +
                               std::to_string(out.series.front().size()) + ")");
    out.labels.push_back(label);
    out.series.push_back(std::move(vals));
  }
  if (out.series.empty()) throw std::runtime_error(path + ": no data rows");
  return out;
}

void znorm(std::vector<float>& v) {
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double ss = 0;
  for (float x : v) ss += (x - mean) * (x - mean);
  double sd = std::max(std::sqrt(ss / v.size()), 1e-8);
  for (float& x : v) x = static_cast<float>((x - mean) / sd);
}

Tensor pack(const std::vector<std::vector<float>>& series) {
  int N = static_cast<int>(series.size());
  int T = static_cast<int>(series.front().size());
  Tensor x(Shape{N, 1, T});
  for (int i = 0; i < N; ++i)
    std::copy(series[i].begin(), series[i].end(), x.data() + static_cast<std::int64_t>(i) * T);
  return x;
}

}  // namespace

Dataset load_ucr_pair(const std::string& train_path, const std::string& test_path,
                      const std::string& name) {
  RawSplit train = read_split(train_path);
  RawSplit test = read_split(test_path);
  if (train.series.front().size() != test.series.front().size())
    throw std::runtime_error("train/test series lengths differ (" +
                             std::to_string(train.series.front().size()) + " vs " +
                             std::to_string(test.series.front().size()) + ")");

  Dataset d;
  d.name = name;
  std::set<double> uniq(train.labels.begin(), train.labels.end());
  int idx = 0;
  for (double l : uniq) d.label_map[l] = idx++;
  d.n_classes = idx;
  for (double l : test.labels)
    if (!d.label_map.count(l))
      throw std::runtime_error("label " + std::to_string(l) +
                               " appears in test but not in train");

  for (auto& s : train.series) znorm(s);
  for (auto& s : test.series) znorm(s);
  d.train_x = pack(train.series);
  d.test_x = pack(test.series);
  for (double l : train.labels) d.train_y.push_back(d.label_map.at(l));
  for (double l : test.labels) d.test_y.push_back(d.label_map.at(l));
  return d;
}

void save_ucr_split(const std::string& path, const Tensor& x, const std::vector<int>& labels) {
  if (x.ndim() != 3 || x.dim(0) != static_cast<int>(labels.size()))
    throw std::invalid_argument("split tensor/label mismatch");
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  const int T = x.dim(2);
  char buf[32];
  for (int i = 0; i < x.dim(0); ++i) {
    f << labels[i];
    for (int t = 0; t < T; ++t) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(x.at(i, 0, t)));
      f << '\t' << buf;
    }
    f << '\n';
  }
}

std::vector<Batch> batches(const Tensor& x, const std::vector<int>& y, int batch_size,
                           bool shuffle, std::uint64_t seed, int epoch) {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const int N = x.dim(0), T = x.dim(2);
  if (N != static_cast<int>(y.size()))
    throw std::invalid_argument("sample/label count mismatch");
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Batch> out;
  for (int start = 0; start < N; start += batch_size) {
    int b = std::min(batch_size, N - start);
    Batch batch;
    batch.x = Tensor(Shape{b, 1, T});
    batch.y.resize(b);
    for (int i = 0; i < b; ++i) {
      int src = order[start + i];
      std::copy(x.data() + static_cast<std::int64_t>(src) * T,
                x.data() + static_cast<std::int64_t>(src + 1) * T,
                batch.x.data() + static_cast<std::int64_t>(i) * T);
      batch.y[i] = y[src];
    }
    out.push_back(std::move(batch));
  }
  return out;
}

}  // namespace dsp
