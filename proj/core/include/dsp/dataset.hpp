#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsp/tensor.hpp"

namespace dsp {

struct Dataset {
  std::string name;
  Tensor train_x, test_x;          // [N,1,T]
  std::vector<int> train_y, test_y;
  int n_classes = 0;
  std::map<double, int> label_map;  // original label -> dense index

  int series_length() const { return train_x.dim(2); }
  int n_train() const { return train_x.dim(0); }
  int n_test() const { return test_x.dim(0); }
};

/// Loads a UCR-style tab-separated train/test pair: each row is a label
/// followed by T values. Labels are remapped densely (sorted numerically) and
/// every series is z-normalized with the std floored at 1e-8.
Dataset load_ucr_pair(const std::string& train_path, const std::string& test_path,
                      const std::string& name = "");

/// Writes one split back to the tab format (inverse of the loader up to the
/// already-applied normalization and label remap).
void save_ucr_split(const std::string& path, const Tensor& x, const std::vector<int>& labels);

struct Batch {
  Tensor x;                // [b,1,T]
  std::vector<int> y;
};

/// Epoch batching: every sample exactly once, last batch short; order is a
/// pure function of (seed, epoch) when shuffling.
std::vector<Batch> batches(const Tensor& x, const std::vector<int>& y, int batch_size,
                           bool shuffle, std::uint64_t seed = 0, int epoch = 0);

}  // namespace dsp
