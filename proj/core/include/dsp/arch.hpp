#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsp/model.hpp"

namespace dsp {

struct ArchConfig {
  std::string architecture = "lite";  // lite | inception
  int n_filters = 32;
  int depth = 6;  // inception module count
  std::vector<int> kernel_sizes = {40, 20, 10};
  int bottleneck_size = 32;
  bool use_residual = true;
  bool use_custom_filters = true;
  std::vector<int> dwsc_kernels = {20, 10};
  std::vector<int> dwsc_dilations = {2, 4};
  int n_classes = 0;
  int series_length = 0;
};

ModelGraph build_lite(const ArchConfig& cfg, std::uint64_t seed);
ModelGraph build_inception(const ArchConfig& cfg, std::uint64_t seed);
ModelGraph build_model(const ArchConfig& cfg, std::uint64_t seed);

/// The fixed increasing/decreasing/peak-detection kernels used by the lite
/// first block. Returned as (kernel_size, rows) pairs in construction order.
struct FixedFilterBank {
  std::vector<std::pair<int, Tensor>> groups;  // weight [rows,1,K]
  int total_channels = 0;
};
FixedFilterBank make_fixed_filters();

}  // namespace dsp
