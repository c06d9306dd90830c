#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsp {

struct SyntheticSpec {
  std::string name;
  int n_train = 0;
  int n_test = 0;
  int length = 0;
  int n_classes = 2;
};

/// The five-dataset evaluation suite: UCR-format two-class problems of varying
/// difficulty so pruning ratios spread out (trivial shapes prune hard, noisy
/// harmonic discrimination prunes little).
const std::vector<SyntheticSpec>& synthetic_suite();

/// Writes `<dir>/<name>_TRAIN.tsv` and `<dir>/<name>_TEST.tsv` with raw
/// (unnormalized) values. Deterministic in (name, seed).
void write_synthetic_dataset(const std::string& dir, const std::string& name,
                             std::uint64_t seed = 2024);
void write_synthetic_suite(const std::string& dir, std::uint64_t seed = 2024);

}  // namespace dsp
