#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "dsp/dataset.hpp"
#include "dsp/synthetic.hpp"

using namespace dsp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& n) const { return (path / n).string(); }
};

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path);
  f << content;
}

}  // namespace

TEST_CASE("loader: z-normalization, dense remap, label ordering") {
  TempDir dir("dsp_ds_basic");
  write_file(dir.file("a_TRAIN.tsv"), "1\t0\t2\t4\n3\t1\t1\t1\n");
  write_file(dir.file("a_TEST.tsv"), "3\t5\t6\t7\n");
  Dataset d = load_ucr_pair(dir.file("a_TRAIN.tsv"), dir.file("a_TEST.tsv"), "a");
  CHECK(d.n_classes == 2);
  CHECK(d.train_y == std::vector<int>{0, 1});
  CHECK(d.test_y == std::vector<int>{1});
  CHECK(d.train_x.shape() == Shape{2, 1, 3});
  // (0,2,4) -> mean 2, population std sqrt(8/3)
  CHECK(d.train_x.at(0, 0, 0) == doctest::Approx(-1.2247448f).epsilon(1e-5));
  CHECK(d.train_x.at(0, 0, 1) == doctest::Approx(0.0f));
  CHECK(d.train_x.at(0, 0, 2) == doctest::Approx(1.2247448f).epsilon(1e-5));
  // constant series -> zeros via the std floor
  for (int t = 0; t < 3; ++t) CHECK(d.train_x.at(1, 0, t) == doctest::Approx(0.0f));
}

TEST_CASE("loader: negative labels map densely") {
  TempDir dir("dsp_ds_neg");
  write_file(dir.file("b_TRAIN.tsv"), "-1\t0\t1\t2\n1\t2\t1\t0\n");
  write_file(dir.file("b_TEST.tsv"), "1\t0\t0\t1\n-1\t1\t0\t0\n");
  Dataset d = load_ucr_pair(dir.file("b_TRAIN.tsv"), dir.file("b_TEST.tsv"));
  CHECK(d.label_map.at(-1.0) == 0);
  CHECK(d.label_map.at(1.0) == 1);
  CHECK(d.test_y == std::vector<int>{1, 0});
}

TEST_CASE("loader rejects ragged, non-numeric, NaN, and unseen test labels") {
  TempDir dir("dsp_ds_err");
  write_file(dir.file("ok_TEST.tsv"), "1\t0\t1\t2\n");
  write_file(dir.file("ok_TRAIN.tsv"), "1\t0\t1\t2\n2\t1\t2\t3\n");

  write_file(dir.file("ragged.tsv"), "1\t0\t1\t2\n2\t1\t2\n");
  CHECK_THROWS_WITH_AS(load_ucr_pair(dir.file("ragged.tsv"), dir.file("ok_TEST.tsv")),
                       doctest::Contains("ragged"), std::runtime_error);

  write_file(dir.file("alpha.tsv"), "1\t0\tx\t2\n");
  CHECK_THROWS_WITH_AS(load_ucr_pair(dir.file("alpha.tsv"), dir.file("ok_TEST.tsv")),
                       doctest::Contains("non-numeric"), std::runtime_error);

  write_file(dir.file("nan.tsv"), "1\t0\tnan\t2\n");
  CHECK_THROWS_AS(load_ucr_pair(dir.file("nan.tsv"), dir.file("ok_TEST.tsv")),
                  std::runtime_error);

  write_file(dir.file("extra_TEST.tsv"), "7\t0\t1\t2\n");
  CHECK_THROWS_WITH_AS(load_ucr_pair(dir.file("ok_TRAIN.tsv"), dir.file("extra_TEST.tsv")),
                       doctest::Contains("test but not in train"), std::runtime_error);

  CHECK_THROWS_AS(load_ucr_pair(dir.file("missing.tsv"), dir.file("ok_TEST.tsv")),
                  std::runtime_error);
}

TEST_CASE("normalization idempotence and moment invariants") {
  TempDir dir("dsp_ds_idem");
  write_synthetic_dataset(dir.path.string(), "SynthCoffee", 3);
  Dataset d = load_ucr_pair(dir.file("SynthCoffee_TRAIN.tsv"), dir.file("SynthCoffee_TEST.tsv"));
  const int T = d.series_length();
  for (int i = 0; i < d.n_train(); ++i) {
    double mean = 0, ss = 0;
    for (int t = 0; t < T; ++t) mean += d.train_x.at(i, 0, t);
    mean /= T;
    for (int t = 0; t < T; ++t) ss += std::pow(d.train_x.at(i, 0, t) - mean, 2.0);
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(std::sqrt(ss / T) - 1.0) < 1e-5);
  }
  // Re-normalizing already-normalized data barely moves it.
  save_ucr_split(dir.file("renorm_TRAIN.tsv"), d.train_x, d.train_y);
  save_ucr_split(dir.file("renorm_TEST.tsv"), d.test_x, d.test_y);
  Dataset e = load_ucr_pair(dir.file("renorm_TRAIN.tsv"), dir.file("renorm_TEST.tsv"));
  for (std::int64_t i = 0; i < d.train_x.size(); ++i)
    CHECK(std::abs(d.train_x[i] - e.train_x[i]) < 1e-5);
}

TEST_CASE("round trip through the tab format is exact") {
  TempDir dir("dsp_ds_rt");
  write_synthetic_dataset(dir.path.string(), "SynthItaly", 5);
  Dataset d = load_ucr_pair(dir.file("SynthItaly_TRAIN.tsv"), dir.file("SynthItaly_TEST.tsv"));
  save_ucr_split(dir.file("rt_TRAIN.tsv"), d.train_x, d.train_y);
  save_ucr_split(dir.file("rt_TEST.tsv"), d.test_x, d.test_y);
  Dataset e = load_ucr_pair(dir.file("rt_TRAIN.tsv"), dir.file("rt_TEST.tsv"));
  REQUIRE(d.train_x.same_shape(e.train_x));
  // Already normalized, so reload only re-applies a near-identity transform;
  // values written at %.9g reproduce the float32 payload exactly, and the
  // renormalization of unit-moment data is exact to float rounding.
  for (std::int64_t i = 0; i < d.train_x.size(); ++i)
    CHECK(d.train_x[i] == doctest::Approx(e.train_x[i]).epsilon(1e-6));
  CHECK(d.train_y == e.train_y);
  CHECK(d.test_y == e.test_y);
}

TEST_CASE("batching covers every sample once with deterministic shuffles") {
  Dataset d;
  d.train_x = Tensor(Shape{130, 1, 2});
  for (int i = 0; i < 130; ++i) {
    d.train_x.at(i, 0, 0) = static_cast<float>(i);
    d.train_x.at(i, 0, 1) = static_cast<float>(i * 2);
    d.train_y.push_back(i % 2);
  }
  auto bs = batches(d.train_x, d.train_y, 64, true, 9, 0);
  REQUIRE(bs.size() == 3);
  CHECK(bs[0].x.dim(0) == 64);
  CHECK(bs[1].x.dim(0) == 64);
  CHECK(bs[2].x.dim(0) == 2);

  // Coverage: first feature value identifies the source row uniquely.
  std::set<float> seen;
  for (const auto& b : bs)
    for (int i = 0; i < b.x.dim(0); ++i) seen.insert(b.x.at(i, 0, 0));
  CHECK(seen.size() == 130);

  auto bs2 = batches(d.train_x, d.train_y, 64, true, 9, 0);
  for (std::size_t k = 0; k < bs.size(); ++k)
    for (std::int64_t i = 0; i < bs[k].x.size(); ++i) CHECK(bs[k].x[i] == bs2[k].x[i]);

  auto other_epoch = batches(d.train_x, d.train_y, 64, true, 9, 1);
  bool moved = false;
  for (std::int64_t i = 0; i < bs[0].x.size(); ++i) moved |= bs[0].x[i] != other_epoch[0].x[i];
  CHECK(moved);

  auto plain = batches(d.train_x, d.train_y, 64, false);
  for (int i = 0; i < 64; ++i) CHECK(plain[0].y[i] == d.train_y[i]);
  CHECK_THROWS_AS(batches(d.train_x, d.train_y, 0, false), std::invalid_argument);
}

TEST_CASE("synthetic suite: five loadable datasets with expected shapes") {
  TempDir dir("dsp_ds_suite");
  write_synthetic_suite(dir.path.string(), 2024);
  const auto& specs = synthetic_suite();
  REQUIRE(specs.size() == 5);
  for (const auto& s : specs) {
    Dataset d = load_ucr_pair(dir.file(s.name + "_TRAIN.tsv"), dir.file(s.name + "_TEST.tsv"),
                              s.name);
    CHECK(d.n_train() == s.n_train);
    CHECK(d.n_test() == s.n_test);
    CHECK(d.series_length() == s.length);
    CHECK(d.n_classes == s.n_classes);
    CHECK(d.series_length() >= 40);  // long enough for the widest trainable kernel
  }
  // Determinism across two generations.
  TempDir dir2("dsp_ds_suite2");
  write_synthetic_suite(dir2.path.string(), 2024);
  for (const auto& s : specs) {
    std::ifstream a(dir.file(s.name + "_TRAIN.tsv")), b(dir2.file(s.name + "_TRAIN.tsv"));
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
    CHECK(!sa.empty());
  }
}
