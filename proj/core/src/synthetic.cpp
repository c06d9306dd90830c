#include "dsp/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <stdexcept>

namespace dsp {

namespace {

constexpr double kPi = 3.14159265358979323846;

struct Generator {
  SyntheticSpec spec;
  // fills one series for `cls` in [0, n_classes)
  std::function<void(int cls, std::vector<double>&, std::mt19937_64&)> fill;
  double noise = 0.1;
  std::vector<int> label_values;  // written labels, one per class
};

std::vector<Generator> make_generators() {
  std::vector<Generator> gens;

  // Trivial: one vs two sine cycles.
  gens.push_back({{"SynthItaly", 60, 60, 48},
                  [](int cls, std::vector<double>& v, std::mt19937_64& rng) {
                    std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
                    double phase = ph(rng);
                    double cycles = cls == 0 ? 1.0 : 2.0;
                    for (std::size_t t = 0; t < v.size(); ++t)
                      v[t] = std::sin(2.0 * kPi * cycles * t / v.size() + phase);
                  },
                  0.05,
                  {1, 2}});

  // Easy: a Gaussian bump at one of two positions.
  gens.push_back({{"SynthCoffee", 28, 28, 128},
                  [](int cls, std::vector<double>& v, std::mt19937_64& rng) {
                    std::normal_distribution<double> jitter(0.0, 2.0);
                    double center = (cls == 0 ? 0.3 : 0.7) * v.size() + jitter(rng);
                    double width = 0.06 * v.size();
                    for (std::size_t t = 0; t < v.size(); ++t) {
                      double z = (t - center) / width;
                      v[t] = std::exp(-0.5 * z * z);
                    }
                  },
                  0.10,
                  {0, 1}});

  // Medium: plateau width discrimination.
  gens.push_back({{"SynthGunPoint", 50, 50, 112},
                  [](int cls, std::vector<double>& v, std::mt19937_64& rng) {
                    std::normal_distribution<double> jitter(0.0, 3.0);
                    double half = (cls == 0 ? 0.10 : 0.20) * v.size();
                    double center = 0.5 * v.size() + jitter(rng);
                    for (std::size_t t = 0; t < v.size(); ++t)
                      v[t] = std::abs(t - center) < half ? 1.0 : 0.0;
                  },
                  0.15,
                  {-1, 1}});

  // Medium-hard: spike trains of different periods over baseline wander.
  gens.push_back({{"SynthECG", 64, 64, 96},
                  [](int cls, std::vector<double>& v, std::mt19937_64& rng) {
                    std::uniform_int_distribution<int> off(0, 15);
                    int period = cls == 0 ? 16 : 24;
                    int offset = off(rng);
                    for (std::size_t t = 0; t < v.size(); ++t) {
                      int p = (static_cast<int>(t) + offset) % period;
                      double spike = p == 0 ? 2.0 : (p == 1 ? -0.8 : 0.0);
                      v[t] = spike + 0.3 * std::sin(2.0 * kPi * t / v.size());
                    }
                  },
                  0.20,
                  {1, 2}});

  // Hard: subtle third-harmonic amplitude difference under heavy noise.
  gens.push_back({{"SynthWine", 40, 40, 144},
                  [](int cls, std::vector<double>& v, std::mt19937_64& rng) {
                    std::uniform_real_distribution<double> ph(0.0, 2.0 * kPi);
                    double phase = ph(rng);
                    double amp3 = cls == 0 ? 0.45 : 0.70;
                    for (std::size_t t = 0; t < v.size(); ++t) {
                      double w = 2.0 * kPi * t / v.size() + phase;
                      v[t] = std::sin(2.0 * w) + amp3 * std::sin(3.0 * w);
                    }
                  },
                  0.50,
                  {1, 2}});

  return gens;
}

const std::vector<Generator>& generators() {
  static const std::vector<Generator> gens = make_generators();
  return gens;
}

void write_split(const std::string& path, const Generator& g, int n, std::mt19937_64& rng) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  std::vector<double> v(g.spec.length);
  std::normal_distribution<double> noise(0.0, g.noise);
  for (int i = 0; i < n; ++i) {
    int cls = i % g.spec.n_classes;  // balanced
    g.fill(cls, v, rng);
    f << g.label_values[cls];
    char buf[32];
    for (double x : v) {
      std::snprintf(buf, sizeof(buf), "%.9g", x + noise(rng));
      f << '\t' << buf;
    }
    f << '\n';
  }
}

}  // namespace

const std::vector<SyntheticSpec>& synthetic_suite() {
  static const std::vector<SyntheticSpec> specs = [] {
    std::vector<SyntheticSpec> s;
    for (const auto& g : generators()) s.push_back(g.spec);
    return s;
  }();
  return specs;
}

void write_synthetic_dataset(const std::string& dir, const std::string& name,
                             std::uint64_t seed) {
  for (const auto& g : generators()) {
    if (g.spec.name != name) continue;
    std::uint64_t h = std::hash<std::string>{}(name);
    std::mt19937_64 train_rng(seed ^ h);
    std::mt19937_64 test_rng((seed + 1) ^ h);
    write_split(dir + "/" + name + "_TRAIN.tsv", g, g.spec.n_train, train_rng);
    write_split(dir + "/" + name + "_TEST.tsv", g, g.spec.n_test, test_rng);
    return;
  }
  throw std::invalid_argument("unknown synthetic dataset: " + name);
}

void write_synthetic_suite(const std::string& dir, std::uint64_t seed) {
  for (const auto& g : generators()) write_synthetic_dataset(dir, g.spec.name, seed);
}

}  // namespace dsp
