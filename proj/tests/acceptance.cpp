// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the exit code is the number of failures. Heavy training runs are
// cached under the acceptance directory and resumed via the pipeline
// manifests, so re-runs only re-verify artifacts.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "dsp/arch.hpp"
#include "dsp/experiment.hpp"
#include "dsp/metrics.hpp"
#include "dsp/model.hpp"
#include "dsp/ops.hpp"
#include "dsp/pruner.hpp"
#include "dsp/synthetic.hpp"
#include "dsp/tape.hpp"
#include "testutil.hpp"

using namespace dsp;
namespace fs = std::filesystem;
using testutil::fd_gradient_check;
using testutil::random_tensor;

namespace {

std::string acceptance_dir() {
  if (const char* env = std::getenv("DSP_ACCEPTANCE_DIR")) return env;
  return DSP_ACCEPTANCE_DIR;
}

Tensor random_input(int B, int T, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d;
  Tensor x(Shape{B, 1, T});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = d(rng);
  return x;
}

ArchConfig arch_cfg(const std::string& name, int T, int K) {
  ArchConfig c;
  c.architecture = name;
  c.series_length = T;
  c.n_classes = K;
  return c;
}

PruningPlan sample_plan(const ModelGraph& g, std::uint64_t seed, double frac) {
  std::mt19937_64 rng(seed);
  PruningPlan plan;
  for (const auto& name : g.block_names()) {
    int w = g.block(name).width();
    std::vector<int> chans(w);
    std::iota(chans.begin(), chans.end(), 0);
    std::shuffle(chans.begin(), chans.end(), rng);
    int k = static_cast<int>(w * frac);
    if (k == 0) continue;
    std::vector<int> rm(chans.begin(), chans.begin() + k);
    std::sort(rm.begin(), rm.end());
    plan.remove[name] = rm;
  }
  return plan;
}

// ---- cached heavy runs -----------------------------------------------------

struct HeavyRuns {
  ExperimentConfig lite_l5, lite_l4, inc_l5;
  bool ready = false;
  std::string error;
};

HeavyRuns& heavy() {
  static HeavyRuns h = [] {
    HeavyRuns r;
    try {
      const std::string dir = acceptance_dir();
      fs::create_directories(dir);
      if (!fs::exists(dir + "/data/SynthItaly_TRAIN.tsv")) {
        fs::create_directories(dir + "/data");
        write_synthetic_suite(dir + "/data", 2024);
      }
      auto ensure_cfg = [&](const std::string& name, const std::string& arch, double lambda,
                            std::vector<std::uint64_t> seeds,
                            std::vector<std::string> modes) {
        const std::string path = dir + "/" + name + ".json";
        if (!fs::exists(path)) {
          ExperimentConfig c;
          for (const auto& spec : synthetic_suite())
            c.datasets.push_back({spec.name, dir + "/data/" + spec.name + "_TRAIN.tsv",
                                  dir + "/data/" + spec.name + "_TEST.tsv"});
          c.arch.architecture = arch;
          c.lambda = lambda;
          c.epochs = 300;
          c.ensemble_size = static_cast<int>(seeds.size());
          c.seeds = std::move(seeds);
          c.retrain_modes = std::move(modes);
          c.out_dir = dir + "/" + name.substr(4);  // cfg_X -> X
          c.save(path);
        }
        return ExperimentConfig::load(path);
      };
      r.lite_l5 = ensure_cfg("cfg_lite_l5", "lite", 1e-5, {0, 1, 2, 3, 4},
                             {"finetune", "scratch"});
      r.lite_l4 = ensure_cfg("cfg_lite_l4", "lite", 1e-4, {0, 1, 2}, {"scratch"});
      r.inc_l5 = ensure_cfg("cfg_inc_l5", "inception", 1e-5, {0}, {});
      run_all(r.lite_l5);
      run_all(r.lite_l4);
      run_all(r.inc_l5);
      r.ready = true;
    } catch (const std::exception& e) {
      r.error = e.what();
    }
    return r;
  }();
  return h;
}

std::map<std::string, ReportRow> report_rows(const ExperimentConfig& cfg,
                                             const std::string& dataset,
                                             const std::string& /*unused*/ = "") {
  std::map<std::string, ReportRow> by_method;
  for (const auto& r : load_report_csv(cfg.out_dir + "/" + dataset + "/report.csv"))
    by_method[r.method] = r;
  return by_method;
}

// ---- criteria --------------------------------------------------------------

bool criterion1(std::string& detail) {
  using namespace dsp::ops;
  std::mt19937 rng(101);
  double worst = 0;
  int checked = 0;
  auto track = [&](const testutil::FdReport& r) {
    worst = std::max(worst, r.max_rel_err);
    checked += r.checked;
  };
  std::uniform_int_distribution<int> Bd(1, 3), Cd(1, 4), Td(6, 14), Kd(1, 5), dild(1, 3);
  for (int rep = 0; rep < 4; ++rep) {
    int B = Bd(rng), Ci = Cd(rng), Co = Cd(rng), T = Td(rng), K = Kd(rng), dil = dild(rng);
    track(fd_gradient_check(
        {random_tensor({B, Ci, T}, rng), random_tensor({Co, Ci, K}, rng),
         random_tensor({Co}, rng)},
        [dil](Tape<double>& t, const std::vector<int>& id) {
          return l21_channel_norm(t, conv1d(t, id[0], id[1], id[2], dil));
        }));
    track(fd_gradient_check(
        {random_tensor({B, Ci, T}, rng), random_tensor({Ci, 1, K}, rng),
         random_tensor({Co, Ci, 1}, rng)},
        [dil](Tape<double>& t, const std::vector<int>& id) {
          return l21_channel_norm(t, depthwise_separable_conv1d(t, id[0], id[1], id[2], dil));
        }));
    int C = Cd(rng);
    track(fd_gradient_check(
        {random_tensor({3, C, 8}, rng), random_tensor({C}, rng, 0.5, 1.5),
         random_tensor({C}, rng)},
        [](Tape<double>& t, const std::vector<int>& id) {
          BatchNormStats<double> stats;
          return l21_channel_norm(t, batchnorm1d(t, id[0], id[1], id[2], stats, true));
        }));
    track(fd_gradient_check(
        {random_tensor({2, 3, 9}, rng, -1, 1, 0.05), random_tensor({2, 3}, rng),
         random_tensor({2}, rng)},
        [](Tape<double>& t, const std::vector<int>& id) {
          int a = relu(t, id[0]);
          int m = maxpool1d(t, a, 3);
          int p = global_avg_pool(t, m);
          return softmax_cross_entropy(t, linear(t, p, id[1], id[2]), {0, 1});
        }));
    track(fd_gradient_check(
        {random_tensor({2, 2, 7}, rng), random_tensor({2, 3, 7}, rng)},
        [](Tape<double>& t, const std::vector<int>& id) {
          int cc = concat_channels(t, {id[0], id[1]});
          int masked = zero_channels(t, cc, {1, 3});
          int s = slice_channels(t, masked, 0, 4);
          return l21_channel_norm(t, add(t, s, s));
        }));
    track(fd_gradient_check({random_tensor({2, 3, 5}, rng, -1, 1, 0.1)},
                            [](Tape<double>& t, const std::vector<int>& id) {
                              return l21_channel_norm(t, id[0]);
                            }));
  }
  std::ostringstream ss;
  ss << checked << " partials, max rel err " << worst;
  detail = ss.str();
  return worst < 1e-4;
}

bool criterion2(std::string& detail) {
  float worst = 0;
  for (int arch = 0; arch < 2; ++arch) {
    ModelGraph g = build_model(arch_cfg(arch ? "inception" : "lite", 48, 3), 50 + arch);
    g.forward(random_input(8, 48, 60 + arch), true);  // warm batchnorm stats
    for (int rep = 0; rep < 50; ++rep) {
      double frac = 0.1 + 0.5 * (rep / 49.0);
      PruningPlan plan = sample_plan(g, 1000 * arch + rep, frac);
      ModelGraph h = g.apply_surgery(plan);
      Tensor x = random_input(3, 48, 5000 + 100 * arch + rep);
      ZeroMask mask = plan.remove;
      Tensor masked = g.forward(x, false, {}, &mask).logits;
      Tensor pruned = h.forward(x, false).logits;
      for (std::int64_t i = 0; i < masked.size(); ++i)
        worst = std::max(worst, std::abs(masked[i] - pruned[i]));
    }
  }
  std::ostringstream ss;
  ss << "100 plans, max |logit diff| " << worst;
  detail = ss.str();
  return worst < 1e-4f;
}

bool criterion3(std::string& detail) {
  int compared = 0;
  for (int rep = 0; rep < 5; ++rep) {
    int N = 10 + 10 * rep;  // 10..50
    ModelGraph lite = build_model(arch_cfg("lite", 48, 2), 300 + rep);
    lite.forward(random_input(8, 48, 400 + rep), true);
    Tensor x = random_input(N, 48, 500 + rep);
    StrengthMatrix s = collect_strengths(lite, x);
    PruningPlan fast = consensus_plan(thresholds_and_mask(s), s, lite, N);

    std::map<std::string, std::vector<int>> naive;
    for (const auto& name : lite.block_names()) {
      int C = lite.block(name).width();
      std::vector<char> ever_active(C, 0);
      for (int i = 0; i < N; ++i) {
        Tensor one(Shape{1, 1, 48});
        for (int t = 0; t < 48; ++t) one.at(0, 0, t) = x.at(i, 0, t);
        Tensor f = lite.forward(one, false, {name}).captures.at(name);
        std::vector<double> str(C);
        double tau = 0;
        for (int c = 0; c < C; ++c) {
          double ss = 0;
          for (int t = 0; t < 48; ++t) ss += static_cast<double>(f.at(0, c, t)) * f.at(0, c, t);
          str[c] = std::sqrt(ss);
          tau += str[c];
        }
        tau /= C;
        for (int c = 0; c < C; ++c)
          if (static_cast<float>(str[c]) >= static_cast<float>(tau)) ever_active[c] = 1;
      }
      std::vector<int> removal;
      for (int c = 0; c < C; ++c)
        if (!ever_active[c]) removal.push_back(c);
      if (!removal.empty() && static_cast<int>(removal.size()) < C) naive[name] = removal;
    }
    if (fast.remove != naive) {
      detail = "mismatch at N=" + std::to_string(N);
      return false;
    }
    ++compared;
  }
  detail = std::to_string(compared) + " datasets, exact set equality";
  return true;
}

bool criterion4(std::string& detail) {
  ModelGraph inc = build_model(arch_cfg("inception", 48, 2), 1);
  ModelGraph lite = build_model(arch_cfg("lite", 128, 2), 2);
  double inc5 = 5.0 * count_params(inc);
  double lite5 = 5.0 * count_params(lite);
  double mem_mb = 5.0 * memory_bytes(inc) / (1024.0 * 1024.0);
  bool ok = std::abs(inc5 - 2106593.0) / 2106593.0 < 0.05 &&
            std::abs(mem_mb - 8.04) / 8.04 < 0.05 &&
            std::abs(lite5 - 50511.0) / 50511.0 < 0.10;

  lite.forward(random_input(8, 128, 3), true);
  StrengthMatrix s = collect_strengths(lite, random_input(12, 128, 4));
  const double expected[3] = {0.558, 0.765, 0.849};
  const int ladder[3] = {16, 8, 4};
  std::ostringstream ratios;
  for (int i = 0; i < 3; ++i) {
    double r = pruning_ratio(lite, lite.apply_surgery(static_plan(s, lite, ladder[i])));
    ok = ok && std::abs(r - expected[i]) < 0.03;
    ratios << (i ? "/" : "") << r;
  }
  std::ostringstream ss;
  ss << "inception x5 " << static_cast<long long>(inc5) << " params, " << mem_mb
     << " MB; lite x5 " << static_cast<long long>(lite5) << "; static ratios " << ratios.str();
  detail = ss.str();
  return ok;
}

std::vector<double> pruned_ratios(const ExperimentConfig& cfg) {
  std::vector<double> out;
  for (const auto& d : cfg.datasets)
    out.push_back(report_rows(cfg, d.name).at("Pruned").pruning_ratio);
  return out;
}

bool criterion5(std::string& detail) {
  if (!heavy().ready) {
    detail = heavy().error;
    return false;
  }
  std::vector<double> lite = pruned_ratios(heavy().lite_l5);
  std::vector<double> inc = pruned_ratios(heavy().inc_l5);
  auto spread = [](const std::vector<double>& v) {
    return *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
  };
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  bool spread_ok = spread(lite) >= 0.10 || spread(inc) >= 0.10;
  bool mean_ok = mean(inc) > mean(lite);
  std::ostringstream ss;
  ss << "lite spread " << spread(lite) << " mean " << mean(lite) << "; inception spread "
     << spread(inc) << " mean " << mean(inc);
  detail = ss.str();
  return spread_ok && mean_ok;
}

bool criterion6(std::string& detail) {
  if (!heavy().ready) {
    detail = heavy().error;
    return false;
  }
  int within = 0;
  std::ostringstream ss;
  for (const auto& d : heavy().lite_l5.datasets) {
    auto rows = report_rows(heavy().lite_l5, d.name);
    double base = rows.at("Base").accuracy, scratch = rows.at("Scratch").accuracy;
    within += std::abs(scratch - base) <= 0.03;
    ss << d.name << " " << base << "->" << scratch << " ";
  }
  detail = ss.str() + "(" + std::to_string(within) + "/5 within 3 points)";
  return within >= 4;
}

bool criterion7(std::string& detail) {
  if (!heavy().ready) {
    detail = heavy().error;
    return false;
  }
  double sum_hi = 0, sum_lo = 0;
  for (const auto& d : heavy().lite_l4.datasets) {
    sum_hi += report_rows(heavy().lite_l4, d.name).at("Scratch").accuracy;
    // Matched 3-seed sub-ensemble from the lambda=1e-5 run's stored logits.
    Dataset data = load_ucr_pair(d.train_path, d.test_path, d.name);
    std::vector<Tensor> logits;
    for (int k = 0; k < 3; ++k)
      logits.push_back(load_logits_csv(heavy().lite_l5.out_dir + "/" + d.name + "/seed" +
                                       std::to_string(k) + "_scratch_logits.csv"));
    sum_lo += ensemble_accuracy(logits, data.test_y, 3);
  }
  double hi = sum_hi / heavy().lite_l4.datasets.size();
  double lo = sum_lo / heavy().lite_l4.datasets.size();
  std::ostringstream ss;
  ss << "mean acc lambda=1e-4 " << hi << " vs lambda=1e-5 " << lo;
  detail = ss.str();
  return hi < lo;
}

bool criterion8(std::string& detail) {
  // Part 1: effective_rank against a Gram-matrix eigendecomposition oracle.
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 1000; ++rep) {
    Eigen::MatrixXd m(8, 16);
    for (int c = 0; c < 8; ++c)
      for (int t = 0; t < 16; ++t) m(c, t) = nd(rng);
    if (rep % 3 == 0) m.row(7) = m.row(0);
    Tensor f(Shape{8, 16});
    for (int c = 0; c < 8; ++c)
      for (int t = 0; t < 16; ++t) f.at(c, t) = static_cast<float>(m(c, t));
    Eigen::MatrixXd fd(8, 16);
    for (int c = 0; c < 8; ++c)
      for (int t = 0; t < 16; ++t) fd(c, t) = f.at(c, t);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fd * fd.transpose());
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + 8);
    std::sort(ev.rbegin(), ev.rend());
    double total = 0;
    for (double v : ev) total += std::max(v, 0.0);
    double acc = 0;
    int oracle = 8;
    for (int r = 0; r < 8; ++r) {
      acc += std::max(ev[r], 0.0);
      if (acc >= 0.95 * total) {
        oracle = r + 1;
        break;
      }
    }
    if (effective_rank(f) != oracle) {
      detail = "rank oracle mismatch at rep " + std::to_string(rep);
      return false;
    }
  }
  // Part 2: pruning should not lower the redundancy efficiency score.
  if (!heavy().ready) {
    detail = heavy().error;
    return false;
  }
  std::ostringstream ss;
  int best = 0;
  for (const ExperimentConfig* cfg : {&heavy().lite_l5, &heavy().inc_l5}) {
    int improved = 0;
    for (const auto& d : cfg->datasets) {
      const ReportRow& r = report_rows(*cfg, d.name).at("Pruned");
      if (!r.efficiency_base || !r.efficiency_pruned) {
        detail = "missing efficiency scores for " + d.name;
        return false;
      }
      improved += *r.efficiency_pruned >= *r.efficiency_base;
    }
    ss << cfg->arch.architecture << " " << improved << "/5 non-decreasing ";
    best = std::max(best, improved);
  }
  detail = "1000 rank oracles exact; " + ss.str();
  return best >= 4;
}

bool criterion9(std::string& detail) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> nd(1, 10), quant(1, 6);
  for (int rep = 0; rep < 300; ++rep) {
    int n = nd(rng);
    std::vector<double> a(n), b(n);
    for (int i = 0; i < n; ++i) {
      a[i] = quant(rng) / 10.0;
      b[i] = quant(rng) / 10.0;
    }
    std::vector<double> d;
    for (int i = 0; i < n; ++i)
      if (a[i] != b[i]) d.push_back(a[i] - b[i]);
    double got = wilcoxon_signed_rank(a, b);
    if (d.empty()) {
      if (got != 1.0) {
        detail = "all-tie case not p=1";
        return false;
      }
      continue;
    }
    int m = static_cast<int>(d.size());
    std::vector<int> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(),
              [&](int x, int y) { return std::abs(d[x]) < std::abs(d[y]); });
    std::vector<double> rank(m);
    for (int i = 0; i < m;) {
      int j = i;
      while (j < m && std::abs(d[idx[j]]) == std::abs(d[idx[i]])) ++j;
      double avg = (i + 1 + j) / 2.0;
      for (int k = i; k < j; ++k) rank[idx[k]] = avg;
      i = j;
    }
    double wpos = 0, wtot = 0;
    for (int i = 0; i < m; ++i) {
      wtot += rank[i];
      if (d[i] > 0) wpos += rank[i];
    }
    double wmin = std::min(wpos, wtot - wpos);
    long below = 0;
    for (long pattern = 0; pattern < (1L << m); ++pattern) {
      double w = 0;
      for (int i = 0; i < m; ++i)
        if (pattern & (1L << i)) w += rank[i];
      if (w <= wmin + 1e-12) ++below;
    }
    double expect = std::min(1.0, 2.0 * below / std::ldexp(1.0, m));
    if (std::abs(got - expect) > 1e-9) {
      detail = "p mismatch at rep " + std::to_string(rep);
      return false;
    }
  }
  // Comparison-matrix structure on fuzzed accuracy tables.
  std::uniform_real_distribution<double> ud(0, 1);
  for (int rep = 0; rep < 20; ++rep) {
    AccuracyTable t;
    for (const char* method : {"m1", "m2", "m3"})
      for (const char* ds : {"a", "b", "c", "d", "e"}) t[method][ds] = ud(rng);
    auto m = comparison_matrix(t);
    for (auto& [x, row] : m)
      for (auto& [y, cell] : row) {
        bool ok = std::abs(cell.mean_difference + m[y][x].mean_difference) < 1e-12 &&
                  cell.wins + cell.ties + cell.losses == 5 && cell.wins == m[y][x].losses;
        if (x == y) ok = ok && cell.ties == 5 && cell.wilcoxon_p == 1.0;
        if (!ok) {
          detail = "matrix property violated";
          return false;
        }
      }
  }
  detail = "300 exact p-values, 20 fuzzed matrices";
  return true;
}

bool criterion10(std::string& detail) {
  const std::string dir = acceptance_dir();
  if (!fs::exists(dir + "/data/SynthItaly_TRAIN.tsv")) {
    fs::create_directories(dir + "/data");
    write_synthetic_suite(dir + "/data", 2024);
  }
  ExperimentConfig cfg;
  cfg.datasets = {{"SynthItaly", dir + "/data/SynthItaly_TRAIN.tsv",
                   dir + "/data/SynthItaly_TEST.tsv"}};
  cfg.lambda = 1e-3;
  cfg.epochs = 2;
  cfg.ensemble_size = 1;
  cfg.seeds = {0};
  auto slurp = [](const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const std::string ra = fs::temp_directory_path() / "dsp_acc_det_a";
  const std::string rb = fs::temp_directory_path() / "dsp_acc_det_b";
  fs::remove_all(ra);
  fs::remove_all(rb);
  cfg.out_dir = ra;
  run_all(cfg);
  cfg.out_dir = rb;
  run_all(cfg);
  for (const char* f : {"report.csv", "seed0_base_train.csv", "seed0_pretrained_train.csv",
                        "seed0_finetune_train.csv", "seed0_scratch_train.csv",
                        "seed0_base_logits.csv", "seed0_scratch_logits.csv"})
    if (slurp(ra + "/SynthItaly/" + f) != slurp(rb + "/SynthItaly/" + f) ||
        slurp(ra + "/SynthItaly/" + f).empty()) {
      detail = std::string("metrics differ or empty: ") + f;
      return false;
    }

  ModelGraph g = build_model(arch_cfg("lite", 48, 3), 77);
  g.forward(random_input(8, 48, 78), true);
  const std::string ck = fs::temp_directory_path() / "dsp_acc_ckpt";
  g.save(ck);
  ModelGraph h = ModelGraph::load(ck);
  Tensor x = random_input(5, 48, 79);
  Tensor a = g.forward(x, false).logits;
  Tensor b = h.forward(x, false).logits;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) {
      detail = "reloaded logits not bit-identical";
      return false;
    }
  fs::remove_all(ra);
  fs::remove_all(rb);
  detail = "byte-identical CSVs; bit-identical reloaded logits";
  return true;
}

}  // namespace

int main() {
  struct Entry {
    int id;
    const char* name;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Entry> entries = {
      {1, "gradient suite", criterion1},
      {2, "zero-masking equivalence", criterion2},
      {3, "consensus oracle", criterion3},
      {4, "complexity accounting", criterion4},
      {5, "adaptive compression", criterion5},
      {6, "accuracy retention", criterion6},
      {7, "lambda ablation direction", criterion7},
      {8, "redundancy direction", criterion8},
      {9, "statistics", criterion9},
      {10, "determinism and persistence", criterion10},
  };
  int failures = 0;
  for (const auto& e : entries) {
    auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = false;
    try {
      ok = e.fn(detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", ok ? "PASS" : "FAIL", e.id, e.name,
                detail.c_str(), secs);
    std::fflush(stdout);
    failures += !ok;
  }
  return failures;
}
