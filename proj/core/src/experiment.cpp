#include "dsp/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dsp/pruner.hpp"
#include "dsp/train.hpp"

namespace dsp {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string> kVariantOrder = {"Base", "Pretrained", "Pruned", "Finetuned",
                                                "Scratch"};

namespace {

std::string fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json arch_to_json(const ArchConfig& a) {
  return {{"architecture", a.architecture},
          {"n_filters", a.n_filters},
          {"depth", a.depth},
          {"kernel_sizes", a.kernel_sizes},
          {"bottleneck_size", a.bottleneck_size},
          {"use_residual", a.use_residual},
          {"use_custom_filters", a.use_custom_filters},
          {"dwsc_kernels", a.dwsc_kernels},
          {"dwsc_dilations", a.dwsc_dilations}};
}

void arch_from_json(const json& j, ArchConfig& a) {
  a.architecture = j.value("architecture", a.architecture);
  a.n_filters = j.value("n_filters", a.n_filters);
  a.depth = j.value("depth", a.depth);
  a.kernel_sizes = j.value("kernel_sizes", a.kernel_sizes);
  a.bottleneck_size = j.value("bottleneck_size", a.bottleneck_size);
  a.use_residual = j.value("use_residual", a.use_residual);
  a.use_custom_filters = j.value("use_custom_filters", a.use_custom_filters);
  a.dwsc_kernels = j.value("dwsc_kernels", a.dwsc_kernels);
  a.dwsc_dilations = j.value("dwsc_dilations", a.dwsc_dilations);
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  for (const auto& d : c.datasets)
    j["datasets"].push_back({{"name", d.name}, {"train", d.train_path}, {"test", d.test_path}});
  j["arch"] = arch_to_json(c.arch);
  j["lambda"] = c.lambda;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  j["ensemble_size"] = c.ensemble_size;
  j["seeds"] = c.seeds;
  j["retrain_modes"] = c.retrain_modes;
  j["static_baselines"] = c.static_baselines;
  j["out_dir"] = c.out_dir;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (ensemble_size < 1) throw std::invalid_argument("ensemble_size must be >= 1");
  if (static_cast<int>(seeds.size()) != ensemble_size)
    throw std::invalid_argument("seeds list length " + std::to_string(seeds.size()) +
                                " must equal ensemble_size " + std::to_string(ensemble_size));
  if (datasets.empty()) throw std::invalid_argument("config lists no datasets");
  if (lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  for (const auto& m : retrain_modes)
    if (m != "finetune" && m != "scratch")
      throw std::invalid_argument("unknown retrain mode " + m);
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config " + path);
  json j = json::parse(f);
  ExperimentConfig c;
  for (const auto& d : j.value("datasets", json::array()))
    c.datasets.push_back({d.at("name").get<std::string>(), d.at("train").get<std::string>(),
                          d.at("test").get<std::string>()});
  if (j.contains("arch")) arch_from_json(j["arch"], c.arch);
  c.lambda = j.value("lambda", c.lambda);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.ensemble_size = j.value("ensemble_size", c.ensemble_size);
  c.seeds = j.value("seeds", c.seeds);
  c.retrain_modes = j.value("retrain_modes", c.retrain_modes);
  c.static_baselines = j.value("static_baselines", c.static_baselines);
  c.out_dir = j.value("out_dir", c.out_dir);
  if (c.seeds.empty())
    for (int i = 0; i < c.ensemble_size; ++i) c.seeds.push_back(i);
  return c;
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config " + path);
  f << config_to_json(*this).dump(1) << "\n";
}

std::string ExperimentConfig::hash() const {
  json j = config_to_json(*this);
  j.erase("out_dir");  // results do not depend on where they are stored
  return fnv1a(j.dump());
}

std::string fnv1a_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return "";
  std::ostringstream ss;
  ss << f.rdbuf();
  return fnv1a(ss.str());
}

void RunManifest::save(const std::string& path) const {
  json j;
  j["config_hash"] = config_hash;
  for (const auto& [stage, arts] : stages) {
    json a = json::array();
    for (const auto& art : arts) a.push_back({{"path", art.path}, {"hash", art.hash}});
    j["stages"][stage] = std::move(a);
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest " + path);
  f << j.dump(1) << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read manifest " + path);
  json j = json::parse(f);
  RunManifest m;
  m.config_hash = j.value("config_hash", "");
  if (j.contains("stages"))
    for (const auto& [stage, arts] : j["stages"].items())
      for (const auto& a : arts)
        m.stages[stage].push_back({a.at("path").get<std::string>(),
                                   a.at("hash").get<std::string>()});
  return m;
}

bool RunManifest::stage_done(const std::string& stage, const std::string& dir) const {
  auto it = stages.find(stage);
  if (it == stages.end() || it->second.empty()) return false;
  for (const auto& a : it->second)
    if (fnv1a_file(dir + "/" + a.path) != a.hash) return false;
  return true;
}

Tensor eval_logits(ModelGraph& model, const Tensor& x, int batch_size) {
  const int N = x.dim(0), T = x.dim(2);
  Tensor out(Shape{N, model.n_classes()});
  for (int start = 0; start < N; start += batch_size) {
    int b = std::min(batch_size, N - start);
    Tensor batch(Shape{b, 1, T});
    std::copy(x.data() + static_cast<std::int64_t>(start) * T,
              x.data() + static_cast<std::int64_t>(start + b) * T, batch.data());
    Tensor logits = model.forward(batch, false).logits;
    std::copy(logits.data(), logits.data() + logits.size(),
              out.data() + static_cast<std::int64_t>(start) * model.n_classes());
  }
  return out;
}

double accuracy_from_logits(const Tensor& logits, const std::vector<int>& labels) {
  const int N = logits.dim(0), K = logits.dim(1);
  if (N != static_cast<int>(labels.size()))
    throw std::invalid_argument("label count does not match logits");
  int correct = 0;
  for (int i = 0; i < N; ++i) {
    int arg = 0;
    for (int k = 1; k < K; ++k)
      if (logits.at(i, k) > logits.at(i, arg)) arg = k;
    correct += arg == labels[i];
  }
  return static_cast<double>(correct) / N;
}

void save_logits_csv(const std::string& path, const Tensor& logits) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  char buf[32];
  for (int i = 0; i < logits.dim(0); ++i) {
    for (int k = 0; k < logits.dim(1); ++k) {
      std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(logits.at(i, k)));
      f << (k ? "," : "") << buf;
    }
    f << '\n';
  }
}

Tensor load_logits_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<float> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stof(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged logits file " + path);
    rows.push_back(std::move(row));
  }
  Tensor out(Shape{static_cast<int>(rows.size()), static_cast<int>(rows.front().size())});
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(),
              out.data() + static_cast<std::int64_t>(i) * rows.front().size());
  return out;
}

namespace {

struct PipelineCtx {
  const ExperimentConfig& cfg;
  const DatasetRef& ref;
  Dataset data;
  ArchConfig arch;  // with dataset dims
  std::string dir;
  RunManifest manifest;
  std::ostream* log = nullptr;

  void note(const std::string& msg) const {
    if (log) *log << "[" << ref.name << "] " << msg << std::endl;
  }

  void commit(const std::string& stage, const std::vector<std::string>& artifacts) {
    auto& arts = manifest.stages[stage];
    arts.clear();
    for (const auto& rel : artifacts) arts.push_back({rel, fnv1a_file(dir + "/" + rel)});
    manifest.save(dir + "/manifest.json");
  }

  bool done(const std::string& stage) const { return manifest.stage_done(stage, dir); }

  std::string seed_tag(int k) const { return "seed" + std::to_string(k); }
};

void copy_file_over(const std::string& from, const std::string& to) {
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

void run_base_stage(PipelineCtx& ctx, int k) {
  const std::string tag = ctx.seed_tag(k);
  std::vector<std::string> arts = {tag + "_base.json", tag + "_base.bin",
                                   tag + "_base_train.csv", tag + "_base_logits.csv"};
  const std::string stage = tag + ".base";
  if (ctx.done(stage)) return;
  ctx.note(stage);
  ModelGraph m = build_model(ctx.arch, ctx.cfg.seeds[k]);
  TrainConfig tc;
  tc.lambda = 0;
  tc.epochs = ctx.cfg.epochs;
  tc.batch_size = ctx.cfg.batch_size;
  tc.lr = ctx.cfg.lr;
  tc.seed = ctx.cfg.seeds[k];
  tc.csv_path = ctx.dir + "/" + tag + "_base_train.csv";
  train(m, ctx.data, tc);
  m.save(ctx.dir + "/" + tag + "_base");
  save_logits_csv(ctx.dir + "/" + tag + "_base_logits.csv",
                  eval_logits(m, ctx.data.test_x, ctx.cfg.batch_size));
  ctx.commit(stage, arts);
}

void run_pretrain_stage(PipelineCtx& ctx, int k) {
  const std::string tag = ctx.seed_tag(k);
  std::vector<std::string> arts = {tag + "_pretrained.json", tag + "_pretrained.bin",
                                   tag + "_pretrained_train.csv", tag + "_pretrained_logits.csv"};
  const std::string stage = tag + ".pretrain";
  if (ctx.done(stage)) return;
  ctx.note(stage);
  if (ctx.cfg.lambda == 0) {
    // Eq. 2 degenerates to the base objective; reuse the base run verbatim.
    for (const char* suffix : {".json", ".bin", "_train.csv", "_logits.csv"})
      copy_file_over(ctx.dir + "/" + tag + "_base" + suffix,
                     ctx.dir + "/" + tag + "_pretrained" + suffix);
  } else {
    ModelGraph m = build_model(ctx.arch, ctx.cfg.seeds[k]);
    TrainConfig tc;
    tc.lambda = ctx.cfg.lambda;
    tc.epochs = ctx.cfg.epochs;
    tc.batch_size = ctx.cfg.batch_size;
    tc.lr = ctx.cfg.lr;
    tc.seed = ctx.cfg.seeds[k];
    tc.csv_path = ctx.dir + "/" + tag + "_pretrained_train.csv";
    train(m, ctx.data, tc);
    m.save(ctx.dir + "/" + tag + "_pretrained");
    save_logits_csv(ctx.dir + "/" + tag + "_pretrained_logits.csv",
                    eval_logits(m, ctx.data.test_x, ctx.cfg.batch_size));
  }
  ctx.commit(stage, arts);
}

void run_prune_stage(PipelineCtx& ctx, int k) {
  const std::string tag = ctx.seed_tag(k);
  std::vector<std::string> arts = {tag + "_plan.json", tag + "_pruned.json", tag + "_pruned.bin",
                                   tag + "_pruned_logits.csv"};
  const std::string stage = tag + ".prune";
  if (ctx.done(stage)) return;
  ctx.note(stage);
  ModelGraph m = ModelGraph::load(ctx.dir + "/" + tag + "_pretrained");
  StrengthMatrix s = collect_strengths(m, ctx.data.train_x, {}, ctx.cfg.batch_size);
  PruningPlan plan = consensus_plan(thresholds_and_mask(s), s, m, ctx.data.n_train());
  plan.metadata["dataset"] = ctx.ref.name;
  plan.metadata["lambda"] = std::to_string(ctx.cfg.lambda);
  plan.metadata["seed"] = std::to_string(ctx.cfg.seeds[k]);
  plan.metadata["model_hash"] = fnv1a_file(ctx.dir + "/" + tag + "_pretrained.bin");
  plan.save(ctx.dir + "/" + tag + "_plan.json");
  ModelGraph pruned = m.apply_surgery(plan);
  pruned.save(ctx.dir + "/" + tag + "_pruned");
  save_logits_csv(ctx.dir + "/" + tag + "_pruned_logits.csv",
                  eval_logits(pruned, ctx.data.test_x, ctx.cfg.batch_size));
  ctx.commit(stage, arts);
}

void run_retrain_stage(PipelineCtx& ctx, int k, const std::string& mode) {
  const std::string tag = ctx.seed_tag(k);
  const std::string base = tag + "_" + mode;
  std::vector<std::string> arts = {base + ".json", base + ".bin", base + "_train.csv",
                                   base + "_logits.csv"};
  const std::string stage = tag + "." + mode;
  if (ctx.done(stage)) return;
  ctx.note(stage);
  ModelGraph m = ModelGraph::load(ctx.dir + "/" + tag + "_pruned");
  RetrainMode rm;
  rm.mode = mode;
  rm.epochs = ctx.cfg.epochs;
  rm.batch_size = ctx.cfg.batch_size;
  rm.lr = ctx.cfg.lr;
  rm.seed = ctx.cfg.seeds[k];
  retrain(m, ctx.data, rm, ctx.dir + "/" + base + "_train.csv");
  m.save(ctx.dir + "/" + base);
  save_logits_csv(ctx.dir + "/" + base + "_logits.csv",
                  eval_logits(m, ctx.data.test_x, ctx.cfg.batch_size));
  ctx.commit(stage, arts);
}

void run_static_stage(PipelineCtx& ctx, int k, int filters) {
  const std::string tag = ctx.seed_tag(k);
  const std::string base = tag + "_static" + std::to_string(filters);
  std::vector<std::string> arts = {base + ".json", base + ".bin", base + "_logits.csv"};
  const std::string stage = tag + ".static" + std::to_string(filters);
  if (ctx.done(stage)) return;
  ctx.note(stage);
  ModelGraph m = ModelGraph::load(ctx.dir + "/" + tag + "_pretrained");
  StrengthMatrix s = collect_strengths(m, ctx.data.train_x, {}, ctx.cfg.batch_size);
  ModelGraph pruned = m.apply_surgery(static_plan(s, m, filters));
  pruned.save(ctx.dir + "/" + base);
  save_logits_csv(ctx.dir + "/" + base + "_logits.csv",
                  eval_logits(pruned, ctx.data.test_x, ctx.cfg.batch_size));
  ctx.commit(stage, arts);
}

std::optional<double> mean_efficiency(ModelGraph& m, const Tensor& train_x, int batch_size) {
  const std::string block = m.blocks().back().name;
  const int N = train_x.dim(0), T = train_x.dim(2);
  double sum = 0;
  int count = 0;
  for (int start = 0; start < N; start += batch_size) {
    int b = std::min(batch_size, N - start);
    Tensor batch(Shape{b, 1, T});
    std::copy(train_x.data() + static_cast<std::int64_t>(start) * T,
              train_x.data() + static_cast<std::int64_t>(start + b) * T, batch.data());
    Tensor f = m.forward(batch, false, {block}).captures.at(block);  // [b,C,T]
    const int C = f.dim(1);
    for (int i = 0; i < b; ++i) {
      Tensor one(Shape{C, T});
      for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t) one.at(c, t) = f.at(i, c, t);
      auto score = efficiency_score(one);
      if (score) {
        sum += *score;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

void run_report_stage(PipelineCtx& ctx) {
  const std::string stage = "report";
  if (ctx.done(stage)) return;
  ctx.note(stage);

  std::vector<std::pair<std::string, std::string>> variants;  // method, file infix
  for (const auto& v : kVariantOrder) {
    if (v == "Finetuned" && !std::count(ctx.cfg.retrain_modes.begin(),
                                        ctx.cfg.retrain_modes.end(), "finetune"))
      continue;
    if (v == "Scratch" && !std::count(ctx.cfg.retrain_modes.begin(),
                                      ctx.cfg.retrain_modes.end(), "scratch"))
      continue;
    std::string infix = v == "Finetuned" ? "finetune" : v;
    std::transform(infix.begin(), infix.end(), infix.begin(), ::tolower);
    variants.emplace_back(v, infix);
  }
  for (int fk : ctx.cfg.static_baselines)
    variants.emplace_back("Static" + std::to_string(fk), "static" + std::to_string(fk));

  // Base complexity + efficiency, shared across rows.
  std::int64_t base_params = 0;
  std::optional<double> base_eff;
  {
    double eff_sum = 0;
    int eff_n = 0;
    for (int k = 0; k < ctx.cfg.ensemble_size; ++k) {
      ModelGraph m = ModelGraph::load(ctx.dir + "/" + ctx.seed_tag(k) + "_base");
      base_params += count_params(m);
      auto e = mean_efficiency(m, ctx.data.train_x, ctx.cfg.batch_size);
      if (e) {
        eff_sum += *e;
        ++eff_n;
      }
    }
    if (eff_n) base_eff = eff_sum / eff_n;
  }

  std::vector<ReportRow> rows;
  for (const auto& [method, infix] : variants) {
    ReportRow r;
    r.dataset = ctx.ref.name;
    r.method = method;
    std::vector<Tensor> logits;
    std::int64_t params = 0, flops = 0;
    double eff_sum = 0;
    int eff_n = 0;
    for (int k = 0; k < ctx.cfg.ensemble_size; ++k) {
      const std::string base = ctx.dir + "/" + ctx.seed_tag(k) + "_" + infix;
      logits.push_back(load_logits_csv(base + "_logits.csv"));
      ModelGraph m = ModelGraph::load(base);
      params += count_params(m);
      flops += count_flops(m);
      auto e = mean_efficiency(m, ctx.data.train_x, ctx.cfg.batch_size);
      if (e) {
        eff_sum += *e;
        ++eff_n;
      }
    }
    r.accuracy = ensemble_accuracy(logits, ctx.data.test_y, ctx.cfg.ensemble_size);
    r.params = params;
    r.flops = flops;
    r.memory_mb = 4.0 * params / (1024.0 * 1024.0);
    r.pruning_ratio = 1.0 - static_cast<double>(params) / static_cast<double>(base_params);
    r.efficiency_base = base_eff;
    if (eff_n) r.efficiency_pruned = eff_sum / eff_n;
    rows.push_back(std::move(r));
  }
  save_report_csv(ctx.dir + "/report.csv", rows);
  ctx.commit(stage, {"report.csv"});
}

}  // namespace

RunManifest run_pipeline(const ExperimentConfig& cfg, const DatasetRef& ref, std::ostream* log) {
  cfg.validate();
  PipelineCtx ctx{cfg, ref, load_ucr_pair(ref.train_path, ref.test_path, ref.name), cfg.arch,
                  cfg.out_dir + "/" + ref.name, RunManifest{}, log};
  ctx.arch.n_classes = ctx.data.n_classes;
  ctx.arch.series_length = ctx.data.series_length();
  fs::create_directories(ctx.dir);

  const std::string manifest_path = ctx.dir + "/manifest.json";
  if (fs::exists(manifest_path)) {
    RunManifest prev = RunManifest::load(manifest_path);
    if (prev.config_hash == cfg.hash()) ctx.manifest = std::move(prev);
  }
  ctx.manifest.config_hash = cfg.hash();

  auto guarded = [&](const std::string& stage, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      throw std::runtime_error("stage " + ref.name + "/" + stage + " failed: " + e.what());
    }
  };
  for (int k = 0; k < cfg.ensemble_size; ++k) {
    const std::string tag = ctx.seed_tag(k);
    guarded(tag + ".base", [&] { run_base_stage(ctx, k); });
    guarded(tag + ".pretrain", [&] { run_pretrain_stage(ctx, k); });
    guarded(tag + ".prune", [&] { run_prune_stage(ctx, k); });
    for (const auto& mode : cfg.retrain_modes)
      guarded(tag + "." + mode, [&] { run_retrain_stage(ctx, k, mode); });
    for (int fk : cfg.static_baselines)
      guarded(tag + ".static" + std::to_string(fk), [&] { run_static_stage(ctx, k, fk); });
  }
  guarded("report", [&] { run_report_stage(ctx); });
  return ctx.manifest;
}

std::vector<RunManifest> run_all(const ExperimentConfig& cfg, std::ostream* log) {
  std::vector<RunManifest> out;
  for (const auto& ref : cfg.datasets) out.push_back(run_pipeline(cfg, ref, log));
  return out;
}

std::vector<ReportRow> load_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read report " + path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<ReportRow> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t b = cell.find_first_not_of(' ');
      std::size_t e = cell.find_last_not_of(' ');
      cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
    }
    if (cells.size() < 7) throw std::runtime_error("malformed report row in " + path);
    cells.resize(9);
    ReportRow r;
    r.dataset = cells[0];
    r.method = cells[1];
    r.accuracy = std::stod(cells[2]);
    r.params = std::stoll(cells[3]);
    r.flops = std::stoll(cells[4]);
    r.memory_mb = std::stod(cells[5]);
    r.pruning_ratio = std::stod(cells[6]);
    if (!cells[7].empty()) r.efficiency_base = std::stod(cells[7]);
    if (!cells[8].empty()) r.efficiency_pruned = std::stod(cells[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

CompareOutputs compare_runs(const std::vector<std::string>& run_dirs,
                            const std::vector<std::string>& labels) {
  if (run_dirs.size() < 2) throw std::invalid_argument("compare needs at least two run roots");
  if (labels.size() != run_dirs.size())
    throw std::invalid_argument("one label per run root required");

  struct MethodData {
    std::map<std::string, ReportRow> by_dataset;
  };
  std::map<std::string, MethodData> methods;
  std::vector<std::set<std::string>> per_root;
  for (std::size_t r = 0; r < run_dirs.size(); ++r) {
    std::set<std::string> datasets;
    for (const auto& entry : fs::directory_iterator(run_dirs[r])) {
      if (!entry.is_directory()) continue;
      fs::path report = entry.path() / "report.csv";
      if (!fs::exists(report)) continue;
      for (const auto& row : load_report_csv(report.string())) {
        methods[labels[r] + ":" + row.method].by_dataset[row.dataset] = row;
        datasets.insert(row.dataset);
      }
    }
    if (datasets.empty())
      throw std::invalid_argument("run root " + run_dirs[r] + " holds no reports");
    per_root.push_back(std::move(datasets));
  }
  std::set<std::string> shared = per_root.front();
  for (const auto& s : per_root) {
    std::set<std::string> next;
    std::set_intersection(shared.begin(), shared.end(), s.begin(), s.end(),
                          std::inserter(next, next.begin()));
    shared = std::move(next);
  }
  if (shared.empty())
    throw std::invalid_argument("run roots share no datasets; nothing to compare");

  CompareOutputs out;
  AccuracyTable table;
  for (const auto& [method, md] : methods)
    for (const auto& ds : shared) {
      auto it = md.by_dataset.find(ds);
      if (it == md.by_dataset.end())
        throw std::invalid_argument("method " + method + " lacks dataset " + ds);
      table[method][ds] = it->second.accuracy;
      out.scatter.push_back({method, ds, it->second.accuracy, it->second.flops,
                             it->second.params});
    }
  out.matrix = comparison_matrix(table);
  return out;
}

}  // namespace dsp
