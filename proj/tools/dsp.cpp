#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "dsp/experiment.hpp"
#include "dsp/metrics.hpp"
#include "dsp/pruner.hpp"
#include "dsp/synthetic.hpp"
#include "dsp/train.hpp"

namespace fs = std::filesystem;
using namespace dsp;

namespace {

struct CommonOpts {
  std::string config;
  std::string dataset;
  std::string arch;
  std::string seeds;
  std::string out;
  double lambda = -1;
  int epochs = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config, "experiment config JSON");
  cmd->add_option("--dataset", o.dataset, "restrict to one dataset by name");
  cmd->add_option("--arch", o.arch, "architecture override")
      ->check(CLI::IsMember({"lite", "inception"}));
  cmd->add_option("--lambda", o.lambda, "sparsity weight override");
  cmd->add_option("--epochs", o.epochs, "epoch count override");
  cmd->add_option("--seeds", o.seeds, "comma-separated seed list override");
  cmd->add_option("--out", o.out, "output directory override");
}

ExperimentConfig resolve(const CommonOpts& o) {
  if (o.config.empty()) throw std::runtime_error("--config is required");
  ExperimentConfig cfg = ExperimentConfig::load(o.config);
  if (!o.arch.empty()) cfg.arch.architecture = o.arch;
  if (o.lambda >= 0) cfg.lambda = o.lambda;
  if (o.epochs >= 0) cfg.epochs = o.epochs;
  if (!o.out.empty()) cfg.out_dir = o.out;
  if (!o.seeds.empty()) {
    cfg.seeds.clear();
    std::istringstream ss(o.seeds);
    std::string cell;
    while (std::getline(ss, cell, ',')) cfg.seeds.push_back(std::stoull(cell));
    cfg.ensemble_size = static_cast<int>(cfg.seeds.size());
  }
  if (!o.dataset.empty()) {
    std::vector<DatasetRef> keep;
    for (const auto& d : cfg.datasets)
      if (d.name == o.dataset) keep.push_back(d);
    if (keep.empty()) throw std::runtime_error("dataset " + o.dataset + " not in config");
    cfg.datasets = keep;
  }
  cfg.validate();
  return cfg;
}

Dataset load_single(const ExperimentConfig& cfg) {
  if (cfg.datasets.size() != 1)
    throw std::runtime_error("this command needs exactly one dataset; use --dataset");
  const DatasetRef& r = cfg.datasets.front();
  return load_ucr_pair(r.train_path, r.test_path, r.name);
}

ArchConfig sized_arch(const ExperimentConfig& cfg, const Dataset& d) {
  ArchConfig a = cfg.arch;
  a.n_classes = d.n_classes;
  a.series_length = d.series_length();
  return a;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic structured pruning for 1D-convolutional time-series classifiers"};
  app.require_subcommand(1);

  CommonOpts o;
  std::string model_path, model_out, plan_out, mode = "finetune", logits_out;
  std::string base_path;
  std::vector<std::string> run_dirs, run_labels;
  std::uint64_t gen_seed = 2024;
  std::string gen_out = "data";

  auto* pipeline = app.add_subcommand("pipeline", "full per-seed pretrain/prune/retrain run");
  add_common(pipeline, o);

  auto* train_cmd = app.add_subcommand("train", "sparsity-pretrain one model (first seed)");
  add_common(train_cmd, o);
  train_cmd->add_option("--model-out", model_out, "checkpoint base path")->required();

  auto* prune_cmd = app.add_subcommand("prune", "consensus-prune a trained checkpoint");
  add_common(prune_cmd, o);
  prune_cmd->add_option("--model", model_path, "pretrained checkpoint base")->required();
  prune_cmd->add_option("--model-out", model_out, "pruned checkpoint base")->required();
  prune_cmd->add_option("--plan-out", plan_out, "pruning plan JSON path");

  auto* retrain_cmd = app.add_subcommand("retrain", "finetune or scratch-train a pruned model");
  add_common(retrain_cmd, o);
  retrain_cmd->add_option("--model", model_path, "pruned checkpoint base")->required();
  retrain_cmd->add_option("--model-out", model_out, "retrained checkpoint base")->required();
  retrain_cmd->add_option("--mode", mode, "finetune | scratch")
      ->check(CLI::IsMember({"finetune", "scratch"}));

  auto* eval_cmd = app.add_subcommand("evaluate", "test-set accuracy of a checkpoint");
  add_common(eval_cmd, o);
  eval_cmd->add_option("--model", model_path, "checkpoint base")->required();
  eval_cmd->add_option("--logits-out", logits_out, "persist per-sample logits CSV");

  auto* analyze_cmd = app.add_subcommand("analyze", "complexity and redundancy of a checkpoint");
  add_common(analyze_cmd, o);
  analyze_cmd->add_option("--model", model_path, "checkpoint base")->required();
  analyze_cmd->add_option("--base", base_path, "unpruned reference checkpoint base");

  auto* compare_cmd = app.add_subcommand("compare", "cross-run comparison matrix + scatter data");
  compare_cmd->add_option("--runs", run_dirs, "pipeline output roots")->required()
      ->expected(-2);
  compare_cmd->add_option("--labels", run_labels, "method label per run root");
  compare_cmd->add_option("--out", o.out, "output directory")->required();

  auto* gen_cmd = app.add_subcommand("gen-data", "write the synthetic evaluation suite");
  gen_cmd->add_option("--out", gen_out, "target directory");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*pipeline) {
      ExperimentConfig cfg = resolve(o);
      run_all(cfg, &std::cout);
      std::cout << "pipeline complete: " << cfg.out_dir << std::endl;
    } else if (*train_cmd) {
      ExperimentConfig cfg = resolve(o);
      Dataset d = load_single(cfg);
      ModelGraph m = build_model(sized_arch(cfg, d), cfg.seeds.front());
      TrainConfig tc;
      tc.lambda = cfg.lambda;
      tc.epochs = cfg.epochs;
      tc.batch_size = cfg.batch_size;
      tc.lr = cfg.lr;
      tc.seed = cfg.seeds.front();
      tc.csv_path = model_out + "_train.csv";
      TrainHistory h = train(m, d, tc);
      m.save(model_out);
      std::cout << "trained " << cfg.epochs << " epochs; final total loss "
                << (h.empty() ? 0.0 : h.back().total_loss) << "; saved " << model_out
                << ".{json,bin}" << std::endl;
    } else if (*prune_cmd) {
      ExperimentConfig cfg = resolve(o);
      Dataset d = load_single(cfg);
      ModelGraph m = ModelGraph::load(model_path);
      StrengthMatrix s = collect_strengths(m, d.train_x, {}, cfg.batch_size);
      PruningPlan plan = consensus_plan(thresholds_and_mask(s), s, m, d.n_train());
      plan.metadata["dataset"] = d.name;
      plan.metadata["lambda"] = std::to_string(cfg.lambda);
      plan.metadata["model_hash"] = fnv1a_file(model_path + ".bin");
      if (!plan_out.empty()) plan.save(plan_out);
      ModelGraph pruned = m.apply_surgery(plan);
      pruned.save(model_out);
      std::cout << "pruning ratio " << pruning_ratio(m, pruned) << "; saved " << model_out
                << ".{json,bin}" << std::endl;
    } else if (*retrain_cmd) {
      ExperimentConfig cfg = resolve(o);
      Dataset d = load_single(cfg);
      ModelGraph m = ModelGraph::load(model_path);
      RetrainMode rm;
      rm.mode = mode;
      rm.epochs = cfg.epochs;
      rm.batch_size = cfg.batch_size;
      rm.lr = cfg.lr;
      rm.seed = cfg.seeds.front();
      retrain(m, d, rm, model_out + "_train.csv");
      m.save(model_out);
      std::cout << mode << " retraining done; saved " << model_out << ".{json,bin}" << std::endl;
    } else if (*eval_cmd) {
      ExperimentConfig cfg = resolve(o);
      Dataset d = load_single(cfg);
      ModelGraph m = ModelGraph::load(model_path);
      Tensor logits = eval_logits(m, d.test_x, cfg.batch_size);
      if (!logits_out.empty()) save_logits_csv(logits_out, logits);
      std::cout << "accuracy " << accuracy_from_logits(logits, d.test_y) << " on " << d.n_test()
                << " test samples" << std::endl;
    } else if (*analyze_cmd) {
      ExperimentConfig cfg = resolve(o);
      Dataset d = load_single(cfg);
      ModelGraph m = ModelGraph::load(model_path);
      ComplexityReport r = complexity(m);
      std::cout << "params " << r.param_count << "\nflops " << r.flops << "\nmemory_mb "
                << r.memory_bytes / (1024.0 * 1024.0) << std::endl;
      if (!base_path.empty()) {
        ModelGraph base = ModelGraph::load(base_path);
        std::cout << "pruning_ratio " << pruning_ratio(base, m) << std::endl;
      }
      const std::string block = m.blocks().back().name;
      StrengthMatrix s = collect_strengths(m, d.train_x, {block}, cfg.batch_size);
      double sum = 0;
      int n = 0;
      const int T = d.series_length();
      for (int start = 0; start < d.n_train(); start += cfg.batch_size) {
        int bsz = std::min(cfg.batch_size, d.n_train() - start);
        Tensor batch(Shape{bsz, 1, T});
        std::copy(d.train_x.data() + static_cast<std::int64_t>(start) * T,
                  d.train_x.data() + static_cast<std::int64_t>(start + bsz) * T, batch.data());
        Tensor f = m.forward(batch, false, {block}).captures.at(block);
        for (int i = 0; i < bsz; ++i) {
          Tensor one(Shape{f.dim(1), T});
          for (int c = 0; c < f.dim(1); ++c)
            for (int t = 0; t < T; ++t) one.at(c, t) = f.at(i, c, t);
          if (auto e = efficiency_score(one)) {
            sum += *e;
            ++n;
          }
        }
      }
      if (n)
        std::cout << "efficiency_score " << sum / n << " (block " << block << ", " << n
                  << " samples)" << std::endl;
      else
        std::cout << "efficiency_score null (no active channels)" << std::endl;
    } else if (*compare_cmd) {
      if (run_labels.empty())
        for (const auto& dir : run_dirs) run_labels.push_back(fs::path(dir).filename().string());
      CompareOutputs c = compare_runs(run_dirs, run_labels);
      fs::create_directories(o.out);
      save_comparison_json(o.out + "/comparison.json", c.matrix);
      save_scatter_csv(o.out + "/scatter.csv", c.scatter);
      std::cout << "wrote " << o.out << "/comparison.json and scatter.csv" << std::endl;
    } else if (*gen_cmd) {
      fs::create_directories(gen_out);
      write_synthetic_suite(gen_out, gen_seed);
      std::cout << "wrote " << synthetic_suite().size() << " datasets to " << gen_out
                << std::endl;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
