#include "dsp/train.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "dsp/ops.hpp"
#include "dsp/optim.hpp"

namespace dsp {

TrainHistory train(ModelGraph& model, const Dataset& data, const TrainConfig& cfg) {
  if (cfg.lambda < 0) throw std::invalid_argument("lambda must be >= 0");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (model.series_length() != data.series_length())
    throw std::invalid_argument("model length " + std::to_string(model.series_length()) +
                                " does not match dataset length " +
                                std::to_string(data.series_length()));
  std::vector<std::string> blocks = cfg.sparsity_blocks;
  if (blocks.empty()) blocks = model.block_names();
  for (const auto& b : blocks) model.block(b);  // unknown name -> error
  const bool sparsify = cfg.lambda > 0;

  auto params = model.trainable_parameters();
  Adam<float> opt(static_cast<float>(cfg.lr));
  PlateauScheduler sched(cfg.lr);
  const int N = data.n_train();

  TrainHistory history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double ce_sum = 0, sp_sum = 0;
    auto bs = batches(data.train_x, data.train_y, cfg.batch_size, true, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < bs.size(); ++bi) {
      const Batch& b = bs[bi];
      Tape<float> tape;
      auto bind = model.forward_on_tape(tape, b.x, true, sparsify ? blocks : std::vector<std::string>{});
      int ce = ops::softmax_cross_entropy(tape, bind.logits_id, b.y);
      int loss = ce;
      double sp_val = 0;
      if (sparsify) {
        int sp = -1;
        for (const auto& name : blocks) {
          int term = ops::l21_channel_norm(tape, bind.capture_slices.at(name));
          sp = sp < 0 ? term : ops::add(tape, sp, term);
        }
        sp_val = tape.value(sp)[0];
        loss = ops::axpy_scalar(tape, ce, sp, static_cast<float>(cfg.lambda));
      }
      double ce_val = tape.value(ce)[0];
      if (!std::isfinite(tape.value(loss)[0]))
        throw std::runtime_error("training diverged: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(bi));
      tape.backward(loss);
      opt.start_step();
      for (auto& p : params) {
        const Tensor* g = tape.param_grad(p.key);
        if (g) {
          opt.update(p.key, *p.tensor, *g);
        } else {
          opt.update(p.key, *p.tensor, Tensor(p.tensor->shape()));
        }
      }
      ce_sum += ce_val * b.x.dim(0);
      sp_sum += sp_val;
    }
    EpochStats st;
    st.epoch = epoch;
    st.ce_loss = ce_sum / N;
    st.sparsity_loss = sp_sum;
    st.total_loss = st.ce_loss + cfg.lambda * st.sparsity_loss;
    st.lr = sched.lr();  // rate in effect during this epoch
    history.push_back(st);
    opt.set_lr(static_cast<float>(sched.step(st.total_loss)));
  }
  if (!cfg.csv_path.empty()) save_history_csv(cfg.csv_path, history);
  return history;
}

TrainHistory retrain(ModelGraph& model, const Dataset& data, const RetrainMode& mode,
                     const std::string& csv_path) {
  if (mode.mode != "finetune" && mode.mode != "scratch")
    throw std::invalid_argument("retrain mode must be finetune or scratch, got " + mode.mode);
  if (mode.mode == "scratch") model.reinitialize(mode.seed);
  TrainConfig cfg;
  cfg.lambda = 0;
  cfg.epochs = mode.epochs;
  cfg.batch_size = mode.batch_size;
  cfg.lr = mode.lr;
  cfg.seed = mode.seed;
  cfg.csv_path = csv_path;
  return train(model, data, cfg);
}

void save_history_csv(const std::string& path, const TrainHistory& h) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "epoch, ce_loss, sparsity_loss, total_loss, lr\n";
  char buf[160];
  for (const auto& e : h) {
    std::snprintf(buf, sizeof(buf), "%d, %.9g, %.9g, %.9g, %.9g\n", e.epoch, e.ce_loss,
                  e.sparsity_loss, e.total_loss, e.lr);
    f << buf;
  }
}

}  // namespace dsp
