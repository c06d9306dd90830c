#pragma once

#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dsp/tensor.hpp"

namespace dsp {

/// Records one forward pass as a sequence of value slots plus backward
/// closures. Slot creation order is a valid topological order, so backward()
/// is a single reverse sweep. A parameter key registered twice maps to one
/// slot, which makes gradients of shared parameters accumulate additively.
template <class S>
class Tape {
 public:
  int leaf(TensorT<S> value, bool requires_grad = false) {
    Slot s;
    s.value = std::move(value);
    s.needs_grad = requires_grad;
    slots_.push_back(std::move(s));
    return static_cast<int>(slots_.size()) - 1;
  }

  int parameter(const TensorT<S>& value, std::int64_t param_key) {
    auto it = param_slot_.find(param_key);
    if (it != param_slot_.end()) return it->second;
    int id = leaf(value, true);
    slots_[id].param_key = param_key;
    param_slot_[param_key] = id;
    return id;
  }

  /// Appends an op result. `back` receives the tape and must scatter the
  /// slot's grad into its input slots' grads.
  int push(TensorT<S> value, std::vector<int> inputs,
           std::function<void(Tape&, int)> back) {
    bool ng = false;
    for (int i : inputs) ng = ng || slots_[i].needs_grad;
    Slot s;
    s.value = std::move(value);
    s.needs_grad = ng;
    s.inputs = std::move(inputs);
    if (ng) s.back = std::move(back);
    slots_.push_back(std::move(s));
    return static_cast<int>(slots_.size()) - 1;
  }

  const TensorT<S>& value(int id) const { return slots_[id].value; }
  bool needs_grad(int id) const { return slots_[id].needs_grad; }

  /// Gradient buffer for a slot, allocated as zeros on first access.
  TensorT<S>& grad(int id) {
    Slot& s = slots_[id];
    if (s.grad.empty() && s.value.size() > 0) s.grad = TensorT<S>(s.value.shape());
    return s.grad;
  }

  void backward(int loss_id) {
    if (backward_done_)
      throw std::runtime_error("backward called twice on one tape; re-record the forward pass");
    backward_done_ = true;
    if (slots_[loss_id].value.size() != 1)
      throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                  shape_str(slots_[loss_id].value.shape()));
    grad(loss_id)[0] = S(1);
    for (int id = loss_id; id >= 0; --id) {
      Slot& s = slots_[id];
      if (!s.needs_grad || !s.back || s.grad.empty()) continue;
      s.back(*this, id);
    }
  }

  /// Accumulated gradient for a registered parameter, or nullptr if the
  /// parameter never received one.
  const TensorT<S>* param_grad(std::int64_t param_key) const {
    auto it = param_slot_.find(param_key);
    if (it == param_slot_.end()) return nullptr;
    const Slot& s = slots_[it->second];
    return s.grad.empty() ? nullptr : &s.grad;
  }

  std::size_t num_slots() const { return slots_.size(); }

 private:
  struct Slot {
    TensorT<S> value;
    TensorT<S> grad;
    bool needs_grad = false;
    std::int64_t param_key = -1;
    std::vector<int> inputs;
    std::function<void(Tape&, int)> back;
  };

  std::vector<Slot> slots_;
  std::unordered_map<std::int64_t, int> param_slot_;
  bool backward_done_ = false;
};

}  // namespace dsp
