#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "nnwm/model.hpp"

namespace nnwm {

// Learning-rate drops: at each (epoch, multiplier) pair the rate is scaled
// once; the effective rate at epoch e is base * prod{ mult : drop_epoch <= e }.
struct LrSchedule {
  std::vector<std::pair<std::size_t, double>> drops;

  double at(std::size_t epoch, double base) const;

  // Single drop by 0.2 at 60% of the run, the desk-scale default policy.
  static LrSchedule single_drop(std::size_t epochs);
};

// SGD with Nesterov momentum; weight decay enters as an L2 gradient term
// (g <- g + wd * w). Velocities mirror the model's parameter tensors.
struct OptimizerState {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5.0e-4;
  LrSchedule schedule;
  std::vector<Tensor> velocity;

  void init(HostModel& model);
  void validate() const;
};

// One Nesterov update over all parameters at rate `lr_now`; bumps
// model.version. Throws NumericError on non-finite gradients.
void sgd_step(HostModel& model, const std::vector<LayerGrads>& grads, OptimizerState& state,
              double lr_now);

}  // namespace nnwm
