#include "nnwm/optimizer.hpp"

#include <cmath>
#include <string>
#include <string_view>

#include "nnwm/errors.hpp"

namespace nnwm {

double LrSchedule::at(std::size_t epoch, double base) const {
  double lr = base;
  for (const auto& [drop_epoch, mult] : drops) {
    if (epoch >= drop_epoch) lr *= mult;
  }
  if (!(lr > 0.0)) throw ConfigError("learning rate is not positive after schedule");
  return lr;
}

LrSchedule LrSchedule::single_drop(std::size_t epochs) {
  LrSchedule s;
  const std::size_t at = (epochs * 6) / 10;
  if (at > 0 && at < epochs) s.drops.emplace_back(at, 0.2);
  return s;
}

void OptimizerState::init(HostModel& model) {
  validate();
  velocity.clear();
  for (const ParamRef& p : parameters(model)) velocity.push_back(Tensor::zeros_like(*p.tensor));
}

void OptimizerState::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be nonnegative");
}

void sgd_step(HostModel& model, const std::vector<LayerGrads>& grads, OptimizerState& state,
              double lr_now) {
  std::vector<ParamRef> params = parameters(model);
  if (state.velocity.size() != params.size()) {
    throw UsageError("optimizer state not initialised for this model");
  }

  std::size_t v = 0;
  for (const ParamRef& p : params) {
    const Tensor& g_src =
        std::string_view(p.role) == "weight" ? grads[p.layer].dweight : grads[p.layer].dbias;
    if (!g_src.same_shape(*p.tensor)) {
      throw UsageError("gradient shape mismatch at layer " + std::to_string(p.layer));
    }
    if (!g_src.all_finite()) {
      throw NumericError("non-finite gradient at layer " + std::to_string(p.layer));
    }
    Tensor& vel = state.velocity[v++];
    double* w = p.tensor->data();
    double* vd = vel.data();
    const double* gd = g_src.data();
    const double mu = state.momentum;
    const double wd = state.weight_decay;
    for (std::size_t i = 0; i < p.tensor->size(); ++i) {
      const double g = gd[i] + wd * w[i];
      vd[i] = mu * vd[i] + g;
      // Nesterov look-ahead: step along g + mu * v.
      w[i] -= lr_now * (g + mu * vd[i]);
    }
    if (!p.tensor->all_finite()) {
      throw NumericError("non-finite parameter after update at layer " + std::to_string(p.layer));
    }
  }
  ++model.version;
}

}  // namespace nnwm
