#pragma once

#include <string>
#include <vector>

#include "nnwm/model.hpp"

namespace nnwm {

struct GradCheckReport {
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::size_t params_checked = 0;
  std::string worst;  // e.g. "layer 0 (conv2d) weight[17]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Relative error with an absolute floor so near-zero pairs compare cleanly.
double gradient_rel_error(double analytic, double numeric);

// Central finite differences of the composite loss (E0 plus `extra` when
// given) against a caller-supplied analytic gradient.
GradCheckReport compare_to_finite_differences(HostModel& model, const Tensor& batch,
                                              const Tensor& targets, const ExtraTerm* extra,
                                              const std::vector<LayerGrads>& analytic,
                                              double tolerance, double step = 1e-5);

// Full check: analytic gradients from backward() (with the regularizer term
// accumulated when attached) vs central differences over every parameter.
GradCheckReport grad_check(HostModel& model, const Tensor& batch, const Tensor& targets,
                           const ExtraTerm* extra, double tolerance, double step = 1e-5);

}  // namespace nnwm
