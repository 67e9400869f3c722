#include "nnwm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string_view>

#include "nnwm/errors.hpp"

namespace nnwm {

double gradient_rel_error(double analytic, double numeric) {
  const double scale = std::max({std::fabs(analytic), std::fabs(numeric), 1e-6});
  return std::fabs(analytic - numeric) / scale;
}

GradCheckReport compare_to_finite_differences(HostModel& model, const Tensor& batch,
                                              const Tensor& targets, const ExtraTerm* extra,
                                              const std::vector<LayerGrads>& analytic,
                                              double tolerance, double step) {
  GradCheckReport report;
  report.tolerance = tolerance;

  for (const ParamRef& p : parameters(model)) {
    const Tensor& grad = std::string_view(p.role) == std::string_view("weight")
                             ? analytic[p.layer].dweight
                             : analytic[p.layer].dbias;
    for (std::size_t i = 0; i < p.tensor->size(); ++i) {
      double& w = (*p.tensor)[i];
      const double saved = w;
      w = saved + step;
      const double up = composite_loss(model, batch, targets, extra);
      w = saved - step;
      const double down = composite_loss(model, batch, targets, extra);
      w = saved;

      const double numeric = (up - down) / (2.0 * step);
      const double err = gradient_rel_error(grad[i], numeric);
      ++report.params_checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst = "layer " + std::to_string(p.layer) + " (" +
                       layer_kind_name(model.layers[p.layer]) + ") " + p.role + "[" +
                       std::to_string(i) + "]";
        report.worst_analytic = grad[i];
        report.worst_numeric = numeric;
      }
    }
  }
  report.pass = report.max_rel_error <= tolerance;
  return report;
}

GradCheckReport grad_check(HostModel& model, const Tensor& batch, const Tensor& targets,
                           const ExtraTerm* extra, double tolerance, double step) {
  ForwardPass pass = forward(model, batch, &targets);
  std::vector<LayerGrads> grads = backward(model, pass, targets);
  if (extra && extra->accumulate_grad) extra->accumulate_grad(model, grads);
  return compare_to_finite_differences(model, batch, targets, extra, grads, tolerance, step);
}

}  // namespace nnwm
