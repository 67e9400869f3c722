#include "nnwm/model.hpp"

#include <cmath>
#include <string>

#include "nnwm/errors.hpp"

namespace nnwm {

namespace {

std::string layer_label(const HostModel& model, std::size_t index) {
  return "layer " + std::to_string(index) + " (" + layer_kind_name(model.layers[index]) + ")";
}

// Walks the stack and returns the output shape of each layer (sans batch dim).
std::vector<std::vector<std::size_t>> infer_shapes(const HostModel& model) {
  std::vector<std::vector<std::size_t>> shapes;
  std::vector<std::size_t> cur = model.input_shape;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& layer = model.layers[i];
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      if (cur.size() != 3 || cur[2] != conv->depth) {
        throw ConfigError(layer_label(model, i) + ": expects depth " +
                          std::to_string(conv->depth) + " input, got " + shape_string(cur));
      }
      cur = {cur[0], cur[1], conv->count};
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      if (shape_numel(cur) != dense->in_dim) {
        throw ConfigError(layer_label(model, i) + ": expects " + std::to_string(dense->in_dim) +
                          " inputs, got " + shape_string(cur));
      }
      cur = {dense->out_dim};
    } else if (const auto* pool = std::get_if<AvgPool>(&layer)) {
      if (cur.size() != 3 || cur[0] % pool->window != 0 || cur[1] % pool->window != 0) {
        throw ConfigError(layer_label(model, i) + ": window " + std::to_string(pool->window) +
                          " does not divide " + shape_string(cur));
      }
      cur = {cur[0] / pool->window, cur[1] / pool->window, cur[2]};
    } else if (std::holds_alternative<SoftmaxOutput>(layer)) {
      if (i + 1 != model.layers.size()) {
        throw ConfigError(layer_label(model, i) + ": must be the last layer");
      }
      if (shape_numel(cur) != model.num_classes) {
        throw ConfigError(layer_label(model, i) + ": expects " +
                          std::to_string(model.num_classes) + " logits, got " + shape_string(cur));
      }
    }
    shapes.push_back(cur);
  }
  return shapes;
}

constexpr double kLogFloor = 1e-12;

}  // namespace

std::size_t HostModel::param_count() const {
  std::size_t n = 0;
  for (const Layer& layer : layers) {
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      n += conv->weight.size() + conv->bias.size();
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      n += dense->weight.size() + dense->bias.size();
    }
  }
  return n;
}

void validate_model(const HostModel& model) {
  if (model.layers.empty()) throw ConfigError("model has no layers");
  if (!std::holds_alternative<SoftmaxOutput>(model.layers.back())) {
    throw ConfigError("model must end in a softmax-output layer");
  }
  infer_shapes(model);
  for (const Layer& layer : model.layers) {
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      if (conv->weight.rank() != 4) {
        throw ConfigError("conv2d weight must be 4-D, got " + shape_string(conv->weight.shape()));
      }
      if (conv->filter % 2 == 0) {
        throw ConfigError("conv2d filter size must be odd for same-padding");
      }
    }
  }
  if (model.embed_layer) {
    const std::size_t id = *model.embed_layer;
    if (id >= model.layers.size() || !std::holds_alternative<Conv2d>(model.layers[id])) {
      throw ConfigError("embed layer " + std::to_string(id) + " is not a conv2d layer");
    }
  }
}

std::vector<ParamRef> parameters(HostModel& model) {
  std::vector<ParamRef> refs;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (auto* conv = std::get_if<Conv2d>(&model.layers[i])) {
      refs.push_back({&conv->weight, i, "weight"});
      refs.push_back({&conv->bias, i, "bias"});
    } else if (auto* dense = std::get_if<Dense>(&model.layers[i])) {
      refs.push_back({&dense->weight, i, "weight"});
      refs.push_back({&dense->bias, i, "bias"});
    }
  }
  return refs;
}

ForwardPass forward(const HostModel& model, const Tensor& batch, const Tensor* targets) {
  if (batch.rank() != model.input_shape.size() + 1) {
    throw ConfigError("batch rank " + shape_string(batch.shape()) + " does not match model input " +
                      shape_string(model.input_shape));
  }
  for (std::size_t i = 0; i < model.input_shape.size(); ++i) {
    if (batch.dim(i + 1) != model.input_shape[i]) {
      throw ConfigError("batch shape " + shape_string(batch.shape()) +
                        " does not match model input " + shape_string(model.input_shape));
    }
  }

  ForwardPass pass;
  pass.batch = batch;
  pass.model_version = model.version;
  pass.loss = std::nan("");

  const Tensor* cur = &batch;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    Tensor out = std::visit(
        [&](const auto& layer) -> Tensor {
          using T = std::decay_t<decltype(layer)>;
          if constexpr (std::is_same_v<T, Relu> || std::is_same_v<T, AvgPool>) {
            return layer.forward(*cur);
          } else if constexpr (std::is_same_v<T, SoftmaxOutput>) {
            return layer.forward(cur->reshaped({cur->dim(0), cur->size() / cur->dim(0)}));
          } else {
            return layer.forward(*cur);
          }
        },
        model.layers[i]);
    if (!out.all_finite()) {
      throw NumericError(layer_label(model, i) + ": non-finite activation");
    }
    pass.acts.push_back(std::move(out));
    cur = &pass.acts.back();
  }

  if (targets) {
    const Tensor& probs = pass.probs();
    const std::size_t n = probs.dim(0), c = probs.dim(1);
    if (targets->rank() != 2 || targets->dim(0) != n || targets->dim(1) != c) {
      throw ConfigError("targets shape " + shape_string(targets->shape()) + " does not match (" +
                        std::to_string(n) + ", " + std::to_string(c) + ")");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < n * c; ++i) {
      const double t = (*targets)[i];
      if (t != 0.0) total -= t * std::log(std::max(probs[i], kLogFloor));
    }
    pass.loss = total / static_cast<double>(n);
  }
  return pass;
}

std::vector<LayerGrads> backward(const HostModel& model, const ForwardPass& pass,
                                 const Tensor& targets) {
  if (pass.model_version != model.version) {
    throw UsageError("stale activations: model parameters changed since forward");
  }
  if (pass.acts.size() != model.layers.size()) {
    throw UsageError("activations do not belong to this model");
  }
  const Tensor& probs = pass.probs();
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  if (targets.rank() != 2 || targets.dim(0) != n || targets.dim(1) != c) {
    throw UsageError("targets shape " + shape_string(targets.shape()) +
                     " does not match the forward batch");
  }

  // d E0 / d logits = (probs - targets) / N for mean-reduced cross-entropy.
  Tensor grad({n, c});
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n * c; ++i) grad[i] = (probs[i] - targets[i]) * inv_n;

  std::vector<LayerGrads> grads(model.layers.size());
  for (std::size_t idx = model.layers.size(); idx-- > 0;) {
    const Tensor& input = idx == 0 ? pass.batch : pass.acts[idx - 1];
    const Layer& layer = model.layers[idx];
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      grad = conv->backward(input, grad, grads[idx]);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      Tensor flat_grad = dense->backward(
          input.reshaped({input.dim(0), input.size() / input.dim(0)}), grad, grads[idx]);
      grad = flat_grad.reshaped(input.shape());
    } else if (const auto* relu = std::get_if<Relu>(&layer)) {
      grad = relu->backward(input, grad);
    } else if (const auto* pool = std::get_if<AvgPool>(&layer)) {
      grad = pool->backward(input, grad);
    } else {
      // Softmax head: the logits gradient was formed above; just reshape back.
      grad = grad.reshaped(input.shape());
    }
    if (!grad.all_finite()) {
      throw NumericError(layer_label(model, idx) + ": non-finite gradient");
    }
  }
  return grads;
}

double composite_loss(const HostModel& model, const Tensor& batch, const Tensor& targets,
                      const ExtraTerm* extra) {
  double value = forward(model, batch, &targets).loss;
  if (extra && extra->loss) value += extra->loss(model);
  return value;
}

}  // namespace nnwm
