#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nnwm/layers.hpp"

namespace nnwm {

// Layer stack with parameters. `embed_layer`, when set, names the conv2d
// layer that carries the watermark. `version` counts parameter mutations so
// stale activations can be rejected in backward().
struct HostModel {
  std::vector<std::size_t> input_shape;  // (H, W, C) or (F)
  std::size_t num_classes = 0;
  std::vector<Layer> layers;
  std::optional<std::size_t> embed_layer;
  std::uint64_t init_seed = 0;
  std::uint64_t version = 0;

  std::size_t param_count() const;
};

// Validates layer compatibility by walking shapes from input to the head.
// Throws ConfigError on the first mismatch.
void validate_model(const HostModel& model);

struct ParamRef {
  Tensor* tensor;
  std::size_t layer;
  const char* role;  // "weight" | "bias"
};

std::vector<ParamRef> parameters(HostModel& model);

struct ForwardPass {
  Tensor batch;              // copy of the input batch
  std::vector<Tensor> acts;  // acts[i] = output of layers[i]; last = class probs
  double loss = 0.0;         // E0, mean softmax cross-entropy; NaN until targets seen
  std::uint64_t model_version = 0;

  const Tensor& probs() const { return acts.back(); }
};

// Runs the stack over a batch; when `targets` (N x C one-hot or soft
// distributions) is given, fills the mean cross-entropy loss E0.
// Throws ConfigError on shape mismatch and NumericError (naming the layer)
// if any activation goes non-finite.
ForwardPass forward(const HostModel& model, const Tensor& batch, const Tensor* targets = nullptr);

// Gradients of E0 w.r.t. every parameter tensor; shapes mirror parameters.
// Throws UsageError if the model changed since the forward pass.
std::vector<LayerGrads> backward(const HostModel& model, const ForwardPass& pass,
                                 const Tensor& targets);

// An additional differentiable term attached to the training objective
// (the embedding regularizer plugs in through this).
struct ExtraTerm {
  std::function<double(const HostModel&)> loss;
  std::function<void(const HostModel&, std::vector<LayerGrads>&)> accumulate_grad;
};

// E0 plus the extra term when present; the quantity finite differences see.
double composite_loss(const HostModel& model, const Tensor& batch, const Tensor& targets,
                      const ExtraTerm* extra);

}  // namespace nnwm
