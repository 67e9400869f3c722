#pragma once

#include <cstddef>
#include <string>
#include <variant>

#include "nnwm/tensor.hpp"

namespace nnwm {

// Gradients of one layer's parameters; empty tensors for parameterless kinds.
struct LayerGrads {
  Tensor dweight;
  Tensor dbias;
};

// 2-D convolution, stride 1, zero-padded "same" output. Weight layout
// (S, S, D, L); bias per filter, excluded from watermarking.
struct Conv2d {
  std::size_t filter = 3;  // S
  std::size_t depth = 0;   // D
  std::size_t count = 0;   // L
  Tensor weight;           // (S, S, D, L)
  Tensor bias;             // (L)

  Tensor forward(const Tensor& in) const;
  // Returns the gradient w.r.t. the input, fills dweight/dbias.
  Tensor backward(const Tensor& in, const Tensor& dout, LayerGrads& grads) const;
};

// Fully connected layer; accepts any input rank, flattening per sample.
struct Dense {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Tensor weight;  // (in_dim, out_dim)
  Tensor bias;    // (out_dim)

  Tensor forward(const Tensor& in) const;
  Tensor backward(const Tensor& in, const Tensor& dout, LayerGrads& grads) const;
};

struct Relu {
  Tensor forward(const Tensor& in) const;
  Tensor backward(const Tensor& in, const Tensor& dout) const;
};

// Non-overlapping window average; spatial dims must divide by the window.
struct AvgPool {
  std::size_t window = 2;

  Tensor forward(const Tensor& in) const;
  Tensor backward(const Tensor& in, const Tensor& dout) const;
};

// Marker for the classification head; produces class probabilities. The
// cross-entropy loss and its gradient live with the model.
struct SoftmaxOutput {
  Tensor forward(const Tensor& in) const;
};

using Layer = std::variant<Conv2d, Dense, Relu, AvgPool, SoftmaxOutput>;

const char* layer_kind_name(const Layer& layer);
bool layer_has_params(const Layer& layer);

}  // namespace nnwm
