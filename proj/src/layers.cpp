#include "nnwm/layers.hpp"

#include <algorithm>
#include <cmath>

#include "nnwm/errors.hpp"

namespace nnwm {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

}  // namespace

Tensor Conv2d::forward(const Tensor& in) const {
  require(in.rank() == 4, "conv2d expects a (N, H, W, C) batch, got " + shape_string(in.shape()));
  const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
  require(c == depth, "conv2d input depth " + std::to_string(c) + " != " + std::to_string(depth));
  const std::size_t s = filter, l = count;
  const std::size_t pad = (s - 1) / 2;

  Tensor out({n, h, w, l});
  const double* id = in.data();
  const double* wd = weight.data();
  double* od = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double* orow = od + ((b * h + y) * w + x) * l;
        for (std::size_t f = 0; f < l; ++f) orow[f] = bias[f];
        for (std::size_t i = 0; i < s; ++i) {
          const std::size_t yy = y + i;
          if (yy < pad || yy - pad >= h) continue;
          for (std::size_t j = 0; j < s; ++j) {
            const std::size_t xx = x + j;
            if (xx < pad || xx - pad >= w) continue;
            const double* irow = id + ((b * h + (yy - pad)) * w + (xx - pad)) * c;
            const double* wrow = wd + (i * s + j) * c * l;
            for (std::size_t k = 0; k < c; ++k) {
              const double iv = irow[k];
              const double* wl = wrow + k * l;
              for (std::size_t f = 0; f < l; ++f) orow[f] += iv * wl[f];
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& in, const Tensor& dout, LayerGrads& grads) const {
  const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
  const std::size_t s = filter, l = count;
  const std::size_t pad = (s - 1) / 2;

  grads.dweight = Tensor::zeros_like(weight);
  grads.dbias = Tensor::zeros_like(bias);
  Tensor din = Tensor::zeros_like(in);

  const double* id = in.data();
  const double* wd = weight.data();
  const double* gd = dout.data();
  double* dwd = grads.dweight.data();
  double* dbd = grads.dbias.data();
  double* did = din.data();

  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double* grow = gd + ((b * h + y) * w + x) * l;
        for (std::size_t f = 0; f < l; ++f) dbd[f] += grow[f];
        for (std::size_t i = 0; i < s; ++i) {
          const std::size_t yy = y + i;
          if (yy < pad || yy - pad >= h) continue;
          for (std::size_t j = 0; j < s; ++j) {
            const std::size_t xx = x + j;
            if (xx < pad || xx - pad >= w) continue;
            const std::size_t in_off = ((b * h + (yy - pad)) * w + (xx - pad)) * c;
            const double* irow = id + in_off;
            double* dirow = did + in_off;
            const double* wrow = wd + (i * s + j) * c * l;
            double* dwrow = dwd + (i * s + j) * c * l;
            for (std::size_t k = 0; k < c; ++k) {
              const double iv = irow[k];
              const double* wl = wrow + k * l;
              double* dwl = dwrow + k * l;
              double acc = 0.0;
              for (std::size_t f = 0; f < l; ++f) {
                const double g = grow[f];
                dwl[f] += iv * g;
                acc += wl[f] * g;
              }
              dirow[k] += acc;
            }
          }
        }
      }
    }
  }
  return din;
}

Tensor Dense::forward(const Tensor& in) const {
  require(in.rank() >= 2, "dense expects a batched input");
  const std::size_t n = in.dim(0);
  const std::size_t f = in.size() / n;
  require(f == in_dim, "dense input width " + std::to_string(f) + " != " + std::to_string(in_dim));

  Tensor out({n, out_dim});
  const double* id = in.data();
  const double* wd = weight.data();
  double* od = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    double* orow = od + b * out_dim;
    for (std::size_t u = 0; u < out_dim; ++u) orow[u] = bias[u];
    const double* irow = id + b * in_dim;
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double iv = irow[i];
      const double* wrow = wd + i * out_dim;
      for (std::size_t u = 0; u < out_dim; ++u) orow[u] += iv * wrow[u];
    }
  }
  return out;
}

Tensor Dense::backward(const Tensor& in, const Tensor& dout, LayerGrads& grads) const {
  const std::size_t n = in.dim(0);
  grads.dweight = Tensor::zeros_like(weight);
  grads.dbias = Tensor::zeros_like(bias);
  Tensor din = Tensor::zeros_like(in);

  const double* id = in.data();
  const double* wd = weight.data();
  const double* gd = dout.data();
  double* dwd = grads.dweight.data();
  double* dbd = grads.dbias.data();
  double* did = din.data();

  for (std::size_t b = 0; b < n; ++b) {
    const double* grow = gd + b * out_dim;
    const double* irow = id + b * in_dim;
    double* dirow = did + b * in_dim;
    for (std::size_t u = 0; u < out_dim; ++u) dbd[u] += grow[u];
    for (std::size_t i = 0; i < in_dim; ++i) {
      const double iv = irow[i];
      const double* wrow = wd + i * out_dim;
      double* dwrow = dwd + i * out_dim;
      double acc = 0.0;
      for (std::size_t u = 0; u < out_dim; ++u) {
        const double g = grow[u];
        dwrow[u] += iv * g;
        acc += wrow[u] * g;
      }
      dirow[i] += acc;
    }
  }
  return din;
}

Tensor Relu::forward(const Tensor& in) const {
  Tensor out = in;
  double* d = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) d[i] = std::max(0.0, d[i]);
  return out;
}

Tensor Relu::backward(const Tensor& in, const Tensor& dout) const {
  Tensor din = dout;
  const double* id = in.data();
  double* d = din.data();
  for (std::size_t i = 0; i < din.size(); ++i) {
    if (id[i] <= 0.0) d[i] = 0.0;
  }
  return din;
}

Tensor AvgPool::forward(const Tensor& in) const {
  require(in.rank() == 4, "avgpool expects a (N, H, W, C) batch");
  const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
  require(h % window == 0 && w % window == 0,
          "avgpool window " + std::to_string(window) + " does not divide " + shape_string(in.shape()));
  const std::size_t oh = h / window, ow = w / window;
  const double scale = 1.0 / static_cast<double>(window * window);

  Tensor out({n, oh, ow, c});
  const double* id = in.data();
  double* od = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        double* orow = od + ((b * oh + y) * ow + x) * c;
        for (std::size_t py = 0; py < window; ++py) {
          for (std::size_t px = 0; px < window; ++px) {
            const double* irow = id + ((b * h + y * window + py) * w + x * window + px) * c;
            for (std::size_t k = 0; k < c; ++k) orow[k] += irow[k];
          }
        }
        for (std::size_t k = 0; k < c; ++k) orow[k] *= scale;
      }
    }
  }
  return out;
}

Tensor AvgPool::backward(const Tensor& in, const Tensor& dout) const {
  const std::size_t n = in.dim(0), h = in.dim(1), w = in.dim(2), c = in.dim(3);
  const std::size_t oh = h / window, ow = w / window;
  const double scale = 1.0 / static_cast<double>(window * window);

  Tensor din = Tensor::zeros_like(in);
  const double* gd = dout.data();
  double* did = din.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        const double* grow = gd + ((b * oh + y) * ow + x) * c;
        for (std::size_t py = 0; py < window; ++py) {
          for (std::size_t px = 0; px < window; ++px) {
            double* drow = did + ((b * h + y * window + py) * w + x * window + px) * c;
            for (std::size_t k = 0; k < c; ++k) drow[k] += grow[k] * scale;
          }
        }
      }
    }
  }
  return din;
}

Tensor SoftmaxOutput::forward(const Tensor& in) const {
  require(in.rank() == 2, "softmax-output expects (N, C) logits");
  const std::size_t n = in.dim(0), c = in.dim(1);
  Tensor out({n, c});
  const double* id = in.data();
  double* od = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    const double* irow = id + b * c;
    double* orow = od + b * c;
    double peak = irow[0];
    for (std::size_t k = 1; k < c; ++k) peak = std::max(peak, irow[k]);
    double total = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      orow[k] = std::exp(irow[k] - peak);
      total += orow[k];
    }
    for (std::size_t k = 0; k < c; ++k) orow[k] /= total;
  }
  return out;
}

const char* layer_kind_name(const Layer& layer) {
  struct Visitor {
    const char* operator()(const Conv2d&) const { return "conv2d"; }
    const char* operator()(const Dense&) const { return "dense"; }
    const char* operator()(const Relu&) const { return "relu"; }
    const char* operator()(const AvgPool&) const { return "avgpool"; }
    const char* operator()(const SoftmaxOutput&) const { return "softmax-output"; }
  };
  return std::visit(Visitor{}, layer);
}

bool layer_has_params(const Layer& layer) {
  return std::holds_alternative<Conv2d>(layer) || std::holds_alternative<Dense>(layer);
}

}  // namespace nnwm
