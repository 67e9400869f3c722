#include "nnwm/hosts.hpp"

#include <algorithm>
#include <cmath>

#include "nnwm/errors.hpp"
#include "nnwm/rng.hpp"
#include "nnwm/watermark.hpp"

namespace nnwm {

namespace {

Conv2d make_conv(std::size_t filter, std::size_t depth, std::size_t count, Rng& rng) {
  Conv2d conv;
  conv.filter = filter;
  conv.depth = depth;
  conv.count = count;
  conv.weight = Tensor({filter, filter, depth, count});
  conv.bias = Tensor({count});
  const double stddev = std::sqrt(2.0 / static_cast<double>(filter * filter * depth));
  for (std::size_t i = 0; i < conv.weight.size(); ++i) conv.weight[i] = stddev * rng.normal();
  return conv;
}

Dense make_dense(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  Dense dense;
  dense.in_dim = in_dim;
  dense.out_dim = out_dim;
  dense.weight = Tensor({in_dim, out_dim});
  dense.bias = Tensor({out_dim});
  const double stddev = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (std::size_t i = 0; i < dense.weight.size(); ++i) dense.weight[i] = stddev * rng.normal();
  return dense;
}

}  // namespace

HostPreset host_preset_from_string(const std::string& s) {
  if (s == "toy-mlp") return HostPreset::toy_mlp;
  if (s == "small-cnn") return HostPreset::small_cnn;
  if (s == "mini-wide") return HostPreset::mini_wide;
  throw ConfigError("unknown host preset '" + s + "' (expected toy-mlp, small-cnn or mini-wide)");
}

const char* host_preset_name(HostPreset preset) {
  switch (preset) {
    case HostPreset::toy_mlp: return "toy-mlp";
    case HostPreset::small_cnn: return "small-cnn";
    case HostPreset::mini_wide: return "mini-wide";
  }
  return "?";
}

HostModel build_host(HostPreset preset, std::uint64_t seed,
                     const std::vector<std::size_t>& input_shape, std::size_t classes) {
  if (classes < 2) throw ConfigError("host needs at least 2 classes");

  HostModel model;
  model.input_shape = input_shape;
  model.num_classes = classes;
  model.init_seed = seed;
  Rng rng(derive_seed(seed, 0));

  switch (preset) {
    case HostPreset::toy_mlp: {
      const std::size_t feat = shape_numel(input_shape);
      model.layers.push_back(make_dense(feat, 32, rng));
      model.layers.push_back(Relu{});
      model.layers.push_back(make_dense(32, classes, rng));
      model.layers.push_back(SoftmaxOutput{});
      break;
    }
    case HostPreset::small_cnn: {
      if (input_shape.size() != 3) {
        throw ConfigError("small-cnn expects an (H, W, C) input, got " +
                          shape_string(input_shape));
      }
      const std::size_t h = input_shape[0], w = input_shape[1], c = input_shape[2];
      if (h % 2 != 0 || w % 2 != 0) throw ConfigError("small-cnn input must pool by 2");
      model.layers.push_back(make_conv(3, c, 16, rng));
      model.layers.push_back(Relu{});
      model.layers.push_back(make_conv(3, 16, 16, rng));
      model.layers.push_back(Relu{});
      model.layers.push_back(AvgPool{2});
      model.layers.push_back(make_dense((h / 2) * (w / 2) * 16, classes, rng));
      model.layers.push_back(SoftmaxOutput{});
      model.embed_layer = 2;
      break;
    }
    case HostPreset::mini_wide: {
      if (input_shape.size() != 3) {
        throw ConfigError("mini-wide expects an (H, W, C) input, got " +
                          shape_string(input_shape));
      }
      const std::size_t h = input_shape[0], w = input_shape[1], c = input_shape[2];
      if (h % 4 != 0 || w % 4 != 0) throw ConfigError("mini-wide input must pool by 4");
      model.layers.push_back(make_conv(3, c, 16, rng));
      model.layers.push_back(Relu{});
      model.layers.push_back(make_conv(3, 16, 16, rng));  // group 2, M = 144
      model.layers.push_back(Relu{});
      model.layers.push_back(AvgPool{2});
      model.layers.push_back(make_conv(3, 16, 32, rng));
      model.layers.push_back(Relu{});
      model.layers.push_back(make_conv(3, 32, 32, rng));  // group 3, M = 288
      model.layers.push_back(Relu{});
      model.layers.push_back(AvgPool{2});
      model.layers.push_back(make_conv(3, 32, 64, rng));
      model.layers.push_back(Relu{});
      model.layers.push_back(make_conv(3, 64, 64, rng));  // group 4, M = 576
      model.layers.push_back(Relu{});
      model.layers.push_back(make_dense((h / 4) * (w / 4) * 64, classes, rng));
      model.layers.push_back(SoftmaxOutput{});
      model.embed_layer = 2;
      break;
    }
  }
  validate_model(model);
  return model;
}

HostModel sample_check_host(std::uint64_t seed) {
  Rng pick(derive_seed(seed, 17));
  const std::size_t side = pick.uniform_index(2) ? 4 : 6;
  const std::size_t channels = 1 + pick.uniform_index(3);
  const std::size_t classes = 2 + pick.uniform_index(3);
  const std::size_t l1 = 2 + pick.uniform_index(3);
  const bool two_convs = pick.uniform_index(4) != 0;  // mostly two, so M varies
  const std::size_t l2 = 1 + pick.uniform_index(3);
  const bool pool = pick.uniform_index(2) != 0;
  const bool hidden_dense = pick.uniform_index(2) != 0;

  HostModel model;
  model.input_shape = {side, side, channels};
  model.num_classes = classes;
  model.init_seed = seed;
  Rng rng(derive_seed(seed, 0));

  model.layers.push_back(make_conv(3, channels, l1, rng));
  model.layers.push_back(Relu{});
  if (two_convs) {
    model.layers.push_back(make_conv(3, l1, l2, rng));
    model.layers.push_back(Relu{});
    model.embed_layer = 2;
  } else {
    model.embed_layer = 0;
  }
  std::size_t spatial = side;
  if (pool) {
    model.layers.push_back(AvgPool{2});
    spatial = side / 2;
  }
  const std::size_t feat = spatial * spatial * (two_convs ? l2 : l1);
  if (hidden_dense) {
    model.layers.push_back(make_dense(feat, 6, rng));
    model.layers.push_back(Relu{});
    model.layers.push_back(make_dense(6, classes, rng));
  } else {
    model.layers.push_back(make_dense(feat, classes, rng));
  }
  model.layers.push_back(SoftmaxOutput{});
  validate_model(model);
  return model;
}

std::vector<std::size_t> embeddable_layers(const HostModel& model) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (std::holds_alternative<Conv2d>(model.layers[i])) out.push_back(i);
  }
  std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
    return embed_dim(model, a) < embed_dim(model, b);
  });
  return out;
}

}  // namespace nnwm
