#include "nnwm/watermark.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnwm/errors.hpp"
#include "nnwm/rng.hpp"

namespace nnwm {

namespace {

constexpr double kSigmoidClamp = 30.0;
constexpr double kLogFloor = 1e-12;

double sigmoid_clamped(double x) {
  const double z = std::clamp(x, -kSigmoidClamp, kSigmoidClamp);
  return 1.0 / (1.0 + std::exp(-z));
}

const Conv2d& conv_at(const HostModel& model, std::size_t layer_id) {
  if (layer_id >= model.layers.size()) {
    throw ConfigError("layer " + std::to_string(layer_id) + " out of range");
  }
  const auto* conv = std::get_if<Conv2d>(&model.layers[layer_id]);
  if (!conv) {
    throw ConfigError("layer " + std::to_string(layer_id) + " (" +
                      layer_kind_name(model.layers[layer_id]) + ") is not a conv2d layer");
  }
  return *conv;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

KeyKind key_kind_from_string(const std::string& s) {
  if (s == "direct") return KeyKind::direct;
  if (s == "diff") return KeyKind::diff;
  if (s == "random") return KeyKind::random;
  throw ConfigError("unknown key kind '" + s + "' (expected direct, diff or random)");
}

const char* key_kind_name(KeyKind kind) {
  switch (kind) {
    case KeyKind::direct: return "direct";
    case KeyKind::diff: return "diff";
    case KeyKind::random: return "random";
  }
  return "?";
}

WatermarkKey make_key(KeyKind kind, std::uint64_t seed, std::size_t bit_count,
                      std::size_t param_count) {
  if (bit_count < 1 || param_count < 1) {
    throw ConfigError("key needs T >= 1 and M >= 1");
  }
  if (kind == KeyKind::diff && param_count < 2) {
    throw ConfigError("diff key needs M >= 2 distinct columns");
  }

  WatermarkKey key;
  key.kind = kind;
  key.seed = seed;
  key.bit_count = bit_count;
  key.param_count = param_count;
  key.matrix = Tensor({bit_count, param_count});

  Rng rng(seed);
  double* x = key.matrix.data();
  const std::size_t m = param_count;

  switch (kind) {
    case KeyKind::direct: {
      std::vector<std::size_t> pool;
      for (std::size_t j = 0; j < bit_count; ++j) {
        if (pool.empty()) {
          pool.resize(m);
          std::iota(pool.begin(), pool.end(), std::size_t{0});
          rng.shuffle(pool);
        }
        x[j * m + pool.back()] = 1.0;
        pool.pop_back();
      }
      break;
    }
    case KeyKind::diff: {
      for (std::size_t j = 0; j < bit_count; ++j) {
        const std::size_t plus = rng.uniform_index(m);
        std::size_t minus = rng.uniform_index(m - 1);
        if (minus >= plus) ++minus;
        x[j * m + plus] = 1.0;
        x[j * m + minus] = -1.0;
      }
      break;
    }
    case KeyKind::random: {
      for (std::size_t i = 0; i < bit_count * m; ++i) x[i] = rng.normal();
      break;
    }
  }
  return key;
}

Message Message::ones(std::size_t bit_count) {
  Message msg;
  msg.bits.assign(bit_count, 1);
  return msg;
}

Message Message::random(std::size_t bit_count, std::uint64_t seed) {
  Message msg;
  msg.bits.resize(bit_count);
  Rng rng(seed);
  for (auto& b : msg.bits) b = static_cast<std::uint8_t>(rng.next_u64() & 1u);
  return msg;
}

Message Message::from_hex(const std::string& hex, std::size_t bit_count) {
  if (hex.size() * 4 < bit_count) {
    throw ConfigError("hex string too short for " + std::to_string(bit_count) + " bits");
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve((hex.size() + 1) / 2);
  for (std::size_t i = 0; i < hex.size(); i += 2) {
    const int hi = hex_value(hex[i]);
    const int lo = i + 1 < hex.size() ? hex_value(hex[i + 1]) : 0;
    if (hi < 0 || lo < 0) throw ConfigError("invalid hex digit in message");
    bytes.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
  }
  return from_bytes(bytes, bit_count);
}

std::string Message::to_hex() const {
  static const char digits[] = "0123456789abcdef";
  const std::vector<std::uint8_t> bytes = to_bytes();
  std::string hex;
  hex.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    hex.push_back(digits[b >> 4]);
    hex.push_back(digits[b & 0xF]);
  }
  return hex;
}

std::vector<std::uint8_t> Message::to_bytes() const {
  std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
  for (std::size_t j = 0; j < bits.size(); ++j) {
    if (bits[j]) bytes[j / 8] |= static_cast<std::uint8_t>(1u << (7 - j % 8));
  }
  return bytes;
}

Message Message::from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t bit_count) {
  if (bytes.size() * 8 < bit_count) {
    throw ConfigError("byte string too short for " + std::to_string(bit_count) + " bits");
  }
  Message msg;
  msg.bits.resize(bit_count);
  for (std::size_t j = 0; j < bit_count; ++j) {
    msg.bits[j] = (bytes[j / 8] >> (7 - j % 8)) & 1u;
  }
  return msg;
}

FlattenedTarget flatten_target(const Tensor& conv_weight) {
  if (conv_weight.rank() != 4) {
    throw ConfigError("embedding target must be a 4-D conv tensor, got " +
                      shape_string(conv_weight.shape()));
  }
  const std::size_t s0 = conv_weight.dim(0), s1 = conv_weight.dim(1);
  const std::size_t d = conv_weight.dim(2), l = conv_weight.dim(3);
  if (l < 1) throw ConfigError("conv tensor has no filters");

  FlattenedTarget target;
  target.filter = s0;
  target.depth = d;
  target.w.resize(s0 * s1 * d);
  const double* data = conv_weight.data();
  const double inv_l = 1.0 / static_cast<double>(l);
  // (S, S, D, L) row-major: position m = (i*S + j)*D + k owns the L
  // consecutive filter entries starting at m*L.
  for (std::size_t m = 0; m < target.w.size(); ++m) {
    double sum = 0.0;
    for (std::size_t f = 0; f < l; ++f) sum += data[m * l + f];
    target.w[m] = sum * inv_l;
  }
  return target;
}

FlattenedTarget flatten_target(const HostModel& model, std::size_t layer_id) {
  return flatten_target(conv_at(model, layer_id).weight);
}

std::size_t embed_dim(const HostModel& model, std::size_t layer_id) {
  const Conv2d& conv = conv_at(model, layer_id);
  return conv.filter * conv.filter * conv.depth;
}

EmbeddingLoss embedding_loss(const WatermarkKey& key, const Message& message,
                             std::span<const double> w) {
  if (message.size() != key.bit_count) {
    throw ConfigError("message has " + std::to_string(message.size()) + " bits, key expects " +
                      std::to_string(key.bit_count));
  }
  if (w.size() != key.param_count) {
    throw ConfigError("target has " + std::to_string(w.size()) + " parameters, key expects " +
                      std::to_string(key.param_count));
  }

  const std::size_t t = key.bit_count, m = key.param_count;
  const double* x = key.matrix.data();

  EmbeddingLoss result;
  result.grad.assign(m, 0.0);
  for (std::size_t j = 0; j < t; ++j) {
    const double* row = x + j * m;
    double proj = 0.0;
    for (std::size_t i = 0; i < m; ++i) proj += row[i] * w[i];
    const double y = sigmoid_clamped(proj);
    const double b = message.bits[j] ? 1.0 : 0.0;
    result.value -= b * std::log(std::max(y, kLogFloor)) +
                    (1.0 - b) * std::log(std::max(1.0 - y, kLogFloor));
    const double delta = y - b;
    for (std::size_t i = 0; i < m; ++i) result.grad[i] += row[i] * delta;
  }
  return result;
}

ExtraTerm attach_regularizer(const HostModel& model, std::size_t layer_id, WatermarkKey key,
                             Message message, double lambda) {
  const std::size_t m = embed_dim(model, layer_id);
  if (m != key.param_count) {
    throw ConfigError("layer " + std::to_string(layer_id) + " flattens to M=" + std::to_string(m) +
                      ", key expects M=" + std::to_string(key.param_count));
  }
  if (message.size() != key.bit_count) {
    throw ConfigError("message length " + std::to_string(message.size()) +
                      " does not match key T=" + std::to_string(key.bit_count));
  }
  if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");

  ExtraTerm term;
  term.loss = [layer_id, key, message, lambda](const HostModel& host) {
    const FlattenedTarget target = flatten_target(host, layer_id);
    return lambda * embedding_loss(key, message, target.w).value;
  };
  term.accumulate_grad = [layer_id, key, message, lambda](const HostModel& host,
                                                          std::vector<LayerGrads>& grads) {
    if (lambda == 0.0) return;
    const Conv2d& conv = conv_at(host, layer_id);
    const FlattenedTarget target = flatten_target(conv.weight);
    const EmbeddingLoss reg = embedding_loss(key, message, target.w);
    Tensor& dw = grads[layer_id].dweight;
    const std::size_t l = conv.count;
    const double scale = lambda / static_cast<double>(l);
    double* d = dw.data();
    for (std::size_t m_i = 0; m_i < reg.grad.size(); ++m_i) {
      const double g = reg.grad[m_i] * scale;
      for (std::size_t f = 0; f < l; ++f) d[m_i * l + f] += g;
    }
  };
  return term;
}

double DetectionStats::mean_bit() const {
  if (bits.size() == 0) return 0.0;
  double sum = 0.0;
  for (auto b : bits.bits) sum += b;
  return sum / static_cast<double>(bits.size());
}

DetectionStats extract(const WatermarkKey& key, const Tensor& conv_weight) {
  const FlattenedTarget target = flatten_target(conv_weight);
  if (target.w.size() != key.param_count) {
    throw ConfigError("conv tensor flattens to M=" + std::to_string(target.w.size()) +
                      ", key expects M=" + std::to_string(key.param_count));
  }

  const std::size_t t = key.bit_count, m = key.param_count;
  const double* x = key.matrix.data();

  DetectionStats stats;
  stats.y.resize(t);
  stats.bits.bits.resize(t);
  for (std::size_t j = 0; j < t; ++j) {
    const double* row = x + j * m;
    double proj = 0.0;
    for (std::size_t i = 0; i < m; ++i) proj += row[i] * target.w[i];
    stats.y[j] = sigmoid_clamped(proj);
    stats.bits.bits[j] = proj >= 0.0 ? 1 : 0;  // step function: s(0) = 1
    const auto bin = static_cast<std::size_t>(stats.y[j] * 32.0);
    ++stats.histogram[std::min<std::size_t>(bin, 31)];
  }
  return stats;
}

DetectionStats extract(const WatermarkKey& key, const HostModel& model, std::size_t layer_id) {
  return extract(key, conv_at(model, layer_id).weight);
}

double ber(const Message& extracted, const Message& reference) {
  if (extracted.size() != reference.size()) {
    throw ConfigError("bit strings differ in length: " + std::to_string(extracted.size()) +
                      " vs " + std::to_string(reference.size()));
  }
  if (extracted.size() == 0) throw ConfigError("empty message");
  std::size_t errors = 0;
  for (std::size_t j = 0; j < extracted.size(); ++j) {
    if ((extracted.bits[j] != 0) != (reference.bits[j] != 0)) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(extracted.size());
}

}  // namespace nnwm
