#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nnwm/model.hpp"
#include "nnwm/tensor.hpp"

namespace nnwm {

enum class KeyKind { direct, diff, random };

KeyKind key_kind_from_string(const std::string& s);
const char* key_kind_name(KeyKind kind);

// Secret T x M projection matrix, realized deterministically from
// (kind, seed, T, M); the key file stores only those four values.
//
// Construction, part of the key format:
//   direct: one '1' per row; columns drawn from a seeded shuffled pool so
//           each column is used at most once while T <= M (the pool is
//           reshuffled and reused once exhausted).
//   diff:   one '+1' and one '-1' per row at distinct columns, drawn
//           uniformly per row; rows independent.
//   random: entries i.i.d. standard normal, row-major draw order.
struct WatermarkKey {
  KeyKind kind = KeyKind::random;
  std::uint64_t seed = 0;
  std::size_t bit_count = 0;   // T
  std::size_t param_count = 0; // M
  Tensor matrix;               // (T, M)
};

WatermarkKey make_key(KeyKind kind, std::uint64_t seed, std::size_t bit_count,
                      std::size_t param_count);

// T-bit payload. Hex encoding is MSB-first within each byte; a trailing
// partial byte is zero-padded, the stored bit count disambiguates.
struct Message {
  std::vector<std::uint8_t> bits;  // values in {0, 1}

  std::size_t size() const { return bits.size(); }

  static Message ones(std::size_t bit_count);
  static Message random(std::size_t bit_count, std::uint64_t seed);
  static Message from_hex(const std::string& hex, std::size_t bit_count);
  std::string to_hex() const;
  std::vector<std::uint8_t> to_bytes() const;
  static Message from_bytes(const std::vector<std::uint8_t>& bytes, std::size_t bit_count);
};

// Mean of the conv tensor W (S, S, D, L) over its L filters, flattened in
// (row, column, depth) order: w[(i*S + j)*D + k] = mean_l W[i, j, k, l].
struct FlattenedTarget {
  std::vector<double> w;  // length M = S*S*D
  std::size_t filter = 0; // S
  std::size_t depth = 0;  // D
};

FlattenedTarget flatten_target(const Tensor& conv_weight);
FlattenedTarget flatten_target(const HostModel& model, std::size_t layer_id);

// The conv layer's flattened parameter length S*S*D for a given layer.
std::size_t embed_dim(const HostModel& model, std::size_t layer_id);

struct EmbeddingLoss {
  double value = 0.0;         // E_R, summed binary cross-entropy over bits
  std::vector<double> grad;   // dE_R/dw, length M
};

// E_R(w) = -sum_j [ b_j log y_j + (1 - b_j) log(1 - y_j) ],
// y_j = sigmoid(sum_i X_ji w_i); gradient component i = sum_j X_ji (y_j - b_j).
// Sigmoid inputs are clamped to [-30, 30] and log arguments floored at 1e-12.
EmbeddingLoss embedding_loss(const WatermarkKey& key, const Message& message,
                             std::span<const double> w);

// Regularized objective E = E0 + lambda * E_R wired into training/grad-check:
// the returned term adds lambda * (1/L) * dE_R/dw to the target layer's
// weight gradient (chain rule through the filter mean).
ExtraTerm attach_regularizer(const HostModel& model, std::size_t layer_id, WatermarkKey key,
                             Message message, double lambda);

// Extraction statistics. Bits threshold the raw projection at zero with
// s(0) = 1, equivalently y >= 0.5 on the sigmoid.
struct DetectionStats {
  std::vector<double> y;               // sigmoid projections, length T
  Message bits;                        // thresholded extraction
  std::optional<double> bit_error;     // vs a reference message, when known
  std::array<std::uint32_t, 32> histogram{};  // counts of y over [0, 1)

  double mean_bit() const;
};

DetectionStats extract(const WatermarkKey& key, const Tensor& conv_weight);
DetectionStats extract(const WatermarkKey& key, const HostModel& model, std::size_t layer_id);

// Hamming distance over T, in [0, 1].
double ber(const Message& extracted, const Message& reference);

}  // namespace nnwm
