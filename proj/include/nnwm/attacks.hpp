#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nnwm/train.hpp"
#include "nnwm/watermark.hpp"

namespace nnwm {

enum class PruneOrder { ascending, descending, random };

PruneOrder prune_order_from_string(const std::string& s);
const char* prune_order_name(PruneOrder order);

// Zero out round(alpha * P) of the target layer's P raw weights; magnitude
// ranking on the W entries themselves, ties broken by index. `seed` only
// matters for random order.
struct PruneSpec {
  double alpha = 0.0;
  PruneOrder order = PruneOrder::ascending;
  std::uint64_t seed = 0;
};

struct SweepPoint {
  double alpha = 0.0;
  PruneOrder order = PruneOrder::ascending;
  double embedding_loss = 0.0;
  double bit_error = 0.0;
};

// Per-attack record. Every attack works on a copy; the input model is never
// touched.
struct AttackReport {
  std::string kind;
  double er_before = 0.0;  // E_R(w)
  double er_after = 0.0;   // E'_R(w)
  double ber_before = 0.0;
  double ber_after = 0.0;
  std::optional<double> test_error_after;
  std::optional<double> half_sq_dist;  // posthoc: 0.5 * ||w - w0||^2
  std::vector<SweepPoint> sweep;
  std::optional<DetectionStats> new_watermark;  // overwrite: the second mark
  std::vector<std::string> warnings;
};

// Fine-tunes without the regularizer and reports E_R / BER drift of the
// embedded watermark (same objective, lambda dropped).
AttackReport attack_finetune(const HostModel& model, const WatermarkKey& key,
                             const Message& message, const Dataset& train_data,
                             const Dataset& test_data, std::size_t epochs,
                             const TrainConfig& base);

AttackReport attack_prune(const HostModel& model, const WatermarkKey& key, const Message& message,
                          const PruneSpec& spec);

// Full sweep over an alpha grid x order set; points are recorded in
// ascending alpha order per order.
AttackReport attack_prune_sweep(const HostModel& model, const WatermarkKey& key,
                                const Message& message, std::vector<double> alphas,
                                const std::vector<PruneOrder>& orders, std::uint64_t seed);

// Embeds a second watermark (fine-tune-to-embed with the new key, same
// layer) and reports the ORIGINAL watermark's BER afterwards.
AttackReport attack_overwrite(const HostModel& model, const WatermarkKey& old_key,
                              const Message& old_message, const WatermarkKey& new_key,
                              const Message& new_message, const Dataset& train_data,
                              const Dataset& test_data, const TrainConfig& config);

// Post-hoc embedding without training: plain gradient descent on
// E = 0.5 * ||w - w0||^2 + lambda * E_R(w), applied to the target layer's W
// through the filter mean; every other layer stays frozen.
AttackReport embed_posthoc(const HostModel& model, const WatermarkKey& key,
                           const Message& message, double lambda, std::size_t steps, double lr,
                           const Dataset* test_data = nullptr);

// The pruned/posthoc-modified copies, for callers that need the model too.
struct AttackOutcome {
  AttackReport report;
  HostModel model;
};

AttackOutcome attack_prune_model(const HostModel& model, const WatermarkKey& key,
                                 const Message& message, const PruneSpec& spec);
AttackOutcome embed_posthoc_model(const HostModel& model, const WatermarkKey& key,
                                  const Message& message, double lambda, std::size_t steps,
                                  double lr, const Dataset* test_data = nullptr);

}  // namespace nnwm
