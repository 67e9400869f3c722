#include "nnwm/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "nnwm/errors.hpp"
#include "nnwm/rng.hpp"

namespace nnwm {

namespace {

std::size_t require_embed_layer(const HostModel& model) {
  if (!model.embed_layer) throw ConfigError("model has no embed layer designated");
  return *model.embed_layer;
}

double er_of(const HostModel& model, std::size_t layer, const WatermarkKey& key,
             const Message& message) {
  return embedding_loss(key, message, flatten_target(model, layer).w).value;
}

double ber_of(const HostModel& model, std::size_t layer, const WatermarkKey& key,
              const Message& message) {
  return ber(extract(key, model, layer).bits, message);
}

}  // namespace

PruneOrder prune_order_from_string(const std::string& s) {
  if (s == "ascending") return PruneOrder::ascending;
  if (s == "descending") return PruneOrder::descending;
  if (s == "random") return PruneOrder::random;
  throw ConfigError("unknown prune order '" + s + "'");
}

const char* prune_order_name(PruneOrder order) {
  switch (order) {
    case PruneOrder::ascending: return "ascending";
    case PruneOrder::descending: return "descending";
    case PruneOrder::random: return "random";
  }
  return "?";
}

AttackReport attack_finetune(const HostModel& model, const WatermarkKey& key,
                             const Message& message, const Dataset& train_data,
                             const Dataset& test_data, std::size_t epochs,
                             const TrainConfig& base) {
  const std::size_t layer = require_embed_layer(model);

  AttackReport report;
  report.kind = "finetune";
  report.er_before = er_of(model, layer, key, message);
  report.ber_before = ber_of(model, layer, key, message);

  if (epochs == 0) {
    report.er_after = report.er_before;
    report.ber_after = report.ber_before;
    report.test_error_after = evaluate_error(model, test_data);
    return report;
  }

  TrainConfig config = base;
  config.epochs = epochs;
  config.situation = Situation::none;  // second training embeds nothing
  TrainResult result = train(model, train_data, test_data, config);

  report.er_after = er_of(result.model, layer, key, message);
  report.ber_after = ber_of(result.model, layer, key, message);
  report.test_error_after = result.final_test_error;
  return report;
}

AttackOutcome attack_prune_model(const HostModel& model, const WatermarkKey& key,
                                 const Message& message, const PruneSpec& spec) {
  if (spec.alpha < 0.0 || spec.alpha > 1.0) {
    throw ConfigError("prune rate must lie in [0, 1], got " + std::to_string(spec.alpha));
  }
  const std::size_t layer = require_embed_layer(model);

  AttackOutcome outcome;
  outcome.report.kind = "prune";
  outcome.report.er_before = er_of(model, layer, key, message);
  outcome.report.ber_before = ber_of(model, layer, key, message);

  outcome.model = model;
  Tensor& weight = std::get<Conv2d>(outcome.model.layers[layer]).weight;
  const std::size_t p = weight.size();
  const auto cut = static_cast<std::size_t>(std::llround(spec.alpha * static_cast<double>(p)));

  std::vector<std::size_t> idx(p);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  switch (spec.order) {
    case PruneOrder::ascending:
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(weight[a]) < std::fabs(weight[b]);
      });
      break;
    case PruneOrder::descending:
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::fabs(weight[a]) > std::fabs(weight[b]);
      });
      break;
    case PruneOrder::random: {
      Rng rng(spec.seed);
      rng.shuffle(idx);
      break;
    }
  }
  for (std::size_t i = 0; i < cut; ++i) weight[idx[i]] = 0.0;
  ++outcome.model.version;

  outcome.report.er_after = er_of(outcome.model, layer, key, message);
  outcome.report.ber_after = ber_of(outcome.model, layer, key, message);
  return outcome;
}

AttackReport attack_prune(const HostModel& model, const WatermarkKey& key, const Message& message,
                          const PruneSpec& spec) {
  return attack_prune_model(model, key, message, spec).report;
}

AttackReport attack_prune_sweep(const HostModel& model, const WatermarkKey& key,
                                const Message& message, std::vector<double> alphas,
                                const std::vector<PruneOrder>& orders, std::uint64_t seed) {
  std::sort(alphas.begin(), alphas.end());
  AttackReport report;
  report.kind = "prune-sweep";
  const std::size_t layer = require_embed_layer(model);
  report.er_before = er_of(model, layer, key, message);
  report.ber_before = ber_of(model, layer, key, message);
  report.er_after = report.er_before;
  report.ber_after = report.ber_before;
  for (PruneOrder order : orders) {
    for (double alpha : alphas) {
      const AttackReport point = attack_prune(model, key, message, {alpha, order, seed});
      report.sweep.push_back({alpha, order, point.er_after, point.ber_after});
    }
  }
  return report;
}

AttackReport attack_overwrite(const HostModel& model, const WatermarkKey& old_key,
                              const Message& old_message, const WatermarkKey& new_key,
                              const Message& new_message, const Dataset& train_data,
                              const Dataset& test_data, const TrainConfig& config) {
  const std::size_t layer = require_embed_layer(model);

  AttackReport report;
  report.kind = "overwrite";
  if (old_key.seed == new_key.seed && old_key.kind == new_key.kind) {
    report.warnings.push_back("old and new keys share kind and seed; overwrite is a no-op test");
  }
  report.er_before = er_of(model, layer, old_key, old_message);
  report.ber_before = ber_of(model, layer, old_key, old_message);

  TrainConfig overwrite_config = config;
  overwrite_config.situation = Situation::finetune_to_embed;
  TrainResult result =
      train(model, train_data, test_data, overwrite_config, &new_key, &new_message);

  report.er_after = er_of(result.model, layer, old_key, old_message);
  report.ber_after = ber_of(result.model, layer, old_key, old_message);
  report.test_error_after = result.final_test_error;
  report.new_watermark = std::move(result.detection);
  return report;
}

AttackOutcome embed_posthoc_model(const HostModel& model, const WatermarkKey& key,
                                  const Message& message, double lambda, std::size_t steps,
                                  double lr, const Dataset* test_data) {
  const std::size_t layer = require_embed_layer(model);
  if (embed_dim(model, layer) != key.param_count) {
    throw ConfigError("key M does not match the embed layer");
  }

  AttackOutcome outcome;
  outcome.report.kind = "posthoc";
  outcome.report.er_before = er_of(model, layer, key, message);
  outcome.report.ber_before = ber_of(model, layer, key, message);

  outcome.model = model;
  Conv2d& conv = std::get<Conv2d>(outcome.model.layers[layer]);
  const std::vector<double> w0 = flatten_target(conv.weight).w;
  const std::size_t l = conv.count;
  const double inv_l = 1.0 / static_cast<double>(l);

  for (std::size_t step = 0; step < steps; ++step) {
    const FlattenedTarget target = flatten_target(conv.weight);
    const EmbeddingLoss reg = embedding_loss(key, message, target.w);
    double* wd = conv.weight.data();
    for (std::size_t m = 0; m < target.w.size(); ++m) {
      // d/dW of 0.5*||w - w0||^2 + lambda*E_R through the filter mean.
      const double g = inv_l * ((target.w[m] - w0[m]) + lambda * reg.grad[m]);
      for (std::size_t f = 0; f < l; ++f) wd[m * l + f] -= lr * g;
    }
    if (!conv.weight.all_finite()) {
      throw NumericError("posthoc embedding diverged at step " + std::to_string(step));
    }
  }
  ++outcome.model.version;

  const FlattenedTarget final_target = flatten_target(conv.weight);
  double dist = 0.0;
  for (std::size_t m = 0; m < w0.size(); ++m) {
    const double d = final_target.w[m] - w0[m];
    dist += d * d;
  }
  outcome.report.half_sq_dist = 0.5 * dist;
  outcome.report.er_after = embedding_loss(key, message, final_target.w).value;
  outcome.report.ber_after = ber_of(outcome.model, layer, key, message);
  if (test_data) outcome.report.test_error_after = evaluate_error(outcome.model, *test_data);
  return outcome;
}

AttackReport embed_posthoc(const HostModel& model, const WatermarkKey& key,
                           const Message& message, double lambda, std::size_t steps, double lr,
                           const Dataset* test_data) {
  return embed_posthoc_model(model, key, message, lambda, steps, lr, test_data).report;
}

}  // namespace nnwm
