#include "nnwm/train.hpp"

#include <algorithm>
#include <numeric>

#include "nnwm/errors.hpp"
#include "nnwm/rng.hpp"

namespace nnwm {

Situation situation_from_string(const std::string& s) {
  if (s == "none") return Situation::none;
  if (s == "train-to-embed") return Situation::train_to_embed;
  if (s == "fine-tune-to-embed") return Situation::finetune_to_embed;
  if (s == "distill-to-embed") return Situation::distill_to_embed;
  throw ConfigError("unknown situation '" + s + "'");
}

const char* situation_name(Situation situation) {
  switch (situation) {
    case Situation::none: return "none";
    case Situation::train_to_embed: return "train-to-embed";
    case Situation::finetune_to_embed: return "fine-tune-to-embed";
    case Situation::distill_to_embed: return "distill-to-embed";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (lambda < 0.0) throw ConfigError("lambda must be nonnegative");
}

double evaluate_error(const HostModel& model, const Dataset& data, std::size_t batch_size) {
  const std::size_t n = data.size();
  if (n == 0) throw ConfigError("cannot evaluate on an empty dataset");
  if (data.labels.size() != n) throw ConfigError("dataset lacks labels for evaluation");

  std::size_t wrong = 0;
  std::vector<std::size_t> rows;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t stop = std::min(n, start + batch_size);
    rows.resize(stop - start);
    std::iota(rows.begin(), rows.end(), start);
    auto [x, t] = gather_batch(data, rows);
    const ForwardPass pass = forward(model, x);
    const Tensor& probs = pass.probs();
    const std::size_t c = probs.dim(1);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (probs[i * c + k] > probs[i * c + best]) best = k;
      }
      if (static_cast<int>(best) != data.labels[rows[i]]) ++wrong;
    }
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

TrainResult train(HostModel model, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& config, const WatermarkKey* key, const Message* message,
                  const HostModel* teacher) {
  config.validate();
  validate_model(model);

  const bool embeds = config.situation != Situation::none;
  if (embeds && (!key || !message)) {
    throw ConfigError(std::string(situation_name(config.situation)) +
                      " requires a key and a message");
  }
  if (!embeds && key) {
    throw ConfigError("situation 'none' takes no key");
  }
  if (config.situation == Situation::distill_to_embed && !teacher) {
    throw ConfigError("distill-to-embed requires a teacher model");
  }

  std::optional<ExtraTerm> reg;
  std::size_t embed_layer = 0;
  if (embeds) {
    if (!model.embed_layer) throw ConfigError("model has no embed layer designated");
    embed_layer = *model.embed_layer;
    // lambda = 0 keeps the trajectory bit-identical to an unregularized run;
    // the regularizer is skipped entirely, only reporting remains.
    if (config.lambda > 0.0) {
      reg = attach_regularizer(model, embed_layer, *key, *message, config.lambda);
    } else {
      (void)embed_dim(model, embed_layer);  // still validate the layer choice
    }
  }

  OptimizerState opt;
  opt.learning_rate = config.learning_rate;
  opt.momentum = config.momentum;
  opt.weight_decay = config.weight_decay;
  opt.schedule =
      config.default_schedule ? LrSchedule::single_drop(config.epochs) : config.schedule;
  opt.init(model);

  const std::size_t n = train_data.size();
  if (n == 0) throw ConfigError("empty training set");

  Rng shuffle_rng(config.shuffle_seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr_now = opt.schedule.at(epoch, opt.learning_rate);
    shuffle_rng.shuffle(order);

    double e0_sum = 0.0;
    std::size_t batches = 0;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t stop = std::min(n, start + config.batch_size);
      rows.assign(order.begin() + start, order.begin() + stop);
      auto [x, t] = gather_batch(train_data, rows);
      if (config.situation == Situation::distill_to_embed) {
        // Soft targets from the teacher; ground-truth labels are never read.
        t = forward(*teacher, x).probs();
      }
      ForwardPass pass = forward(model, x, &t);
      std::vector<LayerGrads> grads = backward(model, pass, t);
      if (reg) reg->accumulate_grad(model, grads);
      sgd_step(model, grads, opt, lr_now);
      e0_sum += pass.loss;
      ++batches;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.e0 = e0_sum / static_cast<double>(batches);
    if (embeds) {
      stats.embedding_loss =
          embedding_loss(*key, *message, flatten_target(model, embed_layer).w).value;
    }
    stats.test_error = evaluate_error(model, test_data);
    result.history.push_back(stats);
  }

  result.final_test_error = result.history.back().test_error;
  if (embeds) {
    DetectionStats det = extract(*key, model, embed_layer);
    det.bit_error = ber(det.bits, *message);
    result.detection = std::move(det);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace nnwm
