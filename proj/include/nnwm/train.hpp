#pragma once

#include <optional>
#include <vector>

#include "nnwm/data.hpp"
#include "nnwm/model.hpp"
#include "nnwm/optimizer.hpp"
#include "nnwm/watermark.hpp"

namespace nnwm {

// The three embedding situations plus plain training: train-to-embed starts
// from a fresh init, fine-tune-to-embed from a pre-trained checkpoint, and
// distill-to-embed trains against a teacher's predictions with no access to
// ground-truth labels.
enum class Situation { none, train_to_embed, finetune_to_embed, distill_to_embed };

Situation situation_from_string(const std::string& s);
const char* situation_name(Situation situation);

struct TrainConfig {
  std::size_t epochs = 12;
  std::size_t batch_size = 32;
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5.0e-4;
  LrSchedule schedule;          // empty = use single_drop(epochs)
  bool default_schedule = true;
  double lambda = 0.01;
  Situation situation = Situation::none;
  std::uint64_t shuffle_seed = 1;

  void validate() const;
};

struct EpochStats {
  std::size_t epoch = 0;
  double e0 = 0.0;                      // mean training loss over the epoch's batches
  std::optional<double> embedding_loss; // E_R on the current parameters
  double test_error = 0.0;
};

struct TrainResult {
  HostModel model;
  std::vector<EpochStats> history;
  std::optional<DetectionStats> detection;  // final extraction vs the message
  double final_test_error = 0.0;
};

// Fraction of test samples whose argmax class disagrees with the label.
double evaluate_error(const HostModel& model, const Dataset& data, std::size_t batch_size = 256);

// Runs the training loop for the configured situation. A key and message are
// required whenever the situation embeds; a teacher model is required for
// distill-to-embed (its predictions replace the labels, which are never
// read). The model is trained in place of the returned copy.
TrainResult train(HostModel model, const Dataset& train_data, const Dataset& test_data,
                  const TrainConfig& config, const WatermarkKey* key = nullptr,
                  const Message* message = nullptr, const HostModel* teacher = nullptr);

}  // namespace nnwm
