#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "nnwm/attacks.hpp"
#include "nnwm/data.hpp"
#include "nnwm/hosts.hpp"
#include "nnwm/train.hpp"
#include "nnwm/watermark.hpp"

namespace nnwm {

// Validation is fail-closed: unknown fields are rejected with a path-aware
// message so typos never silently alter an experiment.

struct DatasetSpec {
  std::string kind = "synthetic";  // synthetic | cifar10
  // synthetic
  std::size_t classes = 10;
  std::vector<std::size_t> dims = {8, 8, 3};
  std::size_t n_train = 512;
  std::size_t n_test = 256;
  double separation = 5.0;
  // cifar10; a relative dir resolves against $NNWM_DATA_DIR when set
  std::string dir;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 100;

  std::pair<Dataset, Dataset> load(std::uint64_t seed) const;
};

struct KeySpec {
  KeyKind kind = KeyKind::random;
  std::uint64_t seed = 0;
  std::size_t bit_count = 64;
};

struct MessageSpec {
  std::string kind = "ones";  // ones | random | hex
  std::string hex;
  std::uint64_t seed = 0;

  Message realize(std::size_t bit_count) const;
};

struct ExperimentConfig {
  std::string host = "small-cnn";
  std::vector<std::size_t> input_shape;  // defaults to the dataset's dims
  std::optional<std::size_t> embed_layer;
  DatasetSpec dataset;
  TrainConfig train;
  std::optional<KeySpec> key;
  MessageSpec message;
  std::optional<std::string> init_from;  // checkpoint for fine-tune/distill
  std::string output_dir = "out";
  std::uint64_t seed = 1;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

struct AttackConfig {
  std::string kind;  // finetune | prune | overwrite | posthoc
  // finetune / overwrite
  std::size_t epochs = 12;
  DatasetSpec dataset;
  TrainConfig train;
  std::optional<KeySpec> new_key;
  MessageSpec new_message;
  // prune
  std::vector<double> alphas;
  std::vector<PruneOrder> orders = {PruneOrder::ascending};
  std::uint64_t prune_seed = 0;
  // posthoc
  std::vector<double> lambdas = {0.0, 1.0, 10.0, 100.0};
  std::size_t steps = 1000;
  double lr = 0.01;
  std::uint64_t seed = 1;
};

AttackConfig parse_attack_config(const nlohmann::json& j);
AttackConfig load_attack_config(const std::filesystem::path& path);

// FNV-1a 64-bit over the canonical (key-sorted) dump; recorded in every
// output for provenance.
std::string config_hash(const nlohmann::json& j);

// Key and message file formats.
nlohmann::json key_to_json(const WatermarkKey& key);
WatermarkKey key_from_json(const nlohmann::json& j);
WatermarkKey load_key_file(const std::filesystem::path& path);
void save_key_file(const std::filesystem::path& path, const WatermarkKey& key);

nlohmann::json message_to_json(const Message& message);
Message message_from_json(const nlohmann::json& j);
Message load_message_file(const std::filesystem::path& path);
void save_message_file(const std::filesystem::path& path, const Message& message);

}  // namespace nnwm
