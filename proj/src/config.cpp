#include "nnwm/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "nnwm/errors.hpp"

namespace nnwm {

namespace {

// Fail-closed object reader: fields must be consumed by name; finish()
// rejects anything left over, reporting the JSON path.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& name) {
    return j_.contains(name);
  }

  template <typename T>
  T require(const std::string& name) {
    if (!j_.contains(name)) throw ConfigError(path_ + "." + name + ": missing required field");
    return get<T>(name);
  }

  template <typename T>
  T optional(const std::string& name, T fallback) {
    if (!j_.contains(name)) return fallback;
    return get<T>(name);
  }

  const nlohmann::json& raw(const std::string& name) {
    seen_.insert(name);
    return j_.at(name);
  }

  void finish() {
    for (const auto& [name, value] : j_.items()) {
      if (!seen_.count(name)) {
        throw ConfigError(path_ + "." + name + ": unknown field");
      }
    }
  }

  const std::string& path() const { return path_; }

 private:
  template <typename T>
  T get(const std::string& name) {
    seen_.insert(name);
    try {
      return j_.at(name).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(path_ + "." + name + ": wrong type");
    }
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

nlohmann::json parse_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError(path.string() + ": invalid JSON");
  return j;
}

DatasetSpec parse_dataset_spec(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  DatasetSpec spec;
  spec.kind = r.optional<std::string>("kind", "synthetic");
  if (spec.kind == "synthetic") {
    spec.classes = r.optional<std::size_t>("classes", spec.classes);
    spec.dims = r.optional<std::vector<std::size_t>>("dims", spec.dims);
    spec.n_train = r.optional<std::size_t>("n_train", spec.n_train);
    spec.n_test = r.optional<std::size_t>("n_test", spec.n_test);
    spec.separation = r.optional<double>("separation", spec.separation);
  } else if (spec.kind == "cifar10") {
    spec.dir = r.require<std::string>("dir");
    spec.train_per_class = r.optional<std::size_t>("train_per_class", spec.train_per_class);
    spec.test_per_class = r.optional<std::size_t>("test_per_class", spec.test_per_class);
  } else {
    throw ConfigError(path + ".kind: unknown dataset kind '" + spec.kind + "'");
  }
  r.finish();
  return spec;
}

TrainConfig parse_train_config(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  TrainConfig config;
  config.epochs = r.optional<std::size_t>("epochs", config.epochs);
  config.batch_size = r.optional<std::size_t>("batch_size", config.batch_size);
  config.learning_rate = r.optional<double>("learning_rate", config.learning_rate);
  config.momentum = r.optional<double>("momentum", config.momentum);
  config.weight_decay = r.optional<double>("weight_decay", config.weight_decay);
  config.lambda = r.optional<double>("lambda", config.lambda);
  config.situation = situation_from_string(r.optional<std::string>("situation", "none"));
  if (r.has("schedule")) {
    config.default_schedule = false;
    const nlohmann::json& sched = r.raw("schedule");
    if (!sched.is_array()) throw ConfigError(path + ".schedule: expected [[epoch, mult], ...]");
    for (const auto& item : sched) {
      if (!item.is_array() || item.size() != 2) {
        throw ConfigError(path + ".schedule: expected [epoch, mult] pairs");
      }
      config.schedule.drops.emplace_back(item[0].get<std::size_t>(), item[1].get<double>());
    }
  }
  r.finish();
  config.validate();
  return config;
}

KeySpec parse_key_spec(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  KeySpec spec;
  spec.kind = key_kind_from_string(r.optional<std::string>("kind", "random"));
  spec.seed = r.require<std::uint64_t>("seed");
  spec.bit_count = r.require<std::size_t>("T");
  r.finish();
  return spec;
}

MessageSpec parse_message_spec(const nlohmann::json& j, const std::string& path) {
  ObjectReader r(j, path);
  MessageSpec spec;
  spec.kind = r.optional<std::string>("kind", "ones");
  if (spec.kind == "hex") {
    spec.hex = r.require<std::string>("hex");
  } else if (spec.kind == "random") {
    spec.seed = r.require<std::uint64_t>("seed");
  } else if (spec.kind != "ones") {
    throw ConfigError(path + ".kind: unknown message kind '" + spec.kind + "'");
  }
  r.finish();
  return spec;
}

}  // namespace

std::pair<Dataset, Dataset> DatasetSpec::load(std::uint64_t seed) const {
  if (kind == "synthetic") {
    return make_synthetic_pair(classes, dims, n_train, n_test, seed, separation);
  }
  std::filesystem::path root(dir);
  if (root.is_relative()) {
    if (const char* env = std::getenv("NNWM_DATA_DIR")) root = std::filesystem::path(env) / root;
  }
  return load_cifar10(root, train_per_class, test_per_class, seed);
}

Message MessageSpec::realize(std::size_t bit_count) const {
  if (kind == "ones") return Message::ones(bit_count);
  if (kind == "random") return Message::random(bit_count, seed);
  return Message::from_hex(hex, bit_count);
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  ObjectReader r(j, "config");
  ExperimentConfig config;
  config.host = r.optional<std::string>("host", config.host);
  host_preset_from_string(config.host);
  if (r.has("input_shape")) {
    config.input_shape = r.require<std::vector<std::size_t>>("input_shape");
  }
  if (r.has("embed_layer")) config.embed_layer = r.require<std::size_t>("embed_layer");
  if (r.has("dataset")) config.dataset = parse_dataset_spec(r.raw("dataset"), "config.dataset");
  if (r.has("train")) config.train = parse_train_config(r.raw("train"), "config.train");
  if (r.has("key")) config.key = parse_key_spec(r.raw("key"), "config.key");
  if (r.has("message")) config.message = parse_message_spec(r.raw("message"), "config.message");
  if (r.has("init_from")) config.init_from = r.require<std::string>("init_from");
  config.output_dir = r.optional<std::string>("output_dir", config.output_dir);
  config.seed = r.optional<std::uint64_t>("seed", config.seed);
  r.finish();

  // Cross-field consistency before any compute.
  const bool embeds = config.train.situation != Situation::none;
  if (embeds && !config.key) {
    throw ConfigError("config.key: required when train.situation embeds");
  }
  if (!embeds && config.key) {
    throw ConfigError("config.key: situation 'none' takes no key");
  }
  if (config.train.situation == Situation::finetune_to_embed ||
      config.train.situation == Situation::distill_to_embed) {
    if (!config.init_from) {
      throw ConfigError("config.init_from: required for fine-tune/distill situations");
    }
  }
  if (config.message.kind == "hex" && config.key) {
    Message probe = config.message.realize(config.key->bit_count);  // length check
    (void)probe;
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(parse_file(path));
}

AttackConfig parse_attack_config(const nlohmann::json& j) {
  ObjectReader r(j, "attack");
  AttackConfig config;
  config.kind = r.require<std::string>("kind");
  config.seed = r.optional<std::uint64_t>("seed", config.seed);
  if (config.kind == "finetune" || config.kind == "overwrite") {
    config.epochs = r.optional<std::size_t>("epochs", config.epochs);
    if (r.has("dataset")) config.dataset = parse_dataset_spec(r.raw("dataset"), "attack.dataset");
    if (r.has("train")) config.train = parse_train_config(r.raw("train"), "attack.train");
    if (config.kind == "overwrite") {
      config.new_key = parse_key_spec(r.raw("new_key"), "attack.new_key");
      if (r.has("new_message")) {
        config.new_message = parse_message_spec(r.raw("new_message"), "attack.new_message");
      }
    }
  } else if (config.kind == "prune") {
    config.alphas = r.require<std::vector<double>>("alphas");
    if (r.has("orders")) {
      config.orders.clear();
      for (const std::string& name : r.require<std::vector<std::string>>("orders")) {
        config.orders.push_back(prune_order_from_string(name));
      }
    }
    config.prune_seed = r.optional<std::uint64_t>("prune_seed", config.prune_seed);
  } else if (config.kind == "posthoc") {
    config.lambdas = r.optional<std::vector<double>>("lambdas", config.lambdas);
    config.steps = r.optional<std::size_t>("steps", config.steps);
    config.lr = r.optional<double>("lr", config.lr);
    if (r.has("dataset")) config.dataset = parse_dataset_spec(r.raw("dataset"), "attack.dataset");
  } else {
    throw ConfigError("attack.kind: unknown attack '" + config.kind + "'");
  }
  r.finish();
  return config;
}

AttackConfig load_attack_config(const std::filesystem::path& path) {
  return parse_attack_config(parse_file(path));
}

std::string config_hash(const nlohmann::json& j) {
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

nlohmann::json key_to_json(const WatermarkKey& key) {
  // X is never serialized; it is regenerated from (kind, seed, T, M).
  nlohmann::json j;
  j["kind"] = key_kind_name(key.kind);
  j["seed"] = key.seed;
  j["T"] = key.bit_count;
  j["M"] = key.param_count;
  j["version"] = 1;
  return j;
}

WatermarkKey key_from_json(const nlohmann::json& j) {
  ObjectReader r(j, "key");
  const KeyKind kind = key_kind_from_string(r.require<std::string>("kind"));
  const auto seed = r.require<std::uint64_t>("seed");
  const auto t = r.require<std::size_t>("T");
  const auto m = r.require<std::size_t>("M");
  const auto version = r.require<std::uint32_t>("version");
  if (version != 1) throw ConfigError("key.version: unsupported version");
  r.finish();
  return make_key(kind, seed, t, m);
}

WatermarkKey load_key_file(const std::filesystem::path& path) {
  return key_from_json(parse_file(path));
}

void save_key_file(const std::filesystem::path& path, const WatermarkKey& key) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << key_to_json(key).dump(2) << "\n";
}

nlohmann::json message_to_json(const Message& message) {
  nlohmann::json j;
  j["hex"] = message.to_hex();
  j["bits"] = message.size();
  return j;
}

Message message_from_json(const nlohmann::json& j) {
  ObjectReader r(j, "message");
  const auto hex = r.require<std::string>("hex");
  const auto bits = r.require<std::size_t>("bits");
  r.finish();
  return Message::from_hex(hex, bits);
}

Message load_message_file(const std::filesystem::path& path) {
  return message_from_json(parse_file(path));
}

void save_message_file(const std::filesystem::path& path, const Message& message) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << message_to_json(message).dump(2) << "\n";
}

}  // namespace nnwm
