#include "nnwm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "nnwm/errors.hpp"

namespace nnwm {

namespace {

constexpr char kMagic[8] = {'N', 'N', 'W', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes, 8);
}

void put_double(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint32_t take_u32(std::istream& in, const std::string& what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw DataError("checkpoint: short read at " + what);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t take_u64(std::istream& in, const std::string& what) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw DataError("checkpoint: short read at " + what);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

double take_double(std::istream& in, const std::string& what) {
  return std::bit_cast<double>(take_u64(in, what));
}

std::vector<const Tensor*> param_tensors(const HostModel& model) {
  std::vector<const Tensor*> out;
  for (const Layer& layer : model.layers) {
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      out.push_back(&conv->weight);
      out.push_back(&conv->bias);
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      out.push_back(&dense->weight);
      out.push_back(&dense->bias);
    }
  }
  return out;
}

}  // namespace

nlohmann::json architecture_json(const HostModel& model) {
  nlohmann::json arch;
  arch["input_shape"] = model.input_shape;
  arch["classes"] = model.num_classes;
  if (model.embed_layer) {
    arch["embed_layer"] = *model.embed_layer;
  } else {
    arch["embed_layer"] = nullptr;
  }
  arch["init_seed"] = model.init_seed;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : model.layers) {
    nlohmann::json spec;
    spec["kind"] = layer_kind_name(layer);
    if (const auto* conv = std::get_if<Conv2d>(&layer)) {
      spec["S"] = conv->filter;
      spec["D"] = conv->depth;
      spec["L"] = conv->count;
    } else if (const auto* dense = std::get_if<Dense>(&layer)) {
      spec["in"] = dense->in_dim;
      spec["out"] = dense->out_dim;
    } else if (const auto* pool = std::get_if<AvgPool>(&layer)) {
      spec["window"] = pool->window;
    }
    layers.push_back(spec);
  }
  arch["layers"] = layers;
  return arch;
}

HostModel model_from_architecture(const nlohmann::json& arch) {
  HostModel model;
  try {
    model.input_shape = arch.at("input_shape").get<std::vector<std::size_t>>();
    model.num_classes = arch.at("classes").get<std::size_t>();
    if (!arch.at("embed_layer").is_null()) {
      model.embed_layer = arch.at("embed_layer").get<std::size_t>();
    }
    model.init_seed = arch.at("init_seed").get<std::uint64_t>();
    for (const nlohmann::json& spec : arch.at("layers")) {
      const std::string kind = spec.at("kind").get<std::string>();
      if (kind == "conv2d") {
        Conv2d conv;
        conv.filter = spec.at("S").get<std::size_t>();
        conv.depth = spec.at("D").get<std::size_t>();
        conv.count = spec.at("L").get<std::size_t>();
        conv.weight = Tensor({conv.filter, conv.filter, conv.depth, conv.count});
        conv.bias = Tensor({conv.count});
        model.layers.push_back(std::move(conv));
      } else if (kind == "dense") {
        Dense dense;
        dense.in_dim = spec.at("in").get<std::size_t>();
        dense.out_dim = spec.at("out").get<std::size_t>();
        dense.weight = Tensor({dense.in_dim, dense.out_dim});
        dense.bias = Tensor({dense.out_dim});
        model.layers.push_back(std::move(dense));
      } else if (kind == "relu") {
        model.layers.push_back(Relu{});
      } else if (kind == "avgpool") {
        model.layers.push_back(AvgPool{spec.at("window").get<std::size_t>()});
      } else if (kind == "softmax-output") {
        model.layers.push_back(SoftmaxOutput{});
      } else {
        throw DataError("checkpoint: unknown layer kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("checkpoint: malformed architecture: ") + e.what());
  }
  validate_model(model);
  return model;
}

void save_checkpoint(const std::filesystem::path& path, const HostModel& model,
                     const nlohmann::json& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());

  nlohmann::json blob;
  blob["architecture"] = architecture_json(model);
  blob["metadata"] = metadata;
  const std::string text = blob.dump();

  out.write(kMagic, sizeof(kMagic));
  put_u32(out, kVersion);
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor* tensor : param_tensors(model)) {
    for (std::size_t i = 0; i < tensor->size(); ++i) put_double(out, (*tensor)[i]);
  }
  if (!out) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());

  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path.string() + ": not a checkpoint (bad magic)");
  }
  const std::uint32_t version = take_u32(in, "version");
  if (version != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t json_len = take_u64(in, "json length");
  std::string text(json_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(json_len))) {
    throw DataError(path.string() + ": truncated architecture blob");
  }

  nlohmann::json blob = nlohmann::json::parse(text, nullptr, false);
  if (blob.is_discarded()) throw DataError(path.string() + ": unparsable architecture blob");

  Checkpoint ckpt;
  ckpt.model = model_from_architecture(blob.at("architecture"));
  ckpt.metadata = blob.value("metadata", nlohmann::json::object());

  for (ParamRef ref : parameters(ckpt.model)) {
    for (std::size_t i = 0; i < ref.tensor->size(); ++i) {
      (*ref.tensor)[i] = take_double(in, "parameter data");
    }
  }
  char extra;
  if (in.read(&extra, 1)) throw DataError(path.string() + ": trailing bytes after parameters");
  return ckpt;
}

}  // namespace nnwm
