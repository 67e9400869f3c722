#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nnwm/attacks.hpp"
#include "nnwm/checkpoint.hpp"
#include "nnwm/config.hpp"
#include "nnwm/data.hpp"
#include "nnwm/errors.hpp"
#include "nnwm/gradcheck.hpp"
#include "nnwm/hosts.hpp"
#include "nnwm/rng.hpp"
#include "nnwm/train.hpp"
#include "nnwm/watermark.hpp"

namespace py = pybind11;
using namespace nnwm;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::size_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[i] = static_cast<std::size_t>(a.shape(i));
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> a(shape);
  std::copy(t.data(), t.data() + t.size(), a.mutable_data());
  return a;
}

py::array_t<double> array_1d(const std::vector<double>& v) {
  py::array_t<double> a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

py::array_t<std::uint8_t> bits_array(const Message& m) {
  py::array_t<std::uint8_t> a(std::vector<py::ssize_t>{static_cast<py::ssize_t>(m.bits.size())});
  std::copy(m.bits.begin(), m.bits.end(), a.mutable_data());
  return a;
}

Message message_from_bits(const py::array_t<std::uint8_t>& bits) {
  Message m;
  m.bits.assign(bits.data(), bits.data() + bits.size());
  for (auto& b : m.bits) b = b ? 1 : 0;
  return m;
}

TrainConfig train_config_from_kwargs(const py::dict& kw) {
  TrainConfig c;
  if (kw.contains("epochs")) c.epochs = kw["epochs"].cast<std::size_t>();
  if (kw.contains("batch_size")) c.batch_size = kw["batch_size"].cast<std::size_t>();
  if (kw.contains("learning_rate")) c.learning_rate = kw["learning_rate"].cast<double>();
  if (kw.contains("momentum")) c.momentum = kw["momentum"].cast<double>();
  if (kw.contains("weight_decay")) c.weight_decay = kw["weight_decay"].cast<double>();
  if (kw.contains("lambda_")) c.lambda = kw["lambda_"].cast<double>();
  if (kw.contains("situation")) c.situation = situation_from_string(kw["situation"].cast<std::string>());
  if (kw.contains("shuffle_seed")) c.shuffle_seed = kw["shuffle_seed"].cast<std::uint64_t>();
  if (kw.contains("schedule")) {
    c.default_schedule = false;
    for (const auto& item : kw["schedule"].cast<py::list>()) {
      auto pair = item.cast<py::tuple>();
      c.schedule.drops.emplace_back(pair[0].cast<std::size_t>(), pair[1].cast<double>());
    }
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_nnwm, m) {
  m.doc() = "Watermark embedding and extraction for small conv nets";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_IOError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<WatermarkKey>(m, "WatermarkKey")
      .def_property_readonly("kind", [](const WatermarkKey& k) { return key_kind_name(k.kind); })
      .def_readonly("seed", &WatermarkKey::seed)
      .def_property_readonly("T", [](const WatermarkKey& k) { return k.bit_count; })
      .def_property_readonly("M", [](const WatermarkKey& k) { return k.param_count; })
      .def_property_readonly("matrix", [](const WatermarkKey& k) { return array_from_tensor(k.matrix); });

  py::class_<Message>(m, "Message")
      .def_static("ones", &Message::ones, py::arg("bit_count"))
      .def_static("random", &Message::random, py::arg("bit_count"), py::arg("seed"))
      .def_static("from_hex", &Message::from_hex, py::arg("hex"), py::arg("bit_count"))
      .def_static("from_bits", &message_from_bits, py::arg("bits"))
      .def_property_readonly("bits", &bits_array)
      .def("to_hex", &Message::to_hex)
      .def("__len__", &Message::size);

  py::class_<DetectionStats>(m, "DetectionStats")
      .def_property_readonly("y", [](const DetectionStats& s) { return s.y; })
      .def_property_readonly("bits", [](const DetectionStats& s) { return bits_array(s.bits); })
      .def_property_readonly("ber", [](const DetectionStats& s) { return s.bit_error; })
      .def_property_readonly("histogram",
                             [](const DetectionStats& s) {
                               return std::vector<std::uint32_t>(s.histogram.begin(),
                                                                 s.histogram.end());
                             })
      .def_property_readonly("mean_bit", &DetectionStats::mean_bit);

  py::class_<HostModel>(m, "HostModel")
      .def_property_readonly("param_count", &HostModel::param_count)
      .def_property_readonly("embed_layer",
                             [](const HostModel& h) { return h.embed_layer; })
      .def_property_readonly("input_shape", [](const HostModel& h) { return h.input_shape; })
      .def_property_readonly("num_classes", [](const HostModel& h) { return h.num_classes; })
      .def("set_embed_layer",
           [](HostModel& h, std::size_t layer) {
             h.embed_layer = layer;
             validate_model(h);
           })
      .def("conv_weight",
           [](const HostModel& h, std::size_t layer) {
             const auto* conv = std::get_if<Conv2d>(&h.layers.at(layer));
             if (!conv) throw ConfigError("layer is not a conv2d layer");
             return array_from_tensor(conv->weight);
           })
      .def("embeddable_layers", &embeddable_layers)
      .def("embed_dim", [](const HostModel& h, std::size_t layer) { return embed_dim(h, layer); })
      .def("__copy__", [](const HostModel& h) { return h; })
      .def("copy", [](const HostModel& h) { return h; });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("inputs", [](const Dataset& d) { return array_from_tensor(d.inputs); })
      .def_property_readonly("labels", [](const Dataset& d) { return d.labels; })
      .def_property_readonly("targets", [](const Dataset& d) { return array_from_tensor(d.targets); })
      .def_property_readonly("num_classes", [](const Dataset& d) { return d.num_classes; })
      .def("__len__", &Dataset::size);

  py::class_<EpochStats>(m, "EpochStats")
      .def_readonly("epoch", &EpochStats::epoch)
      .def_readonly("e0", &EpochStats::e0)
      .def_readonly("embedding_loss", &EpochStats::embedding_loss)
      .def_readonly("test_error", &EpochStats::test_error);

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("model", &TrainResult::model)
      .def_readonly("history", &TrainResult::history)
      .def_property_readonly("detection",
                             [](const TrainResult& r) { return r.detection; })
      .def_readonly("final_test_error", &TrainResult::final_test_error);

  py::class_<SweepPoint>(m, "SweepPoint")
      .def_readonly("alpha", &SweepPoint::alpha)
      .def_property_readonly("order", [](const SweepPoint& p) { return prune_order_name(p.order); })
      .def_readonly("embedding_loss", &SweepPoint::embedding_loss)
      .def_readonly("bit_error", &SweepPoint::bit_error);

  py::class_<AttackReport>(m, "AttackReport")
      .def_readonly("kind", &AttackReport::kind)
      .def_readonly("er_before", &AttackReport::er_before)
      .def_readonly("er_after", &AttackReport::er_after)
      .def_readonly("ber_before", &AttackReport::ber_before)
      .def_readonly("ber_after", &AttackReport::ber_after)
      .def_readonly("test_error_after", &AttackReport::test_error_after)
      .def_readonly("half_sq_dist", &AttackReport::half_sq_dist)
      .def_readonly("sweep", &AttackReport::sweep)
      .def_readonly("warnings", &AttackReport::warnings);

  m.def(
      "make_key",
      [](const std::string& kind, std::uint64_t seed, std::size_t t, std::size_t m_) {
        return make_key(key_kind_from_string(kind), seed, t, m_);
      },
      py::arg("kind"), py::arg("seed"), py::arg("T"), py::arg("M"));

  m.def(
      "flatten_target",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
        return array_1d(flatten_target(tensor_from_array(w)).w);
      },
      py::arg("conv_weight"));

  m.def(
      "embedding_loss",
      [](const WatermarkKey& key, const Message& message,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
        const EmbeddingLoss loss = embedding_loss(
            key, message, std::span<const double>(w.data(), static_cast<std::size_t>(w.size())));
        return py::make_tuple(loss.value, array_1d(loss.grad));
      },
      py::arg("key"), py::arg("message"), py::arg("w"));

  m.def(
      "extract",
      [](const WatermarkKey& key,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& w) {
        return extract(key, tensor_from_array(w));
      },
      py::arg("key"), py::arg("conv_weight"));

  m.def(
      "extract_from_model",
      [](const WatermarkKey& key, const HostModel& model, std::size_t layer) {
        return extract(key, model, layer);
      },
      py::arg("key"), py::arg("model"), py::arg("layer"));

  m.def("ber", &ber, py::arg("extracted"), py::arg("reference"));

  m.def(
      "build_host",
      [](const std::string& preset, std::uint64_t seed, const std::vector<std::size_t>& input_shape,
         std::size_t classes) {
        return build_host(host_preset_from_string(preset), seed, input_shape, classes);
      },
      py::arg("preset"), py::arg("seed"), py::arg("input_shape") = std::vector<std::size_t>{8, 8, 3},
      py::arg("classes") = 10);

  m.def("make_synthetic", &make_synthetic, py::arg("classes"), py::arg("dims"), py::arg("n"),
        py::arg("seed"), py::arg("separation") = 5.0, py::arg("split") = "train");
  m.def("make_synthetic_pair", &make_synthetic_pair, py::arg("classes"), py::arg("dims"),
        py::arg("n_train"), py::arg("n_test"), py::arg("seed"), py::arg("separation") = 5.0);
  m.def("load_cifar10", &load_cifar10, py::arg("dir"), py::arg("train_per_class"),
        py::arg("test_per_class"), py::arg("seed"));

  m.def("evaluate_error", &evaluate_error, py::arg("model"), py::arg("data"),
        py::arg("batch_size") = 256);

  m.def(
      "train",
      [](const HostModel& model, const Dataset& train_data, const Dataset& test_data,
         const py::kwargs& kwargs) {
        py::dict kw = kwargs;
        const WatermarkKey* key = nullptr;
        const Message* message = nullptr;
        const HostModel* teacher = nullptr;
        WatermarkKey key_storage;
        Message message_storage;
        HostModel teacher_storage;
        if (kw.contains("key")) {
          key_storage = kw["key"].cast<WatermarkKey>();
          key = &key_storage;
          kw.attr("pop")("key");
        }
        if (kw.contains("message")) {
          message_storage = kw["message"].cast<Message>();
          message = &message_storage;
          kw.attr("pop")("message");
        }
        if (kw.contains("teacher")) {
          teacher_storage = kw["teacher"].cast<HostModel>();
          teacher = &teacher_storage;
          kw.attr("pop")("teacher");
        }
        return train(model, train_data, test_data, train_config_from_kwargs(kw), key, message,
                     teacher);
      },
      py::arg("model"), py::arg("train_data"), py::arg("test_data"));

  m.def(
      "attack_prune",
      [](const HostModel& model, const WatermarkKey& key, const Message& message, double alpha,
         const std::string& order, std::uint64_t seed) {
        return attack_prune(model, key, message, {alpha, prune_order_from_string(order), seed});
      },
      py::arg("model"), py::arg("key"), py::arg("message"), py::arg("alpha"),
      py::arg("order") = "ascending", py::arg("seed") = 0);

  m.def(
      "attack_prune_sweep",
      [](const HostModel& model, const WatermarkKey& key, const Message& message,
         const std::vector<double>& alphas, const std::vector<std::string>& orders,
         std::uint64_t seed) {
        std::vector<PruneOrder> parsed;
        for (const std::string& o : orders) parsed.push_back(prune_order_from_string(o));
        return attack_prune_sweep(model, key, message, alphas, parsed, seed);
      },
      py::arg("model"), py::arg("key"), py::arg("message"), py::arg("alphas"), py::arg("orders"),
      py::arg("seed") = 0);

  m.def(
      "attack_finetune",
      [](const HostModel& model, const WatermarkKey& key, const Message& message,
         const Dataset& train_data, const Dataset& test_data, std::size_t epochs,
         const py::kwargs& kwargs) {
        return attack_finetune(model, key, message, train_data, test_data, epochs,
                               train_config_from_kwargs(kwargs));
      },
      py::arg("model"), py::arg("key"), py::arg("message"), py::arg("train_data"),
      py::arg("test_data"), py::arg("epochs"));

  m.def(
      "attack_overwrite",
      [](const HostModel& model, const WatermarkKey& old_key, const Message& old_message,
         const WatermarkKey& new_key, const Message& new_message, const Dataset& train_data,
         const Dataset& test_data, const py::kwargs& kwargs) {
        TrainConfig config = train_config_from_kwargs(kwargs);
        return attack_overwrite(model, old_key, old_message, new_key, new_message, train_data,
                                test_data, config);
      },
      py::arg("model"), py::arg("old_key"), py::arg("old_message"), py::arg("new_key"),
      py::arg("new_message"), py::arg("train_data"), py::arg("test_data"));

  m.def(
      "embed_posthoc",
      [](const HostModel& model, const WatermarkKey& key, const Message& message, double lambda,
         std::size_t steps, double lr, const Dataset* test_data) {
        return embed_posthoc(model, key, message, lambda, steps, lr, test_data);
      },
      py::arg("model"), py::arg("key"), py::arg("message"), py::arg("lambda_"),
      py::arg("steps") = 1000, py::arg("lr") = 0.01, py::arg("test_data") = nullptr);

  m.def(
      "grad_check",
      [](std::uint64_t seed, std::size_t hosts, double lambda, double tolerance) {
        double worst = 0.0;
        bool all_pass = true;
        for (std::size_t i = 0; i < hosts; ++i) {
          const std::uint64_t host_seed = derive_seed(seed, 1000 + i);
          HostModel model = sample_check_host(host_seed);
          Rng rng(derive_seed(host_seed, 5));
          std::vector<std::size_t> shape = {2};
          shape.insert(shape.end(), model.input_shape.begin(), model.input_shape.end());
          Tensor batch(shape);
          for (std::size_t k = 0; k < batch.size(); ++k) batch[k] = rng.normal();
          std::vector<int> labels = {static_cast<int>(rng.uniform_index(model.num_classes)),
                                     static_cast<int>(rng.uniform_index(model.num_classes))};
          const Tensor targets = one_hot(labels, model.num_classes);
          std::optional<ExtraTerm> extra;
          if (lambda > 0.0) {
            const std::size_t layer = *model.embed_layer;
            const WatermarkKey key = make_key(KeyKind::random, derive_seed(host_seed, 6), 8,
                                              embed_dim(model, layer));
            extra = attach_regularizer(model, layer, key, Message::ones(8), lambda);
          }
          const GradCheckReport report =
              grad_check(model, batch, targets, extra ? &*extra : nullptr, tolerance);
          worst = std::max(worst, report.max_rel_error);
          all_pass = all_pass && report.pass;
        }
        return py::make_tuple(all_pass, worst);
      },
      py::arg("seed") = 1, py::arg("hosts") = 5, py::arg("lambda_") = 0.01,
      py::arg("tolerance") = 1e-4);

  m.def(
      "save_checkpoint",
      [](const std::filesystem::path& path, const HostModel& model, const std::string& metadata) {
        save_checkpoint(path, model, nlohmann::json::parse(metadata.empty() ? "{}" : metadata));
      },
      py::arg("path"), py::arg("model"), py::arg("metadata") = "{}");

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        Checkpoint ckpt = load_checkpoint(path);
        return py::make_tuple(ckpt.model, ckpt.metadata.dump());
      },
      py::arg("path"));
}
