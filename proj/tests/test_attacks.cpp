#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nnwm/attacks.hpp"
#include "nnwm/data.hpp"
#include "nnwm/errors.hpp"
#include "nnwm/hosts.hpp"
#include "nnwm/rng.hpp"

using namespace nnwm;

namespace {

struct Embedded {
  HostModel model;
  WatermarkKey key;
  Message message;
  Dataset train_data;
  Dataset test_data;
};

// One quick embedded small-cnn shared by the attack tests.
const Embedded& embedded_fixture() {
  static const Embedded fixture = [] {
    auto [train_data, test_data] = make_synthetic_pair(10, {8, 8, 3}, 512, 128, 41);
    HostModel host = build_host(HostPreset::small_cnn, 13);
    WatermarkKey key = make_key(KeyKind::random, 99, 32, 144);
    Message message = Message::ones(32);
    TrainConfig config;
    config.epochs = 8;
    config.weight_decay = 1e-4;
    config.situation = Situation::train_to_embed;
    config.lambda = 0.01;
    TrainResult result = train(host, train_data, test_data, config, &key, &message);
    REQUIRE(*result.detection->bit_error == 0.0);
    return Embedded{std::move(result.model), std::move(key), std::move(message),
                    std::move(train_data), std::move(test_data)};
  }();
  return fixture;
}

std::vector<double> snapshot(const HostModel& model) {
  HostModel copy = model;
  std::vector<double> values;
  for (const ParamRef& p : parameters(copy)) {
    values.insert(values.end(), p.tensor->data(), p.tensor->data() + p.tensor->size());
  }
  return values;
}

}  // namespace

TEST_CASE("prune alpha=0 leaves extraction untouched") {
  const Embedded& fx = embedded_fixture();
  const AttackReport report =
      attack_prune(fx.model, fx.key, fx.message, {0.0, PruneOrder::ascending, 0});
  CHECK(report.ber_after == 0.0);
  CHECK(report.er_after == doctest::Approx(report.er_before));
}

TEST_CASE("prune alpha=1 zeroes everything; bits collapse to all ones") {
  const Embedded& fx = embedded_fixture();
  const AttackOutcome outcome =
      attack_prune_model(fx.model, fx.key, fx.message, {1.0, PruneOrder::descending, 0});
  const Tensor& w = std::get<Conv2d>(outcome.model.layers[*outcome.model.embed_layer]).weight;
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i] == 0.0);

  // Projections are exactly zero, s(0) = 1, so BER equals the fraction of
  // zero bits in the reference message (zero here: the message is all ones).
  const DetectionStats stats = extract(fx.key, outcome.model, *outcome.model.embed_layer);
  for (std::size_t j = 0; j < stats.bits.size(); ++j) CHECK(stats.bits.bits[j] == 1);
  CHECK(outcome.report.ber_after == 0.0);

  Message mixed = Message::random(32, 7);
  std::size_t zeros = 0;
  for (auto b : mixed.bits) zeros += b == 0;
  const AttackReport vs_mixed =
      attack_prune(fx.model, fx.key, mixed, {1.0, PruneOrder::descending, 0});
  CHECK(vs_mixed.ber_after == doctest::Approx(static_cast<double>(zeros) / 32.0));
}

TEST_CASE("prune validates alpha and counts exactly round(alpha*P) zeros") {
  const Embedded& fx = embedded_fixture();
  CHECK_THROWS_AS((void)attack_prune(fx.model, fx.key, fx.message, {1.5, PruneOrder::random, 0}),
                  ConfigError);

  const double alpha = 0.37;
  const AttackOutcome outcome =
      attack_prune_model(fx.model, fx.key, fx.message, {alpha, PruneOrder::random, 3});
  const Tensor& w = std::get<Conv2d>(outcome.model.layers[*outcome.model.embed_layer]).weight;
  std::size_t zeros = 0;
  for (std::size_t i = 0; i < w.size(); ++i) zeros += w[i] == 0.0;
  CHECK(zeros >= static_cast<std::size_t>(std::llround(alpha * w.size())));
}

TEST_CASE("random-order pruning is deterministic under a fixed seed") {
  const Embedded& fx = embedded_fixture();
  const AttackReport a = attack_prune(fx.model, fx.key, fx.message, {0.5, PruneOrder::random, 8});
  const AttackReport b = attack_prune(fx.model, fx.key, fx.message, {0.5, PruneOrder::random, 8});
  CHECK(a.er_after == b.er_after);
  CHECK(a.ber_after == b.ber_after);
  const AttackReport c = attack_prune(fx.model, fx.key, fx.message, {0.5, PruneOrder::random, 9});
  CHECK(c.er_after != a.er_after);
}

TEST_CASE("attacks never mutate the input model") {
  const Embedded& fx = embedded_fixture();
  const std::vector<double> before = snapshot(fx.model);

  (void)attack_prune(fx.model, fx.key, fx.message, {0.9, PruneOrder::ascending, 0});
  (void)embed_posthoc(fx.model, fx.key, fx.message, 10.0, 50, 0.01);
  TrainConfig config;
  config.epochs = 1;
  config.weight_decay = 1e-4;
  (void)attack_finetune(fx.model, fx.key, fx.message, fx.train_data, fx.test_data, 1, config);

  CHECK(snapshot(fx.model) == before);
}

TEST_CASE("fine-tune attack with zero epochs changes nothing") {
  const Embedded& fx = embedded_fixture();
  TrainConfig config;
  const AttackReport report =
      attack_finetune(fx.model, fx.key, fx.message, fx.train_data, fx.test_data, 0, config);
  CHECK(report.er_after == report.er_before);
  CHECK(report.ber_after == report.ber_before);
}

TEST_CASE("fine-tune attack keeps BER at zero at desk scale") {
  const Embedded& fx = embedded_fixture();
  TrainConfig config;
  config.weight_decay = 1e-4;
  const AttackReport report =
      attack_finetune(fx.model, fx.key, fx.message, fx.train_data, fx.test_data, 8, config);
  CHECK(report.ber_before == 0.0);
  CHECK(report.ber_after == 0.0);
  CHECK(report.er_after < 10.0 * report.er_before);
}

TEST_CASE("posthoc with lambda 0 stays at w0 and random-message BER sits near 0.5") {
  const Embedded& fx = embedded_fixture();
  const Message fresh = Message::random(32, 1234);
  const AttackReport report = embed_posthoc(fx.model, fx.key, fresh, 0.0, 200, 0.01);
  CHECK(*report.half_sq_dist == 0.0);
  CHECK(report.er_after == doctest::Approx(report.er_before));
  CHECK(report.ber_after > 0.15);
  CHECK(report.ber_after < 0.85);
}

TEST_CASE("posthoc with lambda 10 reaches BER 0 while moving w") {
  const Embedded& fx = embedded_fixture();
  const Message fresh = Message::random(32, 4321);
  const AttackReport report = embed_posthoc(fx.model, fx.key, fresh, 10.0, 400, 0.01);
  CHECK(report.ber_after == 0.0);
  CHECK(*report.half_sq_dist > 0.0);
  CHECK(report.er_after < report.er_before);
}

TEST_CASE("overwrite with lambda 0 reduces to plain fine-tuning") {
  const Embedded& fx = embedded_fixture();
  const WatermarkKey new_key = make_key(KeyKind::random, 555, 32, 144);
  const Message new_message = Message::random(32, 556);
  TrainConfig config;
  config.epochs = 4;
  config.weight_decay = 1e-4;
  config.lambda = 0.0;
  const AttackReport overwrite = attack_overwrite(fx.model, fx.key, fx.message, new_key,
                                                  new_message, fx.train_data, fx.test_data, config);
  const AttackReport finetune =
      attack_finetune(fx.model, fx.key, fx.message, fx.train_data, fx.test_data, 4, config);
  CHECK(overwrite.ber_after == finetune.ber_after);
  CHECK(overwrite.er_after == doctest::Approx(finetune.er_after));
}

TEST_CASE("overwrite warns when the new key equals the old one") {
  const Embedded& fx = embedded_fixture();
  TrainConfig config;
  config.epochs = 1;
  config.lambda = 0.01;
  const AttackReport report = attack_overwrite(fx.model, fx.key, fx.message, fx.key, fx.message,
                                               fx.train_data, fx.test_data, config);
  REQUIRE(report.warnings.size() == 1);
}

TEST_CASE("prune sweep covers the grid in ascending alpha order") {
  const Embedded& fx = embedded_fixture();
  const AttackReport report = attack_prune_sweep(
      fx.model, fx.key, fx.message, {0.8, 0.0, 0.4},
      {PruneOrder::ascending, PruneOrder::descending}, 0);
  REQUIRE(report.sweep.size() == 6);
  CHECK(report.sweep[0].alpha == 0.0);
  CHECK(report.sweep[1].alpha == 0.4);
  CHECK(report.sweep[2].alpha == 0.8);
  for (std::size_t i = 0; i < 3; ++i) CHECK(report.sweep[i].order == PruneOrder::ascending);
  for (std::size_t i = 3; i < 6; ++i) CHECK(report.sweep[i].order == PruneOrder::descending);
}
