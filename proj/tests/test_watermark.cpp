#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "nnwm/errors.hpp"
#include "nnwm/rng.hpp"
#include "nnwm/watermark.hpp"

using namespace nnwm;

namespace {

Tensor random_conv_weight(std::size_t s, std::size_t d, std::size_t l, std::uint64_t seed,
                          double scale = 1.0) {
  Tensor w({s, s, d, l});
  Rng rng(seed);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = scale * rng.normal();
  return w;
}

}  // namespace

TEST_CASE("direct keys use each column at most once while T <= M") {
  for (std::uint64_t seed : {1ULL, 2ULL, 77ULL}) {
    const std::size_t m = 12;
    for (std::size_t t : {std::size_t{5}, std::size_t{12}}) {
      const WatermarkKey key = make_key(KeyKind::direct, seed, t, m);
      // Exhaustive row scan: every row exactly one '1', nothing else; count
      // column usage.
      std::vector<int> used(m, 0);
      for (std::size_t j = 0; j < t; ++j) {
        std::size_t ones = 0, others = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const double v = key.matrix[j * m + i];
          if (v == 1.0) {
            ++ones;
            ++used[i];
          } else if (v != 0.0) {
            ++others;
          }
        }
        CHECK(ones == 1);
        CHECK(others == 0);
      }
      for (int u : used) CHECK(u <= 1);
      if (t == m) {
        for (int u : used) CHECK(u == 1);  // a permutation
      }
    }
  }
}

TEST_CASE("direct keys reuse columns only when T > M forces them") {
  const WatermarkKey key = make_key(KeyKind::direct, 5, 9, 4);
  std::vector<int> used(4, 0);
  for (std::size_t j = 0; j < 9; ++j) {
    for (std::size_t i = 0; i < 4; ++i) {
      if (key.matrix[j * 4 + i] == 1.0) ++used[i];
    }
  }
  for (int u : used) CHECK(u >= 2);
}

TEST_CASE("random keys are deterministic in the seed") {
  const WatermarkKey a = make_key(KeyKind::random, 42, 4, 8);
  const WatermarkKey b = make_key(KeyKind::random, 42, 4, 8);
  for (std::size_t i = 0; i < a.matrix.size(); ++i) CHECK(a.matrix[i] == b.matrix[i]);
  const WatermarkKey c = make_key(KeyKind::random, 43, 4, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.matrix.size(); ++i) any_diff |= a.matrix[i] != c.matrix[i];
  CHECK(any_diff);
}

TEST_CASE("diff key rows hold one +1, one -1 and sum to zero") {
  const WatermarkKey key = make_key(KeyKind::diff, 3, 3, 8);
  for (std::size_t j = 0; j < 3; ++j) {
    double sum = 0.0;
    std::size_t plus = 0, minus = 0;
    for (std::size_t i = 0; i < 8; ++i) {
      const double v = key.matrix[j * 8 + i];
      sum += v;
      if (v == 1.0) ++plus;
      if (v == -1.0) ++minus;
      CHECK((v == 0.0 || v == 1.0 || v == -1.0));
    }
    CHECK(sum == 0.0);
    CHECK(plus == 1);
    CHECK(minus == 1);
  }
}

TEST_CASE("key preconditions") {
  CHECK_THROWS_AS(make_key(KeyKind::diff, 1, 3, 1), ConfigError);
  CHECK_THROWS_AS(make_key(KeyKind::random, 1, 0, 4), ConfigError);
  CHECK_THROWS_AS(make_key(KeyKind::random, 1, 4, 0), ConfigError);
}

TEST_CASE("random key rows are linearly independent for T <= M") {
  const WatermarkKey key = make_key(KeyKind::random, 17, 8, 16);
  // Gaussian elimination rank.
  std::vector<std::vector<double>> rows(8, std::vector<double>(16));
  for (std::size_t j = 0; j < 8; ++j)
    for (std::size_t i = 0; i < 16; ++i) rows[j][i] = key.matrix[j * 16 + i];
  std::size_t rank = 0;
  for (std::size_t col = 0; col < 16 && rank < 8; ++col) {
    std::size_t pivot = rank;
    for (std::size_t r = rank; r < 8; ++r) {
      if (std::fabs(rows[r][col]) > std::fabs(rows[pivot][col])) pivot = r;
    }
    if (std::fabs(rows[pivot][col]) < 1e-9) continue;
    std::swap(rows[rank], rows[pivot]);
    for (std::size_t r = rank + 1; r < 8; ++r) {
      const double f = rows[r][col] / rows[rank][col];
      for (std::size_t i = col; i < 16; ++i) rows[r][i] -= f * rows[rank][i];
    }
    ++rank;
  }
  CHECK(rank == 8);
}

TEST_CASE("flatten: single filter is plain flattening") {
  const Tensor w = random_conv_weight(3, 2, 1, 7);
  const FlattenedTarget t = flatten_target(w);
  REQUIRE(t.w.size() == 18);
  for (std::size_t i = 0; i < 18; ++i) CHECK(t.w[i] == w[i]);
}

TEST_CASE("flatten: opposite filters cancel") {
  Tensor w({2, 2, 2, 2});
  Rng rng(3);
  for (std::size_t m = 0; m < 8; ++m) {
    const double v = rng.normal();
    w[m * 2] = v;
    w[m * 2 + 1] = -v;
  }
  const FlattenedTarget t = flatten_target(w);
  for (double v : t.w) CHECK(v == 0.0);
}

TEST_CASE("flatten matches the naive quadruple-loop mean oracle") {
  const std::size_t S = 2, D = 3, L = 5;
  const Tensor w = random_conv_weight(S, D, L, 11);
  const FlattenedTarget t = flatten_target(w);
  for (std::size_t i = 0; i < S; ++i) {
    for (std::size_t j = 0; j < S; ++j) {
      for (std::size_t k = 0; k < D; ++k) {
        double sum = 0.0;
        for (std::size_t l = 0; l < L; ++l) sum += w[((i * S + j) * D + k) * L + l];
        CHECK(t.w[(i * S + j) * D + k] == doctest::Approx(sum / L).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("flatten rejects non-4-D tensors") {
  CHECK_THROWS_AS((void)flatten_target(Tensor({3, 3, 4})), ConfigError);
}

TEST_CASE("embedding loss at w = 0 is T*ln2 with a zero-mean gradient structure") {
  const std::size_t t = 6, m = 10;
  const WatermarkKey key = make_key(KeyKind::random, 5, t, m);
  const Message msg = Message::random(t, 9);
  const std::vector<double> w(m, 0.0);
  const EmbeddingLoss loss = embedding_loss(key, msg, w);
  CHECK(loss.value == doctest::Approx(t * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("embedding loss gradient matches central finite differences") {
  const std::size_t t = 5, m = 12;
  for (KeyKind kind : {KeyKind::random, KeyKind::direct, KeyKind::diff}) {
    const WatermarkKey key = make_key(kind, 21, t, m);
    const Message msg = Message::random(t, 33);
    Rng rng(55);
    std::vector<double> w(m);
    for (double& v : w) v = 0.3 * rng.normal();

    const EmbeddingLoss loss = embedding_loss(key, msg, w);
    const double h = 1e-6;
    for (std::size_t i = 0; i < m; ++i) {
      const double saved = w[i];
      w[i] = saved + h;
      const double up = embedding_loss(key, msg, w).value;
      w[i] = saved - h;
      const double down = embedding_loss(key, msg, w).value;
      w[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double scale = std::max({std::fabs(numeric), std::fabs(loss.grad[i]), 1e-9});
      CHECK(std::fabs(loss.grad[i] - numeric) / scale <= 1e-6);
    }
  }
}

TEST_CASE("per-bit loss decreases monotonically toward the satisfied direction") {
  const WatermarkKey key = make_key(KeyKind::random, 2, 1, 4);
  const Message msg = Message::ones(1);
  // Walk w along +X_0 so the projection grows linearly.
  std::vector<double> direction(4);
  double norm2 = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    direction[i] = key.matrix[i];
    norm2 += direction[i] * direction[i];
  }
  double prev = embedding_loss(key, msg, std::vector<double>(4, 0.0)).value;
  CHECK(prev == doctest::Approx(std::log(2.0)));
  for (double step_t : {0.5, 1.0, 2.0, 4.0, 6.0}) {
    std::vector<double> w(4);
    for (std::size_t i = 0; i < 4; ++i) w[i] = step_t * direction[i] / norm2;
    const double cur = embedding_loss(key, msg, w).value;
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK(prev < 3e-3);  // projection 6 -> per-bit BCE ~ e^-6
}

TEST_CASE("E_R is nonincreasing along any direction whose signs satisfy the message") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t t = 8, m = 20;
    const WatermarkKey key = make_key(KeyKind::random, derive_seed(700, seed), t, m);
    Rng rng(derive_seed(701, seed));
    std::vector<double> direction(m);
    for (double& v : direction) v = rng.normal();
    // The message that this direction's projection signs satisfy.
    Message msg;
    msg.bits.resize(t);
    for (std::size_t j = 0; j < t; ++j) {
      double proj = 0.0;
      for (std::size_t i = 0; i < m; ++i) proj += key.matrix[j * m + i] * direction[i];
      msg.bits[j] = proj >= 0.0 ? 1 : 0;
    }
    double prev = embedding_loss(key, msg, std::vector<double>(m, 0.0)).value;
    for (double step_t : {0.1, 0.3, 0.7, 1.5, 3.0}) {
      std::vector<double> w(m);
      for (std::size_t i = 0; i < m; ++i) w[i] = step_t * direction[i];
      const double cur = embedding_loss(key, msg, w).value;
      CHECK(cur <= prev);
      prev = cur;
    }
  }
}

TEST_CASE("extraction: brute-force per-bit oracle agrees on 100 random instances") {
  Rng pick(1234);
  for (int round = 0; round < 100; ++round) {
    const std::size_t s = 1 + 2 * pick.uniform_index(2);  // 1 or 3
    const std::size_t d = 1 + pick.uniform_index(4);
    const std::size_t l = 1 + pick.uniform_index(4);
    const std::size_t m = s * s * d;
    const std::size_t t = 1 + pick.uniform_index(12);
    const KeyKind kind =
        std::array<KeyKind, 3>{KeyKind::direct, KeyKind::diff,
                               KeyKind::random}[pick.uniform_index(3)];
    if (kind == KeyKind::diff && m < 2) continue;
    const WatermarkKey key = make_key(kind, pick.next_u64(), t, m);
    const Tensor w = random_conv_weight(s, d, l, pick.next_u64());

    const DetectionStats stats = extract(key, w);

    // Oracle: explicit loops, no shared code with extract()/flatten_target().
    for (std::size_t j = 0; j < t; ++j) {
      double proj = 0.0;
      for (std::size_t i0 = 0; i0 < s; ++i0)
        for (std::size_t j0 = 0; j0 < s; ++j0)
          for (std::size_t k0 = 0; k0 < d; ++k0) {
            double mean = 0.0;
            for (std::size_t l0 = 0; l0 < l; ++l0)
              mean += w[((i0 * s + j0) * d + k0) * l + l0];
            mean /= static_cast<double>(l);
            proj += key.matrix[j * m + (i0 * s + j0) * d + k0] * mean;
          }
      const int oracle_bit = proj >= 0.0 ? 1 : 0;
      CHECK(static_cast<int>(stats.bits.bits[j]) == oracle_bit);
    }
  }
}

TEST_CASE("projection exactly zero extracts bit 1") {
  // diff key on constant weights: w_i+ - w_i- is exactly 0.0.
  const WatermarkKey key = make_key(KeyKind::diff, 8, 4, 9);
  Tensor w({3, 3, 1, 2});
  w.fill(0.73);
  const DetectionStats stats = extract(key, w);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(stats.y[j] == doctest::Approx(0.5));
    CHECK(stats.bits.bits[j] == 1);
  }
}

TEST_CASE("never-embedded weights extract near-Bernoulli(1/2) bits") {
  double total = 0.0;
  std::size_t n = 0;
  const Tensor w = random_conv_weight(3, 4, 3, 99);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const WatermarkKey key = make_key(KeyKind::random, derive_seed(1000, seed), 256, 36);
    const DetectionStats stats = extract(key, w);
    total += stats.mean_bit() * 256;
    n += 256;
  }
  const double mean = total / static_cast<double>(n);
  CHECK(mean > 0.4);
  CHECK(mean < 0.6);
}

TEST_CASE("extraction is invariant to filter permutations") {
  const std::size_t s = 3, d = 2, l = 5;
  const Tensor w = random_conv_weight(s, d, l, 21);
  const WatermarkKey key = make_key(KeyKind::random, 3, 16, s * s * d);
  const DetectionStats base = extract(key, w);

  Rng rng(77);
  std::vector<std::size_t> perm(l);
  for (std::size_t i = 0; i < l; ++i) perm[i] = i;
  rng.shuffle(perm);
  Tensor shuffled({s, s, d, l});
  for (std::size_t m = 0; m < s * s * d; ++m) {
    for (std::size_t f = 0; f < l; ++f) shuffled[m * l + perm[f]] = w[m * l + f];
  }
  const DetectionStats permuted = extract(key, shuffled);
  for (std::size_t j = 0; j < 16; ++j) CHECK(base.bits.bits[j] == permuted.bits.bits[j]);
}

TEST_CASE("extracted bits are invariant to positive scaling") {
  const Tensor w = random_conv_weight(3, 3, 2, 5);
  const WatermarkKey key = make_key(KeyKind::random, 6, 12, 27);
  const DetectionStats base = extract(key, w);
  for (double c : {0.25, 4.0, 1e3}) {
    Tensor scaled = w;
    for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] *= c;
    const DetectionStats s2 = extract(key, scaled);
    for (std::size_t j = 0; j < 12; ++j) CHECK(base.bits.bits[j] == s2.bits.bits[j]);
  }
}

TEST_CASE("ber counts Hamming distance over T") {
  Message a = Message::ones(4);
  CHECK(ber(a, a) == 0.0);
  Message complement;
  complement.bits = {0, 0, 0, 0};
  CHECK(ber(a, complement) == 1.0);

  Message big = Message::ones(256);
  Message flipped = big;
  flipped.bits[100] = 0;
  CHECK(ber(big, flipped) == doctest::Approx(1.0 / 256));

  Message shorter = Message::ones(3);
  CHECK_THROWS_AS((void)ber(a, shorter), ConfigError);
}

TEST_CASE("message hex round-trips, including ragged bit counts") {
  for (std::size_t t : {std::size_t{8}, std::size_t{13}, std::size_t{64}}) {
    const Message msg = Message::random(t, 500 + t);
    const Message back = Message::from_hex(msg.to_hex(), t);
    CHECK(back.bits == msg.bits);
  }
  const Message ones = Message::ones(8);
  CHECK(ones.to_hex() == "ff");
}

TEST_CASE("histogram bins the sigmoid projections") {
  const WatermarkKey key = make_key(KeyKind::random, 31, 64, 36);
  const Tensor w = random_conv_weight(3, 4, 2, 13);
  const DetectionStats stats = extract(key, w);
  std::uint32_t total = 0;
  for (std::uint32_t c : stats.histogram) total += c;
  CHECK(total == 64);
}
