#include <cmath>
#include <limits>

#include "doctest.h"
#include "molmix/networks.hpp"

using namespace molmix;

namespace {

SystemConfig two_user_system() {
  SystemConfig c;
  c.users = 2;
  c.molecules = 4;
  c.sensors = 3;
  c.alphabet_sizes = {4, 3};
  c.channel = ChannelMatrixSet::uniform(2, 4, 0.01);
  c.tx_noise = NoiseSpec::isotropic(4, 0.0, 1e6);
  c.channel_noise = NoiseSpec::isotropic(4, 10.0, 10.0);
  c.rx_noise = NoiseSpec::isotropic(3, 0.0, 1e-13);
  return c;
}

}  // namespace

TEST_CASE("encoder output stays in [0, x_max] for adversarial weights") {
  ParamStore store;
  Rng rng = make_stream(1, 0);
  EncoderNet enc(store, "e", 8, 3, 2e4, rng);
  for (double scale : {1e3, -1e3, 1e8, -1e8}) {
    for (auto& v : store.value(enc.w2()).data()) v = scale;
    for (auto& v : store.value(enc.b1()).data()) v = std::abs(scale);
    CHECK(enc.export_alphabet(store).feasible(2e4));
  }
}

TEST_CASE("zero output weights give the midpoint concentration") {
  ParamStore store;
  Rng rng = make_stream(2, 0);
  EncoderNet enc(store, "e", 4, 3, 2e4, rng);
  store.value(enc.w2()).fill(0.0);
  for (double v : enc.encode(store, 2)) CHECK(v == 1e4);
}

TEST_CASE("exported alphabet rows equal single-symbol encodings") {
  ParamStore store;
  Rng rng = make_stream(3, 0);
  EncoderNet enc(store, "e", 6, 3, 2e4, rng);
  const AlphabetTable table = enc.export_alphabet(store);
  REQUIRE(table.size() == 6);
  for (int s = 0; s < 6; ++s) CHECK(table.mixture(s) == enc.encode(store, s));
}

TEST_CASE("decoder outputs are per-user distributions of the right length") {
  const SystemConfig c = two_user_system();
  EndToEndModel m = make_autoencoder(c, 1e5, 4);
  Rng rng = make_stream(4, 1);
  Matrix z(16, 3);
  for (auto& v : z.data()) v = 1e-5 * uniform(rng, 0.0, 2.0);
  const auto probs = m.decoder.decode(m.params, z);
  REQUIRE(probs.size() == 2);
  CHECK(probs[0].cols() == 4);
  CHECK(probs[1].cols() == 3);
  for (const Matrix& p : probs)
    for (std::size_t k = 0; k < p.rows(); ++k) {
      double s = 0.0;
      for (double v : p.row_span(k)) {
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  CHECK(m.decoder.decode(m.params, z) == probs);
}

TEST_CASE("detection picks the largest entry, ties to the smallest index") {
  CHECK(detect(std::vector<double>{0.1, 0.7, 0.2}) == 1);
  CHECK(detect(std::vector<double>{0.4, 0.4, 0.2}) == 0);
  CHECK(detect(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 0);
  CHECK_THROWS_AS(detect(std::vector<double>{}), UsageError);
}

TEST_CASE("initialization is a function of the seed") {
  const SystemConfig c = two_user_system();
  const EndToEndModel a = make_autoencoder(c, 1e5, 9);
  const EndToEndModel b = make_autoencoder(c, 1e5, 9);
  const EndToEndModel d = make_autoencoder(c, 1e5, 10);
  REQUIRE(a.params.count() == b.params.count());
  bool differs = false;
  for (std::size_t i = 0; i < a.params.count(); ++i) {
    CHECK(a.params.entries()[i].value == b.params.entries()[i].value);
    differs = differs || a.params.entries()[i].value != d.params.entries()[i].value;
  }
  CHECK(differs);
}

TEST_CASE("batch-norm running statistics converge to the batch statistics") {
  const SystemConfig c = two_user_system();
  EndToEndModel m = make_autoencoder(c, 1.0, 5);
  Rng rng = make_stream(5, 1);
  Matrix z(512, 3);
  for (std::size_t k = 0; k < z.rows(); ++k)
    for (std::size_t r = 0; r < 3; ++r) z(k, r) = 3.0 * r + (1.0 + r) * standard_normal(rng);
  for (int step = 0; step < 200; ++step) {
    Tape t(&m.params);
    m.decoder.record(t, t.constant(z), NormMode::kTrain, true);
  }
  Tape train_tape(m.params), eval_tape(m.params);
  DecoderNet copy = m.decoder;
  const auto train_probs = copy.record(train_tape, train_tape.constant(z), NormMode::kTrain, false);
  const auto eval_probs = m.decoder.decode(m.params, z);
  for (std::size_t i = 0; i < 2; ++i) {
    const Matrix& a = train_tape.value(train_probs[i]);
    for (std::size_t j = 0; j < a.size(); ++j)
      CHECK(a[j] == doctest::Approx(eval_probs[i][j]).epsilon(1e-3));
  }
}

TEST_CASE("symbols outside the alphabet are usage errors") {
  ParamStore store;
  Rng rng = make_stream(6, 0);
  EncoderNet enc(store, "e", 4, 3, 2e4, rng);
  CHECK_THROWS_AS(enc.encode(store, 4), UsageError);
  CHECK_THROWS_AS(enc.encode(store, -1), UsageError);
  AlphabetTable t{Matrix(4, 3)};
  const int bad[] = {0, 7};
  CHECK_THROWS_AS(t.lookup(bad), UsageError);
}

TEST_CASE("non-finite decoder input raises an evaluation error") {
  const SystemConfig c = two_user_system();
  const EndToEndModel m = make_autoencoder(c, 1e5, 7);
  Matrix z(2, 3, 1e-5);
  z(1, 2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(m.decoder.decode(m.params, z), EvaluationError);
  z(1, 2) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(m.decoder.decode(m.params, z), EvaluationError);
  CHECK_THROWS_AS(m.decoder.decode(m.params, Matrix(2, 2)), EvaluationError);
}

TEST_CASE("fixed-transmitter models use the given tables") {
  SystemConfig c = two_user_system();
  c.alphabet_sizes = {2, 2};
  AlphabetTable a{Matrix{{0, 0, 0, 0}, {1, 2, 3, 4}}};
  AlphabetTable b{Matrix{{5, 5, 5, 5}, {0, 0, 0, 1}}};
  const EndToEndModel m = make_fixed_transmitter_model(c, {a, b}, 1.0, 1);
  const auto tables = m.alphabets();
  CHECK(tables[0] == a);
  CHECK(tables[1] == b);
  CHECK_THROWS_AS(make_fixed_transmitter_model(c, {a}, 1.0, 1), ConfigError);
}
