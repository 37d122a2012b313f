#include "molmix/networks.hpp"

#include <cmath>
#include <sstream>

namespace molmix {

namespace {

Matrix uniform_init(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = uniform(rng, -bound, bound);
  return m;
}

// He-style bound for layers followed by ReLU.
double relu_bound(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }
// Unit-variance-preserving bound for the output layers.
double linear_bound(std::size_t fan_in) { return std::sqrt(3.0 / static_cast<double>(fan_in)); }

Matrix one_hot(std::span<const int> symbols, int width) {
  Matrix m(symbols.size(), static_cast<std::size_t>(width));
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    if (symbols[k] < 0 || symbols[k] >= width)
      throw UsageError("symbol " + std::to_string(symbols[k]) + " outside alphabet of size " +
                       std::to_string(width));
    m(k, static_cast<std::size_t>(symbols[k])) = 1.0;
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

MixtureVector AlphabetTable::mixture(int symbol) const {
  if (symbol < 0 || symbol >= size())
    throw UsageError("symbol " + std::to_string(symbol) + " outside alphabet of size " +
                     std::to_string(size()));
  auto row = mixtures.row_span(static_cast<std::size_t>(symbol));
  return {row.begin(), row.end()};
}

Matrix AlphabetTable::lookup(std::span<const int> symbols) const {
  Matrix out(symbols.size(), molecules());
  for (std::size_t k = 0; k < symbols.size(); ++k) {
    if (symbols[k] < 0 || symbols[k] >= size())
      throw UsageError("symbol " + std::to_string(symbols[k]) + " outside alphabet");
    auto src = mixtures.row_span(static_cast<std::size_t>(symbols[k]));
    std::copy(src.begin(), src.end(), out.row_span(k).begin());
  }
  return out;
}

bool AlphabetTable::feasible(double x_max) const {
  for (double v : mixtures.data())
    if (!(v >= 0.0 && v <= x_max)) return false;
  return true;
}

// ---------------------------------------------------------------------------

EncoderNet::EncoderNet(ParamStore& store, const std::string& prefix, int symbols,
                       std::size_t molecules, double x_max, Rng& init_rng, int hidden)
    : symbols_(symbols), molecules_(molecules), hidden_(hidden), x_max_(x_max) {
  if (symbols < 2 || molecules < 1 || hidden < 1 || !(x_max > 0.0))
    throw ConfigError("encoder: invalid dimensions");
  const auto L = static_cast<std::size_t>(hidden);
  const auto N = static_cast<std::size_t>(symbols);
  w1_ = store.add(prefix + ".w1", uniform_init(L, N, relu_bound(N), init_rng));
  b1_ = store.add(prefix + ".b1", Matrix(1, L));
  w2_ = store.add(prefix + ".w2", uniform_init(molecules, L, linear_bound(L), init_rng));
  b2_ = store.add(prefix + ".b2", Matrix(1, molecules));
}

EncoderNet EncoderNet::bind(int symbols, std::size_t molecules, double x_max, int hidden,
                            ParamId w1, ParamId b1, ParamId w2, ParamId b2) {
  EncoderNet e;
  e.symbols_ = symbols;
  e.molecules_ = molecules;
  e.x_max_ = x_max;
  e.hidden_ = hidden;
  e.w1_ = w1;
  e.b1_ = b1;
  e.w2_ = w2;
  e.b2_ = b2;
  return e;
}

Var EncoderNet::record(Tape& tape, std::span<const int> symbols) const {
  Var x = tape.constant(one_hot(symbols, symbols_));
  Var h = tape.relu(tape.affine(x, tape.param(w1_), tape.param(b1_)));
  return tape.scaled_sigmoid(tape.affine(h, tape.param(w2_), tape.param(b2_)), x_max_);
}

MixtureVector EncoderNet::encode(const ParamStore& store, int symbol) const {
  Tape tape(store);
  const int s[] = {symbol};
  const Matrix& out = tape.value(record(tape, s));
  return {out.data().begin(), out.data().end()};
}

AlphabetTable EncoderNet::export_alphabet(const ParamStore& store) const {
  Tape tape(store);
  std::vector<int> all(static_cast<std::size_t>(symbols_));
  for (int s = 0; s < symbols_; ++s) all[static_cast<std::size_t>(s)] = s;
  return AlphabetTable{tape.value(record(tape, all))};
}

// ---------------------------------------------------------------------------

DecoderNet::DecoderNet(ParamStore& store, const std::string& prefix, std::size_t sensors,
                       std::vector<int> alphabet_sizes, double input_scale, Rng& init_rng,
                       int hidden)
    : sensors_(sensors),
      alphabet_sizes_(std::move(alphabet_sizes)),
      hidden_(hidden),
      input_scale_(input_scale) {
  if (sensors < 1 || alphabet_sizes_.empty() || hidden < 1 || !(input_scale > 0.0))
    throw ConfigError("decoder: invalid dimensions");
  std::size_t N = 0;
  for (int n : alphabet_sizes_) N += static_cast<std::size_t>(n);
  const auto L = static_cast<std::size_t>(hidden);
  ids_.push_back(store.add(prefix + ".bn.gamma", Matrix(1, sensors, 1.0)));
  ids_.push_back(store.add(prefix + ".bn.beta", Matrix(1, sensors, 0.0)));
  ids_.push_back(store.add(prefix + ".w1", uniform_init(L, sensors, relu_bound(sensors), init_rng)));
  ids_.push_back(store.add(prefix + ".b1", Matrix(1, L)));
  ids_.push_back(store.add(prefix + ".w2", uniform_init(L, L, relu_bound(L), init_rng)));
  ids_.push_back(store.add(prefix + ".b2", Matrix(1, L)));
  ids_.push_back(store.add(prefix + ".w3", uniform_init(N, L, linear_bound(L), init_rng)));
  ids_.push_back(store.add(prefix + ".b3", Matrix(1, N)));
  norm_.running_mean.assign(sensors, 0.0);
  norm_.running_var.assign(sensors, 1.0);
}

DecoderNet DecoderNet::bind(std::size_t sensors, std::vector<int> alphabet_sizes,
                            double input_scale, int hidden, std::vector<ParamId> ids,
                            BatchNormState norm) {
  if (ids.size() != 8) throw ConfigError("decoder: expected 8 parameter tensors");
  DecoderNet d;
  d.sensors_ = sensors;
  d.alphabet_sizes_ = std::move(alphabet_sizes);
  d.input_scale_ = input_scale;
  d.hidden_ = hidden;
  d.ids_ = std::move(ids);
  d.norm_ = std::move(norm);
  return d;
}

std::vector<Var> DecoderNet::record(Tape& tape, Var z, NormMode mode, bool update_running) {
  Var x = tape.scale(z, input_scale_);
  x = tape.batchnorm(x, tape.param(ids_[0]), tape.param(ids_[1]), norm_, mode, update_running);
  x = tape.relu(tape.affine(x, tape.param(ids_[2]), tape.param(ids_[3])));
  x = tape.relu(tape.affine(x, tape.param(ids_[4]), tape.param(ids_[5])));
  Var logits = tape.affine(x, tape.param(ids_[6]), tape.param(ids_[7]));
  std::vector<Var> out;
  std::size_t begin = 0;
  for (int n : alphabet_sizes_) {
    const std::size_t end = begin + static_cast<std::size_t>(n);
    out.push_back(tape.softmax(tape.slice_cols(logits, begin, end)));
    begin = end;
  }
  return out;
}

std::vector<Matrix> DecoderNet::decode(const ParamStore& store, const Matrix& z) const {
  if (z.cols() != sensors_)
    throw EvaluationError("decode: expected " + std::to_string(sensors_) +
                          " sensor outputs, got " + std::to_string(z.cols()));
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!std::isfinite(z[i])) {
      std::ostringstream msg;
      msg << "decode: non-finite sensor output " << z[i] << " at item " << i / z.cols()
          << ", sensor " << i % z.cols();
      throw EvaluationError(msg.str());
    }
  }
  DecoderNet frozen = *this;
  Tape tape(store);
  auto probs = frozen.record(tape, tape.constant(z), NormMode::kEval, false);
  std::vector<Matrix> out;
  out.reserve(probs.size());
  for (Var p : probs) out.push_back(tape.value(p));
  return out;
}

int detect(std::span<const double> likelihoods) {
  if (likelihoods.empty()) throw UsageError("detect: empty likelihood vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < likelihoods.size(); ++i)
    if (likelihoods[i] > likelihoods[best]) best = i;
  return static_cast<int>(best);
}

// ---------------------------------------------------------------------------

std::vector<AlphabetTable> EndToEndModel::alphabets() const {
  std::vector<AlphabetTable> out;
  for (const auto& t : transmitters) {
    if (const auto* enc = std::get_if<EncoderNet>(&t))
      out.push_back(enc->export_alphabet(params));
    else
      out.push_back(std::get<AlphabetTable>(t));
  }
  return out;
}

std::vector<Var> EndToEndModel::record_transmitters(
    Tape& tape, const std::vector<std::vector<int>>& symbols) const {
  if (symbols.size() != transmitters.size())
    throw ConfigError("record_transmitters: symbol batches for " +
                      std::to_string(symbols.size()) + " users, model has " +
                      std::to_string(transmitters.size()));
  std::vector<Var> out;
  for (std::size_t i = 0; i < transmitters.size(); ++i) {
    if (const auto* enc = std::get_if<EncoderNet>(&transmitters[i]))
      out.push_back(enc->record(tape, symbols[i]));
    else
      out.push_back(tape.constant(std::get<AlphabetTable>(transmitters[i]).lookup(symbols[i])));
  }
  return out;
}

EndToEndModel make_autoencoder(const SystemConfig& config, double input_scale,
                               std::uint64_t seed) {
  config.validate();
  EndToEndModel model;
  model.seed = seed;
  Rng rng = make_stream(seed, 0x1417);
  for (std::size_t i = 0; i < config.users; ++i) {
    model.transmitters.emplace_back(EncoderNet(model.params, "encoder" + std::to_string(i + 1),
                                               config.alphabet_sizes[i], config.molecules,
                                               config.x_max, rng));
  }
  model.decoder = DecoderNet(model.params, "decoder", config.sensors, config.alphabet_sizes,
                             input_scale, rng);
  return model;
}

EndToEndModel make_fixed_transmitter_model(const SystemConfig& config,
                                           std::vector<AlphabetTable> alphabets,
                                           double input_scale, std::uint64_t seed) {
  config.validate();
  if (alphabets.size() != config.users)
    throw ConfigError("fixed transmitters: " + std::to_string(alphabets.size()) +
                      " alphabets for " + std::to_string(config.users) + " users");
  EndToEndModel model;
  model.seed = seed;
  Rng rng = make_stream(seed, 0x1417);
  for (std::size_t i = 0; i < config.users; ++i) {
    if (alphabets[i].size() != config.alphabet_sizes[i] ||
        alphabets[i].molecules() != config.molecules)
      throw ConfigError("fixed transmitters: alphabet " + std::to_string(i + 1) +
                        " does not match the system dimensions");
    model.transmitters.emplace_back(std::move(alphabets[i]));
  }
  model.decoder = DecoderNet(model.params, "decoder", config.sensors, config.alphabet_sizes,
                             input_scale, rng);
  return model;
}

}  // namespace molmix
