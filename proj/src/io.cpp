#include "molmix/io.hpp"

#include <cmath>
#include <fstream>
#include <initializer_list>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace molmix {

using json = nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

namespace {

// --- JSON -> values with field-path diagnostics ----------------------------

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("field '" + path + "': " + what);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

const json* member(const json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

void require_object(const json& j, const std::string& path,
                    std::initializer_list<const char*> allowed) {
  if (!j.is_object()) field_error(path.empty() ? "<root>" : path, "expected an object");
  const std::set<std::string> known(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) field_error(join(path, key), "unknown field");
}

double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) field_error(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) field_error(path, "expected a finite number");
  return v;
}

std::uint64_t as_uint(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (!j.is_number_unsigned() && j.get<std::int64_t>() < 0))
    field_error(path, "expected a non-negative integer");
  return j.get<std::uint64_t>();
}

int as_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) field_error(path, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < -2147483647 || v > 2147483647) field_error(path, "integer out of range");
  return static_cast<int>(v);
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) field_error(path, "expected a string");
  return j.get<std::string>();
}

std::vector<double> as_doubles(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(as_double(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

std::vector<int> as_ints(const json& j, const std::string& path) {
  if (!j.is_array()) field_error(path, "expected an array of integers");
  std::vector<int> out;
  for (std::size_t i = 0; i < j.size(); ++i)
    out.push_back(as_int(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

Matrix as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) field_error(path, "expected a non-empty array of rows");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < j.size(); ++i) {
    rows.push_back(as_doubles(j[i], path + "[" + std::to_string(i) + "]"));
    if (rows.back().size() != rows.front().size() || rows.back().empty())
      field_error(path, "rows must be non-empty and of equal length");
  }
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
  return m;
}

std::optional<HRange> as_hrange(const json& j, const std::string& path) {
  if (j.is_null()) return std::nullopt;
  const auto v = as_doubles(j, path);
  if (v.size() != 2) field_error(path, "expected null or [h_min, h_max]");
  return HRange{v[0], v[1]};
}

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row_span(r);
    rows.push_back(std::vector<double>(row.begin(), row.end()));
  }
  return rows;
}

// --- config ---------------------------------------------------------------

json noise_json(const NoiseSpec& n) { return {{"mean", n.mean}, {"variance", n.variance}}; }

void apply_noise(const json& j, const std::string& path, NoiseSpec& n) {
  require_object(j, path, {"mean", "variance"});
  if (auto* v = member(j, "mean")) n.mean = as_doubles(*v, join(path, "mean"));
  if (auto* v = member(j, "variance")) n.variance = as_doubles(*v, join(path, "variance"));
  if (n.mean.size() != n.variance.size())
    field_error(path, "mean and variance must have the same length");
}

// Re-dimensions an isotropic default when the configured dimension changed.
void reshape_noise(NoiseSpec& n, std::size_t dim) {
  if (n.dim() == dim) return;
  const double mean = n.mean.empty() ? 0.0 : n.mean.front();
  const double variance = n.variance.empty() ? 0.0 : n.variance.front();
  n = NoiseSpec::isotropic(dim, mean, variance, n.nu);
}

void apply_system(const json& j, const std::string& path, SystemConfig& s) {
  require_object(j, path,
                 {"users", "molecules", "sensors", "alphabet_sizes", "x_max", "channel", "tx_noise",
                  "channel_noise", "rx_noise", "nu_levels"});
  if (auto* v = member(j, "users")) s.users = as_uint(*v, join(path, "users"));
  if (auto* v = member(j, "molecules")) s.molecules = as_uint(*v, join(path, "molecules"));
  if (auto* v = member(j, "sensors")) s.sensors = as_uint(*v, join(path, "sensors"));
  if (auto* v = member(j, "x_max")) s.x_max = as_double(*v, join(path, "x_max"));

  if (auto* v = member(j, "alphabet_sizes"))
    s.alphabet_sizes = as_ints(*v, join(path, "alphabet_sizes"));
  else if (s.alphabet_sizes.size() != s.users && !s.alphabet_sizes.empty())
    s.alphabet_sizes.assign(s.users, s.alphabet_sizes.front());

  if (auto* v = member(j, "channel")) {
    const Matrix m = as_matrix(*v, join(path, "channel"));
    s.channel.diagonals.clear();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row_span(r);
      s.channel.diagonals.emplace_back(row.begin(), row.end());
    }
  } else if (s.channel.users() != s.users || s.channel.diagonals.empty() ||
             s.channel.diagonals.front().size() != s.molecules) {
    const double h = s.channel.diagonals.empty() || s.channel.diagonals.front().empty()
                         ? 0.01
                         : s.channel.diagonals.front().front();
    s.channel = ChannelMatrixSet::uniform(s.users, s.molecules, h);
  }

  reshape_noise(s.tx_noise, s.molecules);
  reshape_noise(s.channel_noise, s.molecules);
  reshape_noise(s.rx_noise, s.sensors);
  if (auto* v = member(j, "tx_noise")) apply_noise(*v, join(path, "tx_noise"), s.tx_noise);
  if (auto* v = member(j, "channel_noise"))
    apply_noise(*v, join(path, "channel_noise"), s.channel_noise);
  if (auto* v = member(j, "rx_noise")) apply_noise(*v, join(path, "rx_noise"), s.rx_noise);
  if (auto* v = member(j, "nu_levels")) s.nu_levels = as_doubles(*v, join(path, "nu_levels"));
}

void apply_sensors(const json& j, const std::string& path, SensorSpec& s) {
  require_object(j, path, {"seed", "z_scale", "h_ref", "gains", "exponents"});
  if (auto* v = member(j, "seed")) s.seed = as_uint(*v, join(path, "seed"));
  if (auto* v = member(j, "z_scale")) s.z_scale = as_double(*v, join(path, "z_scale"));
  if (auto* v = member(j, "h_ref")) s.h_ref = as_double(*v, join(path, "h_ref"));
  if (auto* v = member(j, "gains")) s.gains = as_matrix(*v, join(path, "gains"));
  if (auto* v = member(j, "exponents")) s.exponents = as_matrix(*v, join(path, "exponents"));
}

json train_json(const TrainConfig& t) {
  json j = {{"epochs", t.epochs},
            {"batches_per_epoch", t.batches_per_epoch},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"importance", t.importance},
            {"seed", t.seed}};
  j["h_range"] = t.h_range ? json{t.h_range->lo, t.h_range->hi} : json(nullptr);
  return j;
}

void apply_train(const json& j, const std::string& path, TrainConfig& t) {
  require_object(j, path,
                 {"epochs", "batches_per_epoch", "batch_size", "learning_rate", "importance",
                  "h_range", "seed"});
  if (auto* v = member(j, "epochs")) t.epochs = as_int(*v, join(path, "epochs"));
  if (auto* v = member(j, "batches_per_epoch"))
    t.batches_per_epoch = as_int(*v, join(path, "batches_per_epoch"));
  if (auto* v = member(j, "batch_size")) t.batch_size = as_uint(*v, join(path, "batch_size"));
  if (auto* v = member(j, "learning_rate"))
    t.learning_rate = as_double(*v, join(path, "learning_rate"));
  if (auto* v = member(j, "importance")) t.importance = as_doubles(*v, join(path, "importance"));
  if (auto* v = member(j, "h_range")) t.h_range = as_hrange(*v, join(path, "h_range"));
  if (auto* v = member(j, "seed")) t.seed = as_uint(*v, join(path, "seed"));
}

void apply_evaluation(const json& j, const std::string& path, EvaluationGrids& e) {
  require_object(j, path,
                 {"trials", "aml_samples", "grid_levels", "seed", "nu_grid", "n_list", "h_grid",
                  "ratio_grid", "design_h", "scatter_samples"});
  if (auto* v = member(j, "trials")) e.sweep.trials = as_uint(*v, join(path, "trials"));
  if (auto* v = member(j, "aml_samples"))
    e.sweep.aml_samples = as_uint(*v, join(path, "aml_samples"));
  if (auto* v = member(j, "grid_levels")) e.sweep.grid_levels = as_int(*v, join(path, "grid_levels"));
  if (auto* v = member(j, "seed")) e.sweep.seed = as_uint(*v, join(path, "seed"));
  if (auto* v = member(j, "nu_grid")) e.nu_grid = as_doubles(*v, join(path, "nu_grid"));
  if (auto* v = member(j, "n_list")) e.n_list = as_ints(*v, join(path, "n_list"));
  if (auto* v = member(j, "h_grid")) e.h_grid = as_doubles(*v, join(path, "h_grid"));
  if (auto* v = member(j, "ratio_grid")) e.ratio_grid = as_doubles(*v, join(path, "ratio_grid"));
  if (auto* v = member(j, "design_h")) e.design_h = as_double(*v, join(path, "design_h"));
  if (auto* v = member(j, "scatter_samples"))
    e.scatter_samples = as_uint(*v, join(path, "scatter_samples"));
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

}  // namespace

std::string experiment_config_to_json(const ExperimentConfig& c) {
  const SystemConfig& s = c.system;
  json channel = json::array();
  for (const auto& d : s.channel.diagonals) channel.push_back(d);
  json system = {{"users", s.users},
                 {"molecules", s.molecules},
                 {"sensors", s.sensors},
                 {"alphabet_sizes", s.alphabet_sizes},
                 {"x_max", s.x_max},
                 {"channel", channel},
                 {"tx_noise", noise_json(s.tx_noise)},
                 {"channel_noise", noise_json(s.channel_noise)},
                 {"rx_noise", noise_json(s.rx_noise)},
                 {"nu_levels", s.nu_levels}};
  json sensors = {{"seed", c.sensors.seed},
                  {"z_scale", c.sensors.z_scale},
                  {"h_ref", c.sensors.h_ref}};
  if (c.sensors.gains) sensors["gains"] = matrix_json(*c.sensors.gains);
  if (c.sensors.exponents) sensors["exponents"] = matrix_json(*c.sensors.exponents);
  const EvaluationGrids& e = c.evaluation;
  json evaluation = {{"trials", e.sweep.trials},
                     {"aml_samples", e.sweep.aml_samples},
                     {"grid_levels", e.sweep.grid_levels},
                     {"seed", e.sweep.seed},
                     {"nu_grid", e.nu_grid},
                     {"n_list", e.n_list},
                     {"h_grid", e.h_grid},
                     {"ratio_grid", e.ratio_grid},
                     {"design_h", e.design_h},
                     {"scatter_samples", e.scatter_samples}};
  json j = {{"scenario", c.scenario},
            {"ratio", c.ratio},
            {"system", system},
            {"sensors", sensors},
            {"train", train_json(c.train)},
            {"evaluation", evaluation}};
  return j.dump(2) + "\n";
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& source,
                                         const std::optional<std::string>& scenario_override) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " +
                      (pos == std::string::npos ? what : what.substr(pos)));
  }
  try {
    require_object(j, "", {"scenario", "ratio", "system", "sensors", "train", "evaluation"});
    std::string scenario = "full-csi";
    if (auto* v = member(j, "scenario")) scenario = as_string(*v, "scenario");
    if (scenario_override) scenario = *scenario_override;
    double ratio = 1.0;
    if (auto* v = member(j, "ratio")) ratio = as_double(*v, "ratio");
    ExperimentConfig c = scenario_preset(scenario, 0, ratio);
    if (auto* v = member(j, "system")) apply_system(*v, "system", c.system);
    if (auto* v = member(j, "sensors")) apply_sensors(*v, "sensors", c.sensors);
    if (auto* v = member(j, "train")) apply_train(*v, "train", c.train);
    if (auto* v = member(j, "evaluation")) apply_evaluation(*v, "evaluation", c.evaluation);
    const json* train = member(j, "train");
    if (!train || !member(*train, "importance")) {
      if (c.system.users == 2 && c.scenario == "multi-user")
        set_importance_ratio(c, ratio);
      else if (c.train.importance.size() != c.system.users)
        c.train.importance.assign(c.system.users, 1.0);
    }
    c.validate();
    return c;
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        const std::optional<std::string>& scenario_override) {
  return parse_experiment_config(read_text_file(path), path.string(), scenario_override);
}

// --- weights ---------------------------------------------------------------

std::string model_to_json(const EndToEndModel& model, const ModelMetadata& metadata) {
  json params = json::array();
  for (const auto& e : model.params.entries()) {
    for (double v : e.value.data())
      if (!std::isfinite(v)) throw EvaluationError("parameter " + e.name + " is not finite");
    params.push_back({{"name", e.name},
                      {"rows", e.value.rows()},
                      {"cols", e.value.cols()},
                      {"values", e.value.data()}});
  }
  json transmitters = json::array();
  for (const auto& t : model.transmitters) {
    if (const auto* enc = std::get_if<EncoderNet>(&t)) {
      transmitters.push_back({{"kind", "encoder"},
                              {"symbols", enc->symbols()},
                              {"molecules", enc->molecules()},
                              {"hidden", enc->hidden()},
                              {"x_max", enc->x_max()},
                              {"params",
                               {enc->w1().index, enc->b1().index, enc->w2().index,
                                enc->b2().index}}});
    } else {
      transmitters.push_back(
          {{"kind", "table"}, {"mixtures", matrix_json(std::get<AlphabetTable>(t).mixtures)}});
    }
  }
  const DecoderNet& d = model.decoder;
  json ids = json::array();
  for (const auto& id : d.parameter_ids()) ids.push_back(id.index);
  const BatchNormState& bn = d.norm_state();
  json decoder = {{"sensors", d.sensors()},
                  {"alphabet_sizes", d.alphabet_sizes()},
                  {"hidden", d.hidden()},
                  {"input_scale", d.input_scale()},
                  {"params", ids},
                  {"batchnorm",
                   {{"running_mean", bn.running_mean},
                    {"running_var", bn.running_var},
                    {"momentum", bn.momentum},
                    {"epsilon", bn.epsilon}}}};
  json j = {{"format", "molmix-weights"},
            {"version", 1},
            {"seed", model.seed},
            {"metadata",
             {{"scenario", metadata.scenario},
              {"tag", metadata.tag},
              {"sensor_seed", metadata.sensor_seed}}},
            {"transmitters", transmitters},
            {"decoder", decoder},
            {"params", params}};
  return j.dump(1) + "\n";
}

LoadedModel model_from_json(const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                      ": malformed weights file");
  }
  try {
    require_object(j, "", {"format", "version", "seed", "metadata", "transmitters", "decoder", "params"});
    if (!member(j, "format") || as_string(j["format"], "format") != "molmix-weights")
      field_error("format", "expected \"molmix-weights\"");
    if (!member(j, "version") || as_int(j["version"], "version") != 1)
      field_error("version", "unsupported version");
    for (const char* key : {"seed", "transmitters", "decoder", "params"})
      if (!member(j, key)) field_error(key, "missing");

    LoadedModel out;
    EndToEndModel& m = out.model;
    m.seed = as_uint(j["seed"], "seed");
    if (auto* meta = member(j, "metadata")) {
      require_object(*meta, "metadata", {"scenario", "tag", "sensor_seed"});
      if (auto* v = member(*meta, "scenario")) out.metadata.scenario = as_string(*v, "metadata.scenario");
      if (auto* v = member(*meta, "tag")) out.metadata.tag = as_string(*v, "metadata.tag");
      if (auto* v = member(*meta, "sensor_seed"))
        out.metadata.sensor_seed = as_uint(*v, "metadata.sensor_seed");
    }

    const json& params = j["params"];
    if (!params.is_array()) field_error("params", "expected an array");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::string path = "params[" + std::to_string(i) + "]";
      const json& p = params[i];
      require_object(p, path, {"name", "rows", "cols", "values"});
      for (const char* key : {"name", "rows", "cols", "values"})
        if (!member(p, key)) field_error(join(path, key), "missing");
      Matrix value(as_uint(p["rows"], join(path, "rows")), as_uint(p["cols"], join(path, "cols")));
      const auto values = as_doubles(p["values"], join(path, "values"));
      if (values.size() != value.size()) field_error(join(path, "values"), "length != rows * cols");
      std::copy(values.begin(), values.end(), value.data().begin());
      m.params.add(as_string(p["name"], join(path, "name")), std::move(value));
    }
    auto param_id = [&](const json& v, const std::string& path) {
      const auto index = as_uint(v, path);
      if (index >= m.params.count()) field_error(path, "parameter index out of range");
      return ParamId{static_cast<std::size_t>(index)};
    };

    const json& tx = j["transmitters"];
    if (!tx.is_array() || tx.empty()) field_error("transmitters", "expected a non-empty array");
    for (std::size_t i = 0; i < tx.size(); ++i) {
      const std::string path = "transmitters[" + std::to_string(i) + "]";
      const json& t = tx[i];
      if (!t.is_object() || !member(t, "kind")) field_error(path, "expected an object with a kind");
      const std::string kind = as_string(t["kind"], join(path, "kind"));
      if (kind == "encoder") {
        require_object(t, path, {"kind", "symbols", "molecules", "hidden", "x_max", "params"});
        for (const char* key : {"symbols", "molecules", "hidden", "x_max", "params"})
          if (!member(t, key)) field_error(join(path, key), "missing");
        const json& ids = t["params"];
        if (!ids.is_array() || ids.size() != 4) field_error(join(path, "params"), "expected 4 indices");
        m.transmitters.emplace_back(EncoderNet::bind(
            as_int(t["symbols"], join(path, "symbols")), as_uint(t["molecules"], join(path, "molecules")),
            as_double(t["x_max"], join(path, "x_max")), as_int(t["hidden"], join(path, "hidden")),
            param_id(ids[0], join(path, "params[0]")), param_id(ids[1], join(path, "params[1]")),
            param_id(ids[2], join(path, "params[2]")), param_id(ids[3], join(path, "params[3]"))));
      } else if (kind == "table") {
        require_object(t, path, {"kind", "mixtures"});
        if (!member(t, "mixtures")) field_error(join(path, "mixtures"), "missing");
        m.transmitters.emplace_back(AlphabetTable{as_matrix(t["mixtures"], join(path, "mixtures"))});
      } else {
        field_error(join(path, "kind"), "expected \"encoder\" or \"table\"");
      }
    }

    const json& d = j["decoder"];
    require_object(d, "decoder", {"sensors", "alphabet_sizes", "hidden", "input_scale", "params", "batchnorm"});
    for (const char* key : {"sensors", "alphabet_sizes", "hidden", "input_scale", "params", "batchnorm"})
      if (!member(d, key)) field_error(join("decoder", key), "missing");
    std::vector<ParamId> ids;
    if (!d["params"].is_array() || d["params"].size() != 8)
      field_error("decoder.params", "expected 8 indices");
    for (std::size_t i = 0; i < 8; ++i)
      ids.push_back(param_id(d["params"][i], "decoder.params[" + std::to_string(i) + "]"));
    const json& bnj = d["batchnorm"];
    require_object(bnj, "decoder.batchnorm", {"running_mean", "running_var", "momentum", "epsilon"});
    BatchNormState bn;
    for (const char* key : {"running_mean", "running_var", "momentum", "epsilon"})
      if (!member(bnj, key)) field_error(join("decoder.batchnorm", key), "missing");
    bn.running_mean = as_doubles(bnj["running_mean"], "decoder.batchnorm.running_mean");
    bn.running_var = as_doubles(bnj["running_var"], "decoder.batchnorm.running_var");
    bn.momentum = as_double(bnj["momentum"], "decoder.batchnorm.momentum");
    bn.epsilon = as_double(bnj["epsilon"], "decoder.batchnorm.epsilon");
    m.decoder = DecoderNet::bind(as_uint(d["sensors"], "decoder.sensors"),
                                 as_ints(d["alphabet_sizes"], "decoder.alphabet_sizes"),
                                 as_double(d["input_scale"], "decoder.input_scale"),
                                 as_int(d["hidden"], "decoder.hidden"), std::move(ids), std::move(bn));
    if (m.decoder.alphabet_sizes().size() != m.transmitters.size())
      field_error("decoder.alphabet_sizes", "one entry per transmitter required");
    return out;
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  } catch (const UsageError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

std::string train_report_to_json(const TrainReport& r) {
  json j = {{"seed", r.seed},
            {"steps", r.steps},
            {"wall_seconds", r.wall_seconds},
            {"loss_reduction", r.loss_reduction},
            {"epochs", r.epoch_loss.size()},
            {"epoch_loss", r.epoch_loss},
            {"epoch_user_loss", r.epoch_user_loss},
            {"nu_level_counts", r.nu_level_counts},
            {"config", train_json(r.config)}};
  return j.dump(2) + "\n";
}

// --- alphabets -------------------------------------------------------------

void write_alphabet_csv(std::ostream& out, const std::vector<AlphabetTable>& alphabets) {
  const std::size_t S = alphabets.empty() ? 0 : alphabets.front().molecules();
  out << "user,symbol";
  for (std::size_t m = 0; m < S; ++m) out << ",x" << m + 1;
  out << '\n';
  for (std::size_t i = 0; i < alphabets.size(); ++i) {
    if (alphabets[i].molecules() != S) throw UsageError("alphabets differ in molecule count");
    for (int s = 0; s < alphabets[i].size(); ++s) {
      out << i + 1 << ',' << s;
      for (double v : alphabets[i].mixtures.row_span(static_cast<std::size_t>(s)))
        out << ',' << format_double(v);
      out << '\n';
    }
  }
}

std::vector<AlphabetTable> parse_alphabet_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("user,symbol", 0) != 0)
    throw ConfigError("alphabet csv line 1: expected header 'user,symbol,x1,...'");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 3) throw ConfigError("alphabet csv line 1: no concentration columns");
  std::vector<std::vector<std::vector<double>>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != columns)
      throw ConfigError("alphabet csv line " + std::to_string(lineno) + ": wrong column count");
    try {
      const auto user = std::stoul(f[0]);
      const auto symbol = std::stoul(f[1]);
      if (user < 1) throw std::invalid_argument("user");
      if (rows.size() < user) rows.resize(user);
      if (symbol != rows[user - 1].size()) throw std::invalid_argument("symbol order");
      std::vector<double> x;
      for (std::size_t c = 2; c < columns; ++c) x.push_back(std::stod(f[c]));
      rows[user - 1].push_back(std::move(x));
    } catch (const std::exception&) {
      throw ConfigError("alphabet csv line " + std::to_string(lineno) + ": malformed row");
    }
  }
  std::vector<AlphabetTable> out;
  for (const auto& user_rows : rows) {
    AlphabetTable t{Matrix(user_rows.size(), columns - 2)};
    for (std::size_t s = 0; s < user_rows.size(); ++s)
      std::copy(user_rows[s].begin(), user_rows[s].end(), t.mixtures.row_span(s).begin());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace molmix
