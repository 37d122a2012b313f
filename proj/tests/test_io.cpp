#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "molmix/io.hpp"

using namespace molmix;

namespace {

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

std::string config_error(const std::string& text) {
  try {
    parse_experiment_config(text, "cfg.json");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("weights round-trip bit-exactly") {
  ExperimentConfig c = scenario_preset("multi-user", 0, 3.0);
  c.train.epochs = 2;
  TrainedModel t = train_scenario(c);
  const std::string text = model_to_json(t.model, {"multi-user", "ratio-3", 11});
  const LoadedModel back = model_from_json(text);
  CHECK(back.metadata.tag == "ratio-3");
  CHECK(back.metadata.sensor_seed == 11);
  REQUIRE(back.model.params.count() == t.model.params.count());
  for (std::size_t i = 0; i < t.model.params.count(); ++i) {
    CHECK(back.model.params.entries()[i].name == t.model.params.entries()[i].name);
    CHECK(back.model.params.entries()[i].value == t.model.params.entries()[i].value);
  }
  CHECK(back.model.decoder.norm_state().running_var ==
        t.model.decoder.norm_state().running_var);
  CHECK(back.model.alphabets() == t.model.alphabets());
  CHECK(model_to_json(back.model, back.metadata) == text);

  const Matrix z(3, 3, 1.2e-5);
  CHECK(back.model.decoder.decode(back.model.params, z) ==
        t.model.decoder.decode(t.model.params, z));
}

TEST_CASE("fixed-table models round-trip") {
  SystemConfig s;
  s.alphabet_sizes = {2};
  const EndToEndModel m =
      make_fixed_transmitter_model(s, {AlphabetTable{Matrix{{0, 0, 0}, {1.0 / 3.0, 2e4, 7}}}}, 1e5, 5);
  const LoadedModel back = model_from_json(model_to_json(m));
  CHECK(back.model.alphabets() == m.alphabets());
  CHECK(back.model.seed == 5);
}

TEST_CASE("corrupted weights are rejected") {
  SystemConfig s;
  const EndToEndModel m = make_autoencoder(s, 1e5, 1);
  std::string text = model_to_json(m);
  CHECK_THROWS_AS(model_from_json("{}"), ConfigError);
  CHECK_THROWS_AS(model_from_json("not json"), ConfigError);
  const auto pos = text.find("\"molmix-weights\"");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 16, "\"other-format\"");
  CHECK_THROWS_AS(model_from_json(text), ConfigError);
}

TEST_CASE("configs round-trip for every scenario") {
  for (const auto& name : scenario_names()) {
    const ExperimentConfig c = scenario_preset(name);
    const std::string text = experiment_config_to_json(c);
    const ExperimentConfig back = parse_experiment_config(text, "x");
    CHECK(experiment_config_to_json(back) == text);
  }
}

TEST_CASE("partial configs overlay the scenario preset") {
  const ExperimentConfig c = parse_experiment_config(
      R"({"scenario": "h-lim", "train": {"epochs": 7}, "system": {"alphabet_sizes": [12]}})", "x");
  CHECK(c.train.epochs == 7);
  CHECK(c.train.h_range == HRange{0.01, 0.03});
  CHECK(c.system.alphabet_sizes == std::vector<int>{12});
  const ExperimentConfig m = parse_experiment_config(R"({"scenario": "multi-user", "ratio": 10})", "x");
  CHECK(m.train.importance[1] == doctest::Approx(10.0 * m.train.importance[0]));
}

TEST_CASE("config errors name the field or the position") {
  CHECK(contains(config_error(R"({"train": {"epochs": "many"}})"), "field 'train.epochs'"));
  CHECK(contains(config_error(R"({"system": {"colour": 1}})"), "field 'system.colour'"));
  CHECK(contains(config_error(R"({"evaluation": {"trials": -4}})"), "evaluation.trials"));
  const std::string syntax = config_error("{\n  \"train\": {\n    \"epochs\": 3,\n  }\n}");
  CHECK(contains(syntax, "cfg.json:4:"));
  CHECK(contains(syntax, "syntax error"));
  CHECK(contains(config_error(R"({"scenario": "nowhere"})"), "unknown scenario"));
  CHECK(contains(config_error(R"({"system": {"x_max": -1}})"), "x_max"));
}

TEST_CASE("missing files are reported as missing artifacts") {
  CHECK_THROWS_AS(read_text_file("/nonexistent/dir/model.json"), MissingArtifactError);
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), MissingArtifactError);
}

TEST_CASE("alphabet tables round-trip through CSV") {
  const std::vector<AlphabetTable> tables{AlphabetTable{Matrix{{0.1, 2e4, 0}, {1.0 / 7.0, 5, 6}}},
                                          AlphabetTable{Matrix{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}}}};
  std::stringstream ss;
  write_alphabet_csv(ss, tables);
  CHECK(ss.str().rfind("user,symbol,x1,x2,x3\n1,0,", 0) == 0);
  CHECK(parse_alphabet_csv(ss) == tables);
}

TEST_CASE("files are written with parent directories") {
  const auto dir = std::filesystem::temp_directory_path() / "molmix-io-test";
  std::filesystem::remove_all(dir);
  write_text_file(dir / "a" / "b.txt", "hello\n");
  CHECK(read_text_file(dir / "a" / "b.txt") == "hello\n");
  std::filesystem::remove_all(dir);
}
