#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "molmix/baselines.hpp"
#include "molmix/evaluation.hpp"
#include "molmix/io.hpp"
#include "molmix/log.hpp"
#include "molmix/scenarios.hpp"

namespace py = pybind11;
using namespace molmix;

namespace {

std::vector<std::vector<double>> rows(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row_span(r).begin(), m.row_span(r).end());
  return out;
}

Matrix from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return {};
  Matrix m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw ConfigError("ragged matrix");
    std::copy(rows[r].begin(), rows[r].end(), m.row_span(r).begin());
  }
  return m;
}

/// A trained or loaded model together with the config it belongs to.
struct PyModel {
  ExperimentConfig config;
  EndToEndModel model;
  TrainReport report;
};

py::dict record_dict(const SerRecord& r) {
  py::dict d;
  d["ser"] = r.ser;
  d["ser_ci95"] = r.ser_ci95;
  d["sser"] = r.sser;
  d["ci95"] = r.ci95;
  d["trials"] = r.trials;
  d["nu"] = r.nu;
  d["h_lo"] = r.h_lo;
  d["h_hi"] = r.h_hi;
  return d;
}

}  // namespace

PYBIND11_MODULE(_molmix, m) {
  m.doc() = "Molecule-mixture communication autoencoders";
  set_log_level(LogLevel::kWarning);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", PyExc_FileNotFoundError);
  py::register_exception<TrainingError>(m, "TrainingError", PyExc_RuntimeError);
  py::register_exception<EvaluationError>(m, "EvaluationError", PyExc_RuntimeError);
  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);

  m.def("scenario_names", &scenario_names);
  m.def("default_nu_levels", &default_nu_levels);
  m.def("wilson_half_width", &wilson_half_width, py::arg("errors"), py::arg("trials"),
        py::arg("z") = kWilsonZ);

  m.def(
      "preset_config",
      [](const std::string& scenario, int n, double ratio) {
        return experiment_config_to_json(scenario_preset(scenario, n, ratio));
      },
      py::arg("scenario") = "full-csi", py::arg("n") = 0, py::arg("ratio") = 1.0,
      "Scenario preset as JSON text");

  py::class_<SensorArray>(m, "SensorArray")
      .def(py::init([](const std::vector<std::vector<double>>& gains,
                       const std::vector<std::vector<double>>& exponents) {
             return SensorArray(from_rows(gains), from_rows(exponents));
           }),
           py::arg("gains"), py::arg("exponents"))
      .def_property_readonly("gains", [](const SensorArray& s) { return rows(s.gains()); })
      .def_property_readonly("exponents", [](const SensorArray& s) { return rows(s.exponents()); })
      .def("respond", [](const SensorArray& s, const std::vector<double>& y) { return s.respond(y); });

  m.def(
      "generate_sensors",
      [](std::size_t molecules, std::size_t sensors, std::uint64_t seed, double z_scale,
         double h_ref, double x_max) {
        return generate_array(molecules, sensors, seed, z_scale, h_ref, x_max);
      },
      py::arg("molecules"), py::arg("sensors"), py::arg("seed"), py::arg("z_scale") = 1e-5,
      py::arg("h_ref") = 0.01, py::arg("x_max") = 2e4);

  m.def(
      "csk_alphabet",
      [](std::size_t molecules, double x_max, std::size_t molecule) {
        return rows(csk_alphabet(molecules, x_max, molecule).table.mixtures);
      },
      py::arg("molecules"), py::arg("x_max"), py::arg("molecule"));
  m.def(
      "gmosk_alphabet",
      [](std::size_t molecules, double x_max, std::size_t first, std::size_t second) {
        return rows(gmosk_alphabet(molecules, x_max, first, second).table.mixtures);
      },
      py::arg("molecules"), py::arg("x_max"), py::arg("first"), py::arg("second"));
  m.def(
      "mda_alphabet",
      [](const std::string& config_json, int symbols) {
        const ExperimentConfig c = parse_experiment_config(config_json, "<config>");
        const SensorArray s = c.sensors.build(c.system);
        const Matrix grid =
            candidate_grid(c.system.molecules, c.system.x_max, c.evaluation.sweep.grid_levels);
        return rows(mda_build(grid, symbols, c.system, s).mixtures);
      },
      py::arg("config_json"), py::arg("symbols"));

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        const GradCheckResult r = gradcheck_system(seed);
        py::dict d;
        d["coordinates"] = r.coordinates;
        d["kink_straddles"] = r.kink_straddles;
        d["max_relative_error"] = r.max_relative_error;
        d["fraction_below_tight"] = r.fraction_below_tight;
        return d;
      },
      py::arg("seed"));

  py::class_<PyModel>(m, "Model")
      .def_property_readonly("config_json",
                             [](const PyModel& p) { return experiment_config_to_json(p.config); })
      .def_property_readonly("epoch_loss", [](const PyModel& p) { return p.report.epoch_loss; })
      .def("alphabets",
           [](const PyModel& p) {
             std::vector<std::vector<std::vector<double>>> out;
             for (const auto& a : p.model.alphabets()) out.push_back(rows(a.mixtures));
             return out;
           })
      .def("to_json", [](const PyModel& p) { return model_to_json(p.model); })
      .def(
          "decode",
          [](const PyModel& p, const std::vector<std::vector<double>>& z) {
            std::vector<std::vector<std::vector<double>>> out;
            for (const Matrix& probs : p.model.decoder.decode(p.model.params, from_rows(z)))
              out.push_back(rows(probs));
            return out;
          },
          py::arg("z"), "Per-user symbol probabilities for rows of sensor outputs")
      .def(
          "evaluate",
          [](const PyModel& p, double nu, std::size_t trials, std::uint64_t seed,
             std::optional<std::pair<double, double>> h) {
            const SensorArray s = p.config.sensors.build(p.config.system);
            EvalPoint point{nu, std::nullopt};
            if (h) {
              point.h = HRange{h->first, h->second};
              point.h->validate();
            }
            SerRecord r;
            {
              py::gil_scoped_release release;
              r = estimate_ser(p.model.alphabets(), DecoderDetector(p.model), p.config.system, s,
                               point, trials, seed, 0);
            }
            return record_dict(r);
          },
          py::arg("nu") = 1.0, py::arg("trials") = 100000, py::arg("seed") = 1,
          py::arg("h") = py::none());

  m.def(
      "train",
      [](const std::string& config_json) {
        const ExperimentConfig c = parse_experiment_config(config_json, "<config>");
        TrainedModel t;
        {
          py::gil_scoped_release release;
          t = train_scenario(c);
        }
        return PyModel{t.config, std::move(t.model), std::move(t.report)};
      },
      py::arg("config_json"), "Trains the model described by a JSON config");
  m.def(
      "load_model",
      [](const std::string& config_json, const std::string& weights_json) {
        const ExperimentConfig c = parse_experiment_config(config_json, "<config>");
        return PyModel{c, model_from_json(weights_json, "<weights>").model, {}};
      },
      py::arg("config_json"), py::arg("weights_json"));
}
