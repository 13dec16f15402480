#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "eatta/commands.hpp"
#include "eatta/error.hpp"

namespace py = pybind11;
using namespace eatta;

namespace {

RunConfig config_from(const std::string& text, std::optional<std::uint64_t> seed) {
  RunConfig c = parse_config(text);
  if (seed) c.seed = *seed;
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bindings for the eatta library";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<OracleError>(m, "OracleError", base.ptr());

  m.def("preset_names", &preset_names);
  m.def("preset_text", [](const std::string& name) { return preset_text(name); });
  m.def(
      "canonical_config", [](const std::string& text) { return serialize_config(config_from(text, std::nullopt)); },
      "Validated config in canonical form.");

  m.def(
      "run_json",
      [](const std::string& text, std::optional<std::uint64_t> seed) {
        const RunConfig c = config_from(text, seed);
        py::gil_scoped_release release;
        return report_json_text(run_config(c));
      },
      py::arg("config"), py::arg("seed") = py::none(), "One episode; returns the report as JSON text.");
  m.def(
      "ablate_json",
      [](const std::string& text) {
        const RunConfig c = config_from(text, std::nullopt);
        py::gil_scoped_release release;
        return run_ablation(c).to_json().dump();
      },
      py::arg("config"));
  m.def(
      "toy_json",
      [](const std::string& text) {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : run_toy(config_from(text, std::nullopt))) j.push_back(r.to_json());
        return j.dump();
      },
      py::arg("config"));
  m.def(
      "gradcheck_json",
      [](int trials, std::uint64_t seed, bool corrupt) {
        GradcheckOptions o;
        o.trials = trials;
        o.seed = seed;
        o.corrupt_gradient = corrupt;
        return run_gradcheck(o).to_json().dump();
      },
      py::arg("trials") = 200, py::arg("seed") = 0, py::arg("corrupt_gradient") = false);

  m.def("debias_weights", &debias_weights, py::arg("norm_sup"), py::arg("norm_unsup"));
  m.def(
      "ema",
      [](double alpha, std::pair<double, double> prev, std::pair<double, double> raw) {
        DebiasState s;
        s.alpha = alpha;
        s.gamma1 = prev.first;
        s.gamma2 = prev.second;
        ema_update(s, raw);
        return std::make_pair(s.gamma1, s.gamma2);
      },
      py::arg("alpha"), py::arg("prev"), py::arg("raw"));

  py::class_<Model>(m, "Model")
      .def_static(
          "init",
          [](int input_dim, std::vector<int> hidden, int num_classes, std::uint64_t seed) {
            return Model::init({input_dim, std::move(hidden), num_classes}, seed);
          },
          py::arg("input_dim"), py::arg("hidden"), py::arg("num_classes"), py::arg("seed") = 0)
      .def_static(
          "load", [](const std::string& path) { return read_snapshot_file(path).model; }, py::arg("path"))
      .def_property_readonly("arch", [](const Model& m) { return m.arch().to_string(); })
      .def_property_readonly("num_params", &Model::num_params)
      .def_property_readonly("num_trainable", &Model::num_trainable)
      .def("trainable_params", &Model::trainable_params)
      .def("set_trainable_params",
           [](Model& m, const std::vector<double>& v) { m.set_trainable_params(v); })
      .def(
          "predict_proba",
          [](const Model& m, const Matrix& x, bool source_stats) {
            return Matrix(forward(m, x, source_stats ? NormMode::source_stats : NormMode::batch_stats).probs);
          },
          py::arg("x"), py::arg("source_stats") = false);
}
