#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "trunet/cli/app.hpp"
#include "trunet/errors.hpp"
#include "trunet/grad_suite.hpp"
#include "trunet/io/checkpoint.hpp"
#include "trunet/io/synth.hpp"
#include "trunet/metrics/metrics.hpp"
#include "trunet/model/model.hpp"
#include "trunet/train/trainer.hpp"

namespace py = pybind11;
using namespace trunet;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor<float> to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<float>(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor<float>& t) {
  FloatArray out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

// Float model plus its parameters.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed) : model_(config), params_(model_.init(seed)) {}
  Model(const ModelConfig& config, ParameterStore<float> params) : model_(config), params_(std::move(params)) {}

  static Model load(const std::filesystem::path& path) {
    auto ck = load_checkpoint<float>(path);
    return Model(ck.config, std::move(ck.params));
  }

  const ModelConfig& config() const { return model_.config(); }
  std::int64_t param_count() const { return params_.scalar_count(); }
  std::vector<std::string> names() const { return params_.names(); }
  FloatArray get(const std::string& name) const { return to_array(params_.at(name)); }
  void save(const std::filesystem::path& path) const { save_checkpoint(params_, model_.config(), path); }

  FloatArray predict(const FloatArray& images) const {
    Tensor<float> x = to_tensor(images);
    if (x.rank() == 3) x = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
    Tensor<float> p;
    {
      py::gil_scoped_release release;
      p = trunet::predict(model_, params_, x);
    }
    return to_array(p);
  }

 private:
  TransResUNet<float> model_;
  ParameterStore<float> params_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "TransResU-Net segmentation core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<ChecksumError>(m, "ChecksumError", PyExc_RuntimeError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_static("full", &ModelConfig::full)
      .def_static("tiny", &ModelConfig::tiny)
      .def_readwrite("width_mult", &ModelConfig::width_mult)
      .def_readwrite("stage_depths", &ModelConfig::stage_depths)
      .def_readwrite("use_transformer", &ModelConfig::use_transformer)
      .def_readwrite("use_dilated", &ModelConfig::use_dilated)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("ffn_ratio", &ModelConfig::ffn_ratio)
      .def_readwrite("input_size", &ModelConfig::input_size)
      .def_readwrite("max_tokens", &ModelConfig::max_tokens)
      .def("validate", &ModelConfig::validate)
      .def("to_text", &ModelConfig::to_text)
      .def_static("from_text", &ModelConfig::from_text)
      .def("__eq__", [](const ModelConfig& a, const ModelConfig& b) { return a == b; })
      .def("__repr__", [](const ModelConfig& c) { return "ModelConfig(" + c.to_text() + ")"; });

  m.def("param_count", &param_count, py::arg("config"));

  py::class_<Model>(m, "Model")
      .def(py::init<const ModelConfig&, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_static("load", &Model::load, py::arg("path"))
      .def_property_readonly("config", &Model::config)
      .def_property_readonly("param_count", &Model::param_count)
      .def("names", &Model::names)
      .def("parameter", &Model::get, py::arg("name"))
      .def("save", &Model::save, py::arg("path"))
      .def("predict", &Model::predict, py::arg("images"),
           "Probabilities (N,1,S,S) for float images (N,3,S,S) or (3,S,S) in [0,1].");

  m.def(
      "synth_dataset",
      [](int n, int size, std::uint64_t seed) {
        py::list out;
        for (const auto& s : synth_dataset(n, size, seed)) out.append(py::make_tuple(s.id, to_array(s.image), to_array(s.mask)));
        return out;
      },
      py::arg("n"), py::arg("size"), py::arg("seed") = 0, "List of (id, image (3,S,S), mask (1,S,S)).");

  py::class_<ConfusionCounts>(m, "ConfusionCounts")
      .def_readonly("tp", &ConfusionCounts::tp)
      .def_readonly("fp", &ConfusionCounts::fp)
      .def_readonly("tn", &ConfusionCounts::tn)
      .def_readonly("fn", &ConfusionCounts::fn);

  m.def(
      "confusion",
      [](const FloatArray& pred, const FloatArray& mask) { return confusion(to_tensor(pred), to_tensor(mask)); },
      py::arg("pred"), py::arg("mask"));
  m.def(
      "metrics",
      [](std::int64_t tp, std::int64_t fp, std::int64_t tn, std::int64_t fn) {
        const MetricSet s = compute_metrics({tp, fp, tn, fn});
        py::dict d;
        d["dsc"] = s.dsc;
        d["iou"] = s.iou;
        d["recall"] = s.recall;
        d["precision"] = s.precision;
        d["accuracy"] = s.accuracy;
        d["f2"] = s.f2;
        return d;
      },
      py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));

  m.def(
      "gradcheck",
      [](const std::string& scope, std::uint64_t seed) {
        std::vector<GradCase> cases;
        {
          py::gil_scoped_release release;
          cases = run_grad_suite(parse_grad_scope(scope), seed);
        }
        py::list out;
        for (const auto& c : cases) {
          out.append(py::make_tuple(c.name, c.result.max_rel_error, c.tolerance, c.passed()));
        }
        return out;
      },
      py::arg("scope"), py::arg("seed") = 0, "List of (case, max_rel_error, tolerance, passed).");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args, const std::map<std::string, std::string>& env) {
        std::ostringstream out, err;
        const int code = run_cli(args, env, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), py::arg("env") = std::map<std::string, std::string>{},
      "Runs the command line tool in process; returns (exit_code, stdout, stderr).");
}
