// pybind11 module exposing the toolkit's core operations. Configuration and
// reports cross the boundary as JSON text; the Python wrapper decodes them.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <string>
#include <vector>

#include "mlml/commands.hpp"
#include "mlml/config.hpp"
#include "mlml/error.hpp"
#include "mlml/eval.hpp"
#include "mlml/losses.hpp"
#include "mlml/model.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

mlml::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw mlml::DimensionError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return mlml::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const mlml::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

std::vector<mlml::LabelSet> to_label_sets(const std::vector<std::vector<int>>& labels,
                                          int label_count) {
  std::vector<mlml::LabelSet> out;
  out.reserve(labels.size());
  for (const auto& l : labels) out.push_back(mlml::LabelSet::make(l, label_count));
  return out;
}

int label_count_of(const std::vector<std::vector<int>>& labels) {
  int l = 0;
  for (const auto& ls : labels)
    for (int k : ls) l = std::max(l, k + 1);
  return l;
}

mlml::RunConfig run_config(const std::string& config_json) {
  if (config_json.empty()) return mlml::parse_run_config(json::object());
  json j;
  try {
    j = json::parse(config_json);
  } catch (const json::parse_error& e) {
    throw mlml::ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return mlml::parse_run_config(j);
}

class Model {
 public:
  explicit Model(const std::filesystem::path& path) : ckpt_(mlml::load_checkpoint(path)) {}

  Array embed(const Array& x) const { return to_array(ckpt_.model.embed_all(to_matrix(x))); }
  std::string metadata() const { return ckpt_.metadata.dump(); }
  std::size_t input_dim() const { return ckpt_.model.config().input_dim; }
  std::size_t embedding_dim() const { return ckpt_.model.config().embedding_dim; }

 private:
  mlml::LoadedCheckpoint ckpt_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-label metric learning core";

  auto base = py::register_exception<mlml::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<mlml::ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<mlml::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<mlml::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<mlml::ContractError>(m, "ContractError", base.ptr());
  py::register_exception<mlml::TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<mlml::SamplingError>(m, "SamplingError", base.ptr());
  py::register_exception<mlml::EvaluationError>(m, "EvaluationError", base.ptr());
  py::register_exception<mlml::DegenerateInputError>(m, "DegenerateInputError", base.ptr());

  m.def("default_config", [] { return mlml::to_json(mlml::default_run_config()).dump(); });

  m.def(
      "gen_data",
      [](const std::string& config_json, const std::filesystem::path& out_dir) {
        mlml::cmd_gen_data(run_config(config_json), out_dir);
      },
      py::arg("config_json"), py::arg("out_dir"));

  m.def(
      "train",
      [](const std::string& config_json) {
        const auto cfg = run_config(config_json);
        json report;
        {
          py::gil_scoped_release release;
          report = mlml::to_json(mlml::cmd_train(cfg).report);
        }
        return report.dump();
      },
      py::arg("config_json"));

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& data_dir,
         std::uint64_t seed) {
        mlml::EvalOptions opts;
        opts.seed = seed;
        return mlml::to_json(mlml::cmd_eval(checkpoint, data_dir, opts)).dump();
      },
      py::arg("checkpoint"), py::arg("data_dir"), py::arg("seed") = 1);

  py::class_<Model>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("path"))
      .def("embed", &Model::embed, py::arg("features"))
      .def("metadata_json", &Model::metadata)
      .def_property_readonly("input_dim", &Model::input_dim)
      .def_property_readonly("embedding_dim", &Model::embedding_dim);

  m.def("overlap_tau", [](const std::vector<int>& a, const std::vector<int>& b) {
    const int l = label_count_of({a, b});
    return mlml::overlap_tau(mlml::LabelSet::make(a, l), mlml::LabelSet::make(b, l));
  });

  m.def(
      "nmi",
      [](const std::vector<int>& pred, const std::vector<int>& truth) {
        auto part = [](const std::vector<int>& a) {
          mlml::Partition p;
          p.assignment = a;
          for (int v : a) p.k = std::max(p.k, v + 1);
          return p;
        };
        return mlml::nmi(part(pred), part(truth));
      },
      py::arg("pred"), py::arg("truth"));

  m.def(
      "kmeans",
      [](const Array& points, int k, std::uint64_t seed) {
        const auto r = mlml::kmeans(to_matrix(points), k, seed);
        return py::make_tuple(r.partition.assignment, r.objective_history);
      },
      py::arg("points"), py::arg("k"), py::arg("seed") = 1);

  m.def(
      "recall_at_k",
      [](const Array& embeddings, const std::vector<std::vector<int>>& labels, int k) {
        return mlml::recall_at_k(to_matrix(embeddings),
                                 to_label_sets(labels, label_count_of(labels)), k);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("k"));

  m.def(
      "project_2d",
      [](const Array& points) {
        const auto p = mlml::project_2d(to_matrix(points));
        return py::make_tuple(to_array(p.coords), p.explained_variance_ratio, p.degenerate);
      },
      py::arg("points"));
}
