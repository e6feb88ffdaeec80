// Python bindings: metrics, sparsemax, config loading and one design run.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tabvfl/cli/run_config.hpp"
#include "tabvfl/data/prepared.hpp"
#include "tabvfl/data/table.hpp"
#include "tabvfl/errors.hpp"
#include "tabvfl/eval/experiment.hpp"
#include "tabvfl/eval/metrics.hpp"
#include "tabvfl/nn/layers.hpp"

namespace py = pybind11;
using namespace tabvfl;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

nn::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-d array");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return nn::Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const nn::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.storage().begin(), m.storage().end(), out.mutable_data());
  return out;
}

py::dict row_dict(const eval::MetricsRow& r) {
  py::dict d;
  d["design"] = r.design;
  d["dataset"] = r.dataset;
  d["seed"] = r.seed;
  d["probe"] = r.probe;
  d["accuracy"] = r.accuracy;
  d["f1"] = r.f1;
  d["roc_auc"] = r.roc_auc;
  d["runtime_s"] = r.runtime_s;
  d["bytes_sent"] = r.bytes_sent;
  d["bytes_received"] = r.bytes_received;
  return d;
}

}  // namespace

PYBIND11_MODULE(_tabvfl, m) {
  m.doc() = "TabVFL core bindings";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def(
      "metrics",
      [](std::vector<int> truth, const Array& probabilities) {
        const auto met = eval::compute_metrics(truth, to_matrix(probabilities));
        py::dict d;
        d["accuracy"] = met.accuracy;
        d["f1"] = met.f1;
        d["roc_auc"] = met.roc_auc;
        d["warnings"] = met.warnings;
        return d;
      },
      py::arg("truth"), py::arg("probabilities"));

  m.def(
      "sparsemax", [](const Array& z) { return to_array(nn::sparsemax(to_matrix(z))); }, py::arg("z"));

  m.def(
      "resolved_config",
      [](const std::filesystem::path& path) { return cli::load_run_config(path).resolved().dump(); },
      py::arg("path"));

  // Prepares the dataset named by the config in memory, trains one design
  // and returns the probe rows.
  m.def(
      "run_design",
      [](const std::filesystem::path& config, const std::string& design, std::uint64_t seed) {
        const auto rc = cli::load_run_config(config);
        const auto schema = data::load_schema(rc.schema);
        const auto prepared = data::prepare_dataset(data::load_csv(rc.csv, schema), rc.prepare);
        eval::DesignRun run;
        {
          py::gil_scoped_release release;
          run = eval::run_design(rc.spec, prepared, protocol::parse_design(design), seed);
        }
        py::list rows;
        for (const auto& r : run.rows) rows.append(row_dict(r));
        return rows;
      },
      py::arg("config"), py::arg("design") = "TabVFL", py::arg("seed") = 0);
}
