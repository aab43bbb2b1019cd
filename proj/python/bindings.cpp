#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "couplab/chain.hpp"
#include "couplab/config.hpp"
#include "couplab/diagnostics.hpp"
#include "couplab/errors.hpp"
#include "couplab/metric.hpp"
#include "couplab/runner.hpp"
#include "couplab/sdde.hpp"
#include "couplab/testbed.hpp"
#include "couplab/transport.hpp"

namespace py = pybind11;
using namespace couplab;

namespace {

py::dict report_dict(const ConvergenceReport& r) {
  py::dict d;
  d["quantity"] = r.quantity;
  d["hypothesis"] = r.hypothesis;
  d["verdict"] = std::string(to_string(r.verdict));
  d["margin"] = r.margin;
  d["statistics"] = r.statistics;
  d["tolerances"] = r.tolerances;
  d["notes"] = r.notes;
  d["columns"] = r.columns;
  d["rows"] = r.rows;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Coupling diagnostics for Markov chains and delay equations";
  m.attr("__version__") = std::string(library_version());

  // Base first: translators are tried in reverse registration order.
  static py::exception<Error> base(m, "CouplabError", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<ResourceError>(m, "ResourceError", base.ptr());
  py::register_exception<SolverError>(m, "SolverError", base.ptr());
  py::register_exception<SimulationError>(m, "SimulationError", base.ptr());
  py::register_exception<IntegrationError>(m, "IntegrationError", base.ptr());
  py::register_exception<ModelError>(m, "ModelError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());

  py::class_<DiscreteMeasure>(m, "DiscreteMeasure")
      .def(py::init<std::vector<Point>, std::vector<double>>(), py::arg("points"), py::arg("weights"))
      .def_static("dirac", &DiscreteMeasure::dirac, py::arg("point"))
      .def_static("uniform", &DiscreteMeasure::uniform, py::arg("points"))
      .def_property_readonly("points", &DiscreteMeasure::points)
      .def_property_readonly("weights", &DiscreteMeasure::weights)
      .def("__len__", &DiscreteMeasure::size);

  py::class_<Metric>(m, "Metric")
      .def_readonly("name", &Metric::name)
      .def_readonly("bound", &Metric::bound)
      .def("__call__", &Metric::operator(), py::arg("a"), py::arg("b"));
  m.def("metric", &metric_by_name, py::arg("name"), py::arg("dim") = 1,
        "Built-in metric by name: euclidean, euclidean-truncated, torus-1d, torus-product-flip, discrete, sup-norm-on-segment.");

  m.def("total_variation", &total_variation, py::arg("mu"), py::arg("nu"));
  m.def(
      "minimal_distance",
      [](const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& base) {
        auto [value, plan] = minimal_distance(mu, nu, cost_from_metric(base.bound <= 1.0 ? base : truncated(base)));
        return py::make_tuple(value, plan.weights());
      },
      py::arg("mu"), py::arg("nu"), py::arg("metric"), "Optimal cost and plan for the cost min(d, 1).");
  m.def(
      "discrete_minimal_distance",
      [](const DiscreteMeasure& mu, const DiscreteMeasure& nu) { return minimal_distance(mu, nu, discrete_cost()).first; },
      py::arg("mu"), py::arg("nu"));
  m.def(
      "max_closeness",
      [](const DiscreteMeasure& mu, const DiscreteMeasure& nu, const Metric& d, double eps) {
        return max_closeness(mu, nu, d, eps).first;
      },
      py::arg("mu"), py::arg("nu"), py::arg("metric"), py::arg("eps"));
  m.def(
      "solve_transport",
      [](const Eigen::VectorXd& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& cost) {
        const TransportSolution s = solve_transport(a, b, cost);
        return py::make_tuple(s.value, s.plan);
      },
      py::arg("a"), py::arg("b"), py::arg("cost"));

  py::class_<FiniteChain>(m, "FiniteChain")
      .def(py::init<std::vector<Point>, Eigen::MatrixXd, std::vector<std::string>>(), py::arg("points"),
           py::arg("matrix"), py::arg("labels") = std::vector<std::string>{})
      .def_property_readonly("points", &FiniteChain::points)
      .def_property_readonly("matrix", &FiniteChain::matrix)
      .def("__len__", &FiniteChain::size)
      .def(
          "n_step_matrix", [](const FiniteChain& c, std::size_t n) { return c.n_step_matrix(n); }, py::arg("n"))
      .def(
          "invariant",
          [](const FiniteChain& c) {
            const InvariantResult r = invariant_measure(c);
            return py::make_tuple(r.weights, r.unique);
          },
          "Invariant weights and whether the invariant law is unique.");

  m.def(
      "gamma",
      [](const FiniteChain& chain, const Metric& d, std::size_t x, std::size_t y, std::size_t n, double eps) {
        return gamma(chain, d, x, y, n, eps);
      },
      py::arg("chain"), py::arg("metric"), py::arg("x"), py::arg("y"), py::arg("n"), py::arg("eps"));
  m.def(
      "big_gamma",
      [](const FiniteChain& chain, const Metric& d, std::size_t n, double eps) {
        return big_gamma(chain, d, invariant_measure(chain).measure, n, eps).value;
      },
      py::arg("chain"), py::arg("metric"), py::arg("n"), py::arg("eps"), "Gamma^{n,eps} under the invariant law.");

  m.def(
      "instance",
      [](const std::string& id, const InstanceParams& params) {
        ExampleInstance inst = build_instance(id, params);
        py::dict d;
        d["id"] = inst.id;
        d["anchor"] = inst.anchor;
        d["title"] = inst.title;
        d["expected"] = inst.expected;
        d["params"] = inst.params;
        d["chain"] = inst.chain ? py::cast(*inst.chain) : py::none();
        d["metric"] = inst.metric.d;
        py::list outcomes;
        for (const AssertionOutcome& a : inst.run_assertions()) outcomes.append(py::make_tuple(a.description, a.passed, a.detail));
        d["assertions"] = outcomes;
        return d;
      },
      py::arg("id"), py::arg("params") = InstanceParams{}, "Builds a catalog instance and runs its assertions.");
  m.def("catalog", [] {
    std::vector<std::string> ids;
    for (const CatalogEntry& e : instance_catalog()) ids.push_back(e.id);
    return ids;
  });
  m.def("list_experiments", &list_experiments);

  m.def(
      "run_config",
      [](const std::string& text, std::optional<std::string> output_dir) {
        RunOverrides o;
        o.output_dir = std::move(output_dir);
        const RunResult r = run_experiment(parse_config(text), o);
        py::dict d = report_dict(r.report);
        d["exit_code"] = r.exit_code();
        d["output_dir"] = r.output_dir.string();
        d["files"] = r.files;
        return d;
      },
      py::arg("config_json"), py::arg("output_dir") = py::none(), "Runs a JSON config and writes its artifacts.");
  m.def(
      "validate_config", [](const std::string& text) { validate_config(parse_config(text)); }, py::arg("config_json"));

  m.def(
      "integrate_pair",
      [](const std::string& model, const std::map<std::string, double>& params, double x0, double y0, double lambda,
         double T, double dt, std::uint64_t seed) {
        const SfdeSpec spec = sfde_model(model, params);
        const auto K = static_cast<std::size_t>(std::llround(1.0 / dt));
        const auto dim = static_cast<Eigen::Index>(spec.dim);
        const PairPath p = integrate_pair(spec, SegmentState::constant(K, Eigen::VectorXd::Constant(dim, x0)),
                                          SegmentState::constant(K, Eigen::VectorXd::Constant(dim, y0)), lambda, T, dt,
                                          seed);
        py::dict d;
        d["times"] = p.times;
        d["gap"] = p.gap;
        d["int_beta_sq"] = p.int_beta_sq;
        d["log_density"] = p.tracker.log_density;
        d["contraction"] = report_dict(contraction_report(p));
        return d;
      },
      py::arg("model"), py::arg("params"), py::arg("x0"), py::arg("y0"), py::arg("lam"), py::arg("T"), py::arg("dt"),
      py::arg("seed"), "Constant initial segments x0 and y0; returns the recorded gap and tracker.");
}
