#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "locnet/config.hpp"
#include "locnet/decentral.hpp"
#include "locnet/verify.hpp"

#include <sstream>

namespace py = pybind11;
using namespace locnet;

PYBIND11_MODULE(_locnet, m) {
    m.doc() = "Localizability potentials and deployment simulation for "
              "range-measurement robot networks";

    py::register_exception<SingularGeometryError>(m, "SingularGeometryError");
    py::register_exception<DegenerateConfigError>(m, "DegenerateConfigError");
    py::register_exception<SingularMatrixError>(m, "SingularMatrixError");
    py::register_exception<EigenGapError>(m, "EigenGapError");
    py::register_exception<ConvergenceError>(m, "ConvergenceError");
    py::register_exception<BarrierError>(m, "BarrierError");
    py::register_exception<ConfigError>(m, "ConfigError");

    py::class_<RangingGraph>(m, "RangingGraph")
        .def_readonly("dim", &RangingGraph::dim)
        .def_readonly("tag_count", &RangingGraph::tag_count)
        .def_readonly("anchor_count", &RangingGraph::anchor_count)
        .def_readonly("edges", &RangingGraph::edges)
        .def_readonly("neighborhoods", &RangingGraph::neighborhoods)
        .def("node_count", &RangingGraph::node_count)
        .def("edge_count", &RangingGraph::edge_count)
        .def("measured_count", &RangingGraph::measured_count);

    py::class_<Configuration>(m, "Configuration")
        .def(py::init([](const Eigen::MatrixXd& positions) {
                 Configuration c;
                 c.dim = static_cast<int>(positions.rows());
                 c.positions = positions;
                 return c;
             }),
             py::arg("positions"))
        .def_readwrite("positions", &Configuration::positions)
        .def_readonly("dim", &Configuration::dim);

    py::enum_<NoiseKind>(m, "NoiseKind")
        .value("Additive", NoiseKind::Additive)
        .value("LogNormal", NoiseKind::LogNormal);

    py::class_<NoiseModel>(m, "NoiseModel")
        .def(py::init([](NoiseKind kind, double sigma) {
                 return NoiseModel{kind, sigma};
             }),
             py::arg("kind") = NoiseKind::Additive, py::arg("sigma") = 0.1)
        .def_readwrite("kind", &NoiseModel::kind)
        .def_readwrite("sigma", &NoiseModel::sigma)
        .def("kappa", &NoiseModel::kappa);

    py::enum_<PotentialKind>(m, "PotentialKind")
        .value("AOpt", PotentialKind::AOpt)
        .value("DOpt", PotentialKind::DOpt)
        .value("EOpt", PotentialKind::EOpt);

    m.def("build_graph", &build_graph, py::arg("dim"), py::arg("tag_count"),
          py::arg("anchor_count"), py::arg("ranging_pairs"));
    m.def("incidence_matrix", &incidence_matrix);
    m.def("rigidity_function", &rigidity_function);
    m.def("rigidity_matrix", &rigidity_matrix);
    m.def("euclidean_motion_basis", &euclidean_motion_basis);
    m.def("is_infinitesimally_rigid", &is_infinitesimally_rigid, py::arg("graph"),
          py::arg("config"), py::arg("tol") = 1e-9);
    m.def(
        "build_triangulation",
        [](int dim, const Eigen::MatrixXd& anchors, int tag_count,
           const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, uint64_t seed) {
            Rng rng(seed);
            auto tri = build_triangulation(dim, anchors, tag_count, Region{lo, hi}, rng);
            return py::make_tuple(tri.graph, tri.config);
        },
        py::arg("dim"), py::arg("anchor_positions"), py::arg("tag_count"), py::arg("lo"),
        py::arg("hi"), py::arg("seed") = 0);

    m.def("fim",
          [](const RangingGraph& g, const Configuration& c, const NoiseModel& n) {
              return fim(g, c, n).full;
          });
    m.def("fim_tag_block",
          [](const RangingGraph& g, const Configuration& c, const NoiseModel& n) {
              return fim(g, c, n).tag_block();
          });
    m.def("fim_from_rigidity", &fim_from_rigidity);
    m.def(
        "crlb_unconstrained",
        [](const Eigen::MatrixXd& fu, double tol) {
            const CrlbResult r = crlb_unconstrained(fu, tol);
            return py::make_tuple(r.matrix, r.pseudo_inverse);
        },
        py::arg("tag_fim"), py::arg("tol") = 1e-10);

    m.def("potential_value", &potential_value, py::arg("kind"), py::arg("tag_fim"),
          py::arg("tol") = 1e-10);
    m.def(
        "potential_gradient",
        [](PotentialKind kind, const RangingGraph& g, const Configuration& c,
           const NoiseModel& n, const std::vector<int>& mobile) {
            const GradientField f = potential_gradient(kind, g, c, n, mobile);
            return py::make_tuple(f.value, f.grad);
        },
        py::arg("kind"), py::arg("graph"), py::arg("config"), py::arg("noise"),
        py::arg("mobile_nodes"));
    m.def("t_potential", &t_potential);
    m.def(
        "descent_step",
        [](const Configuration& c, const std::map<int, Eigen::VectorXd>& grad, double gain,
           double cap) {
            GradientField f;
            f.grad = grad;
            return descent_step(c, f, gain, cap);
        },
        py::arg("config"), py::arg("gradient"), py::arg("gain"), py::arg("step_cap"));

    m.def(
        "sample_measurements",
        [](const RangingGraph& g, const Configuration& c, const NoiseModel& n,
           uint64_t seed) {
            Rng rng(seed);
            return sample_measurements(g, c, n, rng).distances;
        },
        py::arg("graph"), py::arg("config"), py::arg("noise"), py::arg("seed") = 0);
    m.def(
        "ls_localize",
        [](const RangingGraph& g, const Eigen::MatrixXd& anchors,
           const Eigen::VectorXd& distances, const Eigen::MatrixXd& guess) {
            MeasurementSet meas;
            meas.distances = distances;
            const LsResult r = ls_localize(g, anchors, meas, guess);
            return py::make_tuple(r.tag_positions, r.converged, r.gradient_norm);
        },
        py::arg("graph"), py::arg("anchor_positions"), py::arg("distances"),
        py::arg("initial_guess"));

    m.def(
        "run_inspection_scenario",
        [](int steps, int mc_period, int mc_trials, uint64_t seed) {
            InspectionConfig cfg;
            cfg.steps = steps;
            cfg.mc_period = mc_period;
            cfg.mc_trials = mc_trials;
            cfg.seed = seed;
            const ScenarioTrace t = run_inspection_scenario(cfg);
            py::list potentials;
            for (const auto& s : t.steps) potentials.append(s.potential);
            return py::make_tuple(potentials, trace_csv(t));
        },
        py::arg("steps") = 100, py::arg("mc_period") = 0, py::arg("mc_trials") = 100,
        py::arg("seed") = 1);
    m.def(
        "run_ugv_scenario",
        [](const std::string& mode, int max_steps, int mc_trials, uint64_t seed) {
            UgvConfig cfg;
            cfg.max_steps = max_steps;
            cfg.mc_trials = mc_trials;
            cfg.seed = seed;
            const ScenarioTrace t = run_ugv_scenario(
                cfg, mode == "D" ? ConstraintMode::DistanceOnly
                                 : ConstraintMode::RelativePosition);
            py::list potentials;
            for (const auto& s : t.steps) potentials.append(s.potential);
            py::list mse;
            for (const auto& s : t.mc.steps) mse.append(s.mse.mean());
            return py::make_tuple(potentials, mse, t.final_constraint_norm);
        },
        py::arg("mode") = "D", py::arg("max_steps") = 400, py::arg("mc_trials") = 100,
        py::arg("seed") = 1);

    m.def("normalize_config_text", [](const std::string& text) {
        return serialize_config(parse_config_text(text));
    });
    m.def(
        "verify",
        [](uint64_t seed) {
            std::ostringstream os;
            const int failures = run_verification(seed, "", os);
            return py::make_tuple(failures, os.str());
        },
        py::arg("seed") = 1);
}
