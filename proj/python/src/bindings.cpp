#include "llmnet/config.hpp"
#include "llmnet/experiment.hpp"
#include "llmnet/graph.hpp"
#include "llmnet/kernel.hpp"
#include "llmnet/meanfield.hpp"
#include "llmnet/reconfig.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace llmnet;

namespace {

py::array_t<double> to_array(const Mat3& m) {
    py::array_t<double> out({3, 3});
    auto v = out.mutable_unchecked<2>();
    for (py::ssize_t r = 0; r < 3; ++r)
        for (py::ssize_t c = 0; c < 3; ++c) v(r, c) = m[r][c];
    return out;
}

MeanFieldState to_state(const std::vector<std::array<double, 3>>& classes) {
    MeanFieldState s;
    s.classes = classes;
    return s;
}

py::array_t<double> to_array(const MeanFieldState& s) {
    py::array_t<double> out({static_cast<py::ssize_t>(s.size()), py::ssize_t{3}});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t l = 0; l < s.size(); ++l)
        for (std::size_t z = 0; z < 3; ++z) v(l, z) = s.classes[l][z];
    return out;
}

LinkProbabilities to_theta(const std::array<double, 3>& t) { return {t[0], t[1], t[2]}; }

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Mean-field, agent-based and control tools for networks of answering agents";

    auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", validation.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_RuntimeError);

    py::class_<DirectedNetwork>(m, "DirectedNetwork")
        .def(py::init<std::size_t>(), py::arg("n"))
        .def("__len__", &DirectedNetwork::size)
        .def_property_readonly("edge_count", &DirectedNetwork::edge_count)
        .def("add_edge", &DirectedNetwork::add_edge, py::arg("i"), py::arg("j"))
        .def("remove_edge", &DirectedNetwork::remove_edge, py::arg("i"), py::arg("j"))
        .def("has_edge", &DirectedNetwork::has_edge, py::arg("i"), py::arg("j"))
        .def("sources", [](const DirectedNetwork& g, NodeId i) {
            const auto s = g.sources(i);
            return std::vector<NodeId>(s.begin(), s.end());
        })
        .def("in_degree", &DirectedNetwork::in_degree)
        .def("edges", &DirectedNetwork::edges)
        .def("is_consistent", &DirectedNetwork::is_consistent);

    m.def("generate_erdos_renyi", &generate_erdos_renyi, py::arg("n"), py::arg("p"), py::arg("seed"));
    m.def("generate_power_law", &generate_power_law, py::arg("n"), py::arg("exponent"), py::arg("max_degree"),
          py::arg("seed"));
    m.def(
        "in_degree_distribution",
        [](const DirectedNetwork& g) { return in_degree_distribution(g).probs; }, py::arg("network"));

    py::class_<LogisticKernelParams>(m, "LogisticKernelParams")
        .def(py::init<>())
        .def_readwrite("activity", &LogisticKernelParams::activity)
        .def_readwrite("beta0", &LogisticKernelParams::beta0)
        .def_readwrite("u_half", &LogisticKernelParams::u_half)
        .def_readwrite("bias", &LogisticKernelParams::bias)
        .def_readwrite("verbosity_penalty", &LogisticKernelParams::verbosity_penalty)
        .def_readwrite("verbosity_midpoint", &LogisticKernelParams::verbosity_midpoint)
        .def_readwrite("verbosity_width", &LogisticKernelParams::verbosity_width)
        .def_readwrite("halluc_share_base", &LogisticKernelParams::halluc_share_base)
        .def_readwrite("halluc_share_bump", &LogisticKernelParams::halluc_share_bump)
        .def_readwrite("halluc_peak_u", &LogisticKernelParams::halluc_peak_u)
        .def_readwrite("halluc_width", &LogisticKernelParams::halluc_width)
        .def_readwrite("halluc_contagion", &LogisticKernelParams::halluc_contagion)
        .def_readwrite("absorbing_when_unanimous", &LogisticKernelParams::absorbing_when_unanimous)
        .def("validate", &LogisticKernelParams::validate);

    py::class_<LogisticKernel>(m, "LogisticKernel")
        .def(py::init<LogisticKernelParams>(), py::arg("params") = LogisticKernelParams{})
        .def_property_readonly("params", &LogisticKernel::params)
        .def(
            "eval", [](const LogisticKernel& k, double u, int l, int i, int j) { return to_array(k.eval(u, l, i, j)); },
            py::arg("u"), py::arg("l"), py::arg("i"), py::arg("j"));

    m.def(
        "compute_theta",
        [](const std::vector<double>& q, const std::vector<std::array<double, 3>>& state) {
            const LinkProbabilities t = compute_theta(DegreeDistribution{q}, to_state(state));
            return std::array<double, 3>{t.T, t.H, t.D};
        },
        py::arg("q"), py::arg("state"));
    m.def(
        "transition_matrix_G",
        [](int l, const std::array<double, 3>& theta, double u, const LogisticKernel& k) {
            return to_array(transition_matrix_G(l, to_theta(theta), u, k));
        },
        py::arg("l"), py::arg("theta"), py::arg("u"), py::arg("kernel"));
    m.def(
        "integrate_fast",
        [](const std::vector<std::array<double, 3>>& state0, const std::vector<double>& q, double u,
           const LogisticKernel& k, double t_end, double dt, std::size_t sample_every) {
            const FastTrajectory tr = integrate_fast(to_state(state0), DegreeDistribution{q}, u, k, t_end, dt, sample_every);
            const auto S = static_cast<py::ssize_t>(tr.states.size());
            const auto L = static_cast<py::ssize_t>(state0.size());
            py::array_t<double> states({S, L, py::ssize_t{3}});
            auto v = states.mutable_unchecked<3>();
            for (py::ssize_t s = 0; s < S; ++s)
                for (py::ssize_t l = 0; l < L; ++l)
                    for (py::ssize_t z = 0; z < 3; ++z) v(s, l, z) = tr.states[s].classes[l][z];
            return py::make_tuple(py::array_t<double>(tr.times.size(), tr.times.data()), states);
        },
        py::arg("state0"), py::arg("q"), py::arg("u"), py::arg("kernel"), py::arg("t_end"), py::arg("dt"),
        py::arg("sample_every") = 1);
    m.def(
        "lyapunov_V",
        [](const std::vector<std::array<double, 3>>& state, const std::vector<double>& q) {
            return lyapunov_V(to_state(state), DegreeDistribution{q});
        },
        py::arg("state"), py::arg("q"));
    m.def(
        "solve_quasi_steady",
        [](const std::vector<double>& q, double u, const LogisticKernel& k, double tol) {
            const QuasiSteadyResult r = solve_quasi_steady(DegreeDistribution{q}, u, k, tol);
            py::dict out;
            out["state"] = to_array(r.state);
            out["theta"] = std::array<double, 3>{r.theta.T, r.theta.H, r.theta.D};
            out["residual"] = r.residual;
            out["iterations"] = r.iterations;
            return out;
        },
        py::arg("q"), py::arg("u"), py::arg("kernel"), py::arg("tol") = 1e-12);

    m.def("delta1_bound", &delta1_bound, py::arg("n"), py::arg("p_T"), py::arg("p_H"));
    m.def(
        "wilson_interval",
        [](std::size_t successes, std::size_t trials) {
            const WilsonInterval w = wilson_interval(successes, trials);
            return py::make_tuple(w.lo, w.hi);
        },
        py::arg("successes"), py::arg("trials"));
    m.def("quantile", &quantile, py::arg("values"), py::arg("p"));

    py::class_<ExperimentConfig>(m, "ExperimentConfig")
        .def(py::init<>())
        .def_property(
            "experiment", [](const ExperimentConfig& c) { return to_string(c.kind); },
            [](ExperimentConfig& c, const std::string& s) { c.kind = experiment_kind_from_string(s); })
        .def_readwrite("seed", &ExperimentConfig::seed)
        .def_readwrite("jobs", &ExperimentConfig::jobs)
        .def_readwrite("output", &ExperimentConfig::output)
        .def("validate", &ExperimentConfig::validate)
        .def("to_yaml", [](const ExperimentConfig& c) { return to_yaml(c); });

    m.def("parse_config", &parse_config, py::arg("text"), py::arg("origin") = "<config>");
    m.def("load_config", &load_config, py::arg("path"));
    m.def("config_reference", &config_reference);
    m.def("experiment_kinds", [] {
        std::vector<std::string> out;
        for (auto k : all_experiment_kinds()) out.push_back(to_string(k));
        return out;
    });
    m.def(
        "run_experiment",
        [](const ExperimentConfig& c, const std::string& out_dir) {
            RunResult r;
            {
                py::gil_scoped_release release;
                r = run_experiment(c, out_dir);
            }
            py::list artifacts;
            for (const auto& a : r.artifacts)
                artifacts.append(py::dict(py::arg("file") = a.file, py::arg("sha256") = a.sha256,
                                          py::arg("bytes") = a.bytes));
            py::dict out;
            out["exit_code"] = r.exit_code;
            out["error"] = r.error;
            out["artifacts"] = artifacts;
            out["wall_seconds"] = r.wall_seconds;
            return out;
        },
        py::arg("config"), py::arg("out_dir"));
    m.def("emit_plotdata", &emit_plotdata, py::arg("run_dir"));
}
