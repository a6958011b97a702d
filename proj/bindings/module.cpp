#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "precondiag/diagnostics.hpp"
#include "precondiag/errors.hpp"
#include "precondiag/harness.hpp"
#include "precondiag/matrix.hpp"
#include "precondiag/optimizers.hpp"
#include "precondiag/problems.hpp"
#include "precondiag/projection.hpp"

namespace py = pybind11;
using namespace precondiag;

PYBIND11_MODULE(_precondiag, m) {
    m.doc() = "Preconditioner-diagonalization optimizers: SVD gradient projection, "
              "diagonalized adaptive steps, and the training harness.";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<StateError>(m, "StateError", PyExc_RuntimeError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // ------------------------------------------------------------- matrix --
    py::class_<SvdFactors>(m, "SvdFactors")
        .def_readonly("p", &SvdFactors::p)
        .def_readonly("sigma", &SvdFactors::sigma)
        .def_readonly("q_t", &SvdFactors::q_t);

    m.def("full_svd", &full_svd, py::arg("g"));
    m.def("sigma_matrix", &sigma_matrix, py::arg("factors"), py::arg("rows"), py::arg("cols"));
    m.def("kron", &kron, py::arg("a"), py::arg("b"),
          py::arg("element_cap") = std::int64_t{1} << 24);
    m.def("vec", &vec, py::arg("a"));
    m.def("unvec", &unvec, py::arg("v"), py::arg("rows"), py::arg("cols"));
    m.def("off_diagonal_ratio", &off_diagonal_ratio, py::arg("a"));
    m.def(
        "gaussian_matrix",
        [](Index rows, Index cols, std::uint64_t seed) {
            Rng rng(seed);
            return gaussian_matrix(rows, cols, rng);
        },
        py::arg("rows"), py::arg("cols"), py::arg("seed"));
    m.def(
        "random_orthogonal",
        [](Index n, std::uint64_t seed) {
            Rng rng(seed);
            return random_orthogonal(n, rng);
        },
        py::arg("n"), py::arg("seed"));
    m.def("seed_fanout", &seed_fanout, py::arg("seed"), py::arg("index"), py::arg("purpose"));

    // --------------------------------------------------------- projection --
    py::enum_<ProjectionMode>(m, "ProjectionMode")
        .value("Identity", ProjectionMode::Identity)
        .value("OneSided", ProjectionMode::OneSided)
        .value("TwoSided", ProjectionMode::TwoSided);

    py::class_<ProjectionPolicy>(m, "ProjectionPolicy")
        .def(py::init<std::int64_t, ProjectionMode>(), py::arg("period_t") = 200,
             py::arg("mode") = ProjectionMode::Identity)
        .def_readwrite("period_t", &ProjectionPolicy::period_t)
        .def_readwrite("mode", &ProjectionPolicy::mode);

    py::class_<ProjectionState>(m, "ProjectionState")
        .def(py::init<>())
        .def_readonly("p", &ProjectionState::p)
        .def_readonly("q_t", &ProjectionState::q_t)
        .def_readonly("refreshed_at_step", &ProjectionState::refreshed_at_step);

    m.def("maybe_refresh", &maybe_refresh, py::arg("state"), py::arg("policy"), py::arg("t"),
          py::arg("g"));
    m.def("project", &project, py::arg("g"), py::arg("state"), py::arg("mode"));
    m.def("project_back", &project_back, py::arg("u"), py::arg("state"), py::arg("mode"));

    // --------------------------------------------------------- optimizers --
    py::enum_<OptimizerKind>(m, "OptimizerKind")
        .value("AdamW", OptimizerKind::AdamW)
        .value("AdaDiag", OptimizerKind::AdaDiag)
        .value("AdaDiagTwoSided", OptimizerKind::AdaDiagTwoSided)
        .value("Adafactor", OptimizerKind::Adafactor)
        .value("AdafacDiag", OptimizerKind::AdafacDiag)
        .value("Hfac", OptimizerKind::Hfac)
        .value("HfacDiag", OptimizerKind::HfacDiag);

    m.def("optimizer_from_name", &optimizer_from_name, py::arg("name"));
    m.def("optimizer_name", &optimizer_name, py::arg("kind"));

    py::class_<Schedule>(m, "Schedule")
        .def_static("constant", &Schedule::constant, py::arg("lr"))
        .def_static("warmup_cosine", &Schedule::warmup_cosine, py::arg("peak"),
                    py::arg("total_steps"), py::arg("warmup_frac") = 0.1,
                    py::arg("final_frac") = 0.1)
        .def("at", &Schedule::at, py::arg("t"));

    py::class_<Hyperparams>(m, "Hyperparams")
        .def(py::init<>())
        .def_readwrite("lr", &Hyperparams::lr)
        .def_readwrite("beta1", &Hyperparams::beta1)
        .def_readwrite("beta2", &Hyperparams::beta2)
        .def_readwrite("eps_adam", &Hyperparams::eps_adam)
        .def_readwrite("eps_factored", &Hyperparams::eps_factored)
        .def_readwrite("weight_decay", &Hyperparams::weight_decay)
        .def_readwrite("clip_threshold", &Hyperparams::clip_threshold)
        .def_readwrite("projection", &Hyperparams::projection);

    py::class_<FullMomentState>(m, "FullMomentState")
        .def_readonly("m", &FullMomentState::m)
        .def_readonly("v", &FullMomentState::v)
        .def_readonly("t", &FullMomentState::t)
        .def_readonly("proj", &FullMomentState::proj);
    py::class_<FactoredMomentState>(m, "FactoredMomentState")
        .def_readonly("m", &FactoredMomentState::m)
        .def_readonly("r", &FactoredMomentState::r)
        .def_readonly("s", &FactoredMomentState::s)
        .def_readonly("t", &FactoredMomentState::t)
        .def_readonly("proj", &FactoredMomentState::proj);
    py::class_<HfacState>(m, "HfacState")
        .def_readonly("u", &HfacState::u)
        .def_readonly("v_vec", &HfacState::v_vec)
        .def_readonly("r", &HfacState::r)
        .def_readonly("s", &HfacState::s)
        .def_readonly("t", &HfacState::t)
        .def_readonly("proj", &HfacState::proj);

    m.def("make_full_state", &make_full_state, py::arg("rows"), py::arg("cols"));
    m.def("make_factored_state", &make_factored_state, py::arg("rows"), py::arg("cols"),
          py::arg("with_momentum"));
    m.def("make_hfac_state", &make_hfac_state, py::arg("rows"), py::arg("cols"));

    m.def("bias_corrected_beta", &bias_corrected_beta, py::arg("beta"), py::arg("t"));
    m.def("rms", &rms, py::arg("u"));
    m.def("clip_by_rms", &clip_by_rms, py::arg("u"), py::arg("d"));

    m.def(
        "step_adamw",
        [](const Matrix& w, const Matrix& g, const FullMomentState& s, const Hyperparams& h) {
            auto r = step_adamw(w, g, s, h);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"));
    m.def(
        "step_adadiag",
        [](const Matrix& w, const Matrix& g, const FullMomentState& s, const Hyperparams& h) {
            auto r = step_adadiag(w, g, s, h);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"));
    m.def(
        "step_adadiag_two_sided",
        [](const Matrix& w, const Matrix& g, const FullMomentState& s, const Hyperparams& h) {
            auto r = step_adadiag_two_sided(w, g, s, h);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"));
    m.def(
        "step_adafactor",
        [](const Matrix& w, const Matrix& g, const FactoredMomentState& s, const Hyperparams& h,
           bool with_momentum) {
            auto r = step_adafactor(w, g, s, h, with_momentum);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"),
        py::arg("with_momentum") = false);
    m.def(
        "step_adafacdiag",
        [](const Matrix& w, const Matrix& g, const FactoredMomentState& s, const Hyperparams& h,
           bool with_momentum) {
            auto r = step_adafacdiag(w, g, s, h, with_momentum);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"),
        py::arg("with_momentum") = false);
    m.def(
        "step_hfac",
        [](const Matrix& w, const Matrix& g, const HfacState& s, const Hyperparams& h) {
            auto r = step_hfac(w, g, s, h);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"));
    m.def(
        "step_hfacdiag",
        [](const Matrix& w, const Matrix& g, const HfacState& s, const Hyperparams& h) {
            auto r = step_hfacdiag(w, g, s, h);
            return py::make_tuple(r.w, r.state);
        },
        py::arg("w"), py::arg("g"), py::arg("state"), py::arg("h"));

    m.def("state_element_count", &state_element_count, py::arg("kind"), py::arg("m"),
          py::arg("n"), py::arg("with_momentum") = false);
    m.def(
        "state_element_count_by_name",
        [](const std::string& name, std::int64_t mm, std::int64_t nn, bool with_momentum) {
            return state_element_count(optimizer_from_name(name), mm, nn, with_momentum);
        },
        py::arg("name"), py::arg("m"), py::arg("n"), py::arg("with_momentum") = false);

    // -------------------------------------------------------- diagnostics --
    py::class_<Histogram>(m, "Histogram")
        .def_readonly("edges", &Histogram::edges)
        .def_readonly("counts", &Histogram::counts);
    py::class_<CovStats>(m, "CovStats")
        .def_readonly("offdiag_ratio", &CovStats::offdiag_ratio)
        .def_readonly("histogram", &CovStats::histogram)
        .def_readonly("n_elements", &CovStats::n_elements);
    m.def("cov_offdiag_stats", &cov_offdiag_stats, py::arg("g"),
          py::arg("max_elements") = std::int64_t{1} << 22, py::arg("sample_seed") = 0,
          py::arg("n_bins") = 64);
    m.def("cov_offdiag_ratio", &cov_offdiag_ratio, py::arg("g"));

    py::class_<HamiltonianSample>(m, "HamiltonianSample")
        .def(py::init([](std::int64_t step, double loss, double kinetic, double total) {
                 return HamiltonianSample{step, loss, kinetic, total};
             }),
             py::arg("step"), py::arg("loss"), py::arg("kinetic"), py::arg("total"))
        .def_readonly("step", &HamiltonianSample::step)
        .def_readonly("loss", &HamiltonianSample::loss)
        .def_readonly("kinetic", &HamiltonianSample::kinetic)
        .def_readonly("total", &HamiltonianSample::total);
    m.def("hamiltonian_value", &hamiltonian_value, py::arg("loss"), py::arg("state"),
          py::arg("eps"));
    m.def("hfac_hamiltonian_value", &hfac_hamiltonian_value, py::arg("loss"), py::arg("state"));
    m.def("adafactor_hamiltonian_value", &adafactor_hamiltonian_value, py::arg("loss"),
          py::arg("state"));
    m.def("factored_second_moment", &factored_second_moment, py::arg("v"));
    m.def("i_divergence", &i_divergence, py::arg("v"), py::arg("r"), py::arg("s"));

    py::class_<DescentReport>(m, "DescentReport")
        .def_readonly("fraction_non_increasing", &DescentReport::fraction_non_increasing)
        .def_readonly("max_increase", &DescentReport::max_increase)
        .def_readonly("n_transitions", &DescentReport::n_transitions);
    m.def("hamiltonian_descent_report", &hamiltonian_descent_report, py::arg("trajectory"),
          py::arg("tol") = 0.0);

    // ------------------------------------------------------------ problems --
    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readwrite("features", &Dataset::features)
        .def_readwrite("labels", &Dataset::labels)
        .def_readwrite("source", &Dataset::source)
        .def("n_rows", &Dataset::n_rows)
        .def("n_features", &Dataset::n_features);

    py::class_<LossGrads>(m, "LossGrads")
        .def_readonly("loss", &LossGrads::loss)
        .def_readonly("grads", &LossGrads::grads);

    py::class_<Objective>(m, "Objective")
        .def("param_shapes", &Objective::param_shapes)
        .def("initial_params", &Objective::initial_params, py::arg("seed"))
        .def("loss_and_grads", &Objective::loss_and_grads, py::arg("params"),
             py::arg("step") = std::nullopt);

    m.def("make_quadratic", &make_quadratic, py::arg("seed"), py::arg("m"), py::arg("n"),
          py::arg("condition_number"));
    m.def("make_matfac", &make_matfac, py::arg("seed"), py::arg("m"), py::arg("n"),
          py::arg("rank"), py::arg("noise_std"));
    m.def("make_mlp", &make_mlp, py::arg("seed"), py::arg("layer_sizes"), py::arg("dataset"),
          py::arg("batch_size"));
    m.def("make_blobs", &make_blobs, py::arg("seed"), py::arg("n_samples"),
          py::arg("n_features"), py::arg("n_classes"), py::arg("center_spread"));
    m.def("load_csv_dataset", &load_csv_dataset, py::arg("path"), py::arg("has_header"));
    m.def("standardize_features", &standardize_features, py::arg("dataset"));
    m.def("gradient_audit", &gradient_audit, py::arg("objective"), py::arg("params"),
          py::arg("n_probes"), py::arg("fd_eps"), py::arg("seed"));
    m.def("rotated_gradient_check", &rotated_gradient_check, py::arg("objective"),
          py::arg("params"), py::arg("p"), py::arg("q"), py::arg("probe_eps"),
          py::arg("n_probes"), py::arg("seed"));

    // ------------------------------------------------------------- harness --
    py::class_<RunConfig>(m, "RunConfig")
        .def_readwrite("problem", &RunConfig::problem)
        .def_readwrite("optimizer", &RunConfig::optimizer)
        .def_readwrite("steps", &RunConfig::steps)
        .def_readwrite("seed", &RunConfig::seed)
        .def_readwrite("lr", &RunConfig::lr)
        .def_readwrite("period", &RunConfig::period)
        .def_readwrite("projection_mode", &RunConfig::projection_mode)
        .def_readwrite("metrics_every", &RunConfig::metrics_every)
        .def_readwrite("hamiltonian", &RunConfig::hamiltonian)
        .def_readwrite("cov_stats", &RunConfig::cov_stats)
        .def_readwrite("threshold", &RunConfig::threshold)
        .def_readwrite("out", &RunConfig::out);

    py::class_<MetricsRow>(m, "MetricsRow")
        .def_readonly("step", &MetricsRow::step)
        .def_readonly("loss", &MetricsRow::loss)
        .def_readonly("grad_norm", &MetricsRow::grad_norm)
        .def_readonly("update_norm", &MetricsRow::update_norm)
        .def_readonly("hamiltonian_total", &MetricsRow::hamiltonian_total)
        .def_readonly("diag_ratio_orig", &MetricsRow::diag_ratio_orig)
        .def_readonly("diag_ratio_proj", &MetricsRow::diag_ratio_proj)
        .def_readonly("wall_ms", &MetricsRow::wall_ms);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("rows", &TrainResult::rows)
        .def_readonly("final_loss", &TrainResult::final_loss)
        .def_readonly("steps_completed", &TrainResult::steps_completed)
        .def_readonly("steps_to_threshold", &TrainResult::steps_to_threshold)
        .def_readonly("total_wall_ms", &TrainResult::total_wall_ms)
        .def_readonly("refresh_wall_ms", &TrainResult::refresh_wall_ms)
        .def_readonly("numeric_failure", &TrainResult::numeric_failure)
        .def_readonly("failed_step", &TrainResult::failed_step);

    py::class_<CompareRow>(m, "CompareRow")
        .def_readonly("label", &CompareRow::label)
        .def_readonly("median_final_loss", &CompareRow::median_final_loss)
        .def_readonly("median_steps_to_threshold", &CompareRow::median_steps_to_threshold);
    py::class_<CompareResult>(m, "CompareResult")
        .def_readonly("rows", &CompareResult::rows)
        .def_readonly("table", &CompareResult::table);

    m.def("parse_config", &parse_config, py::arg("text"));
    m.def("load_config_file", &load_config_file, py::arg("path"));
    m.def("train", &train, py::arg("config"));
    m.def("run_train", &run_train, py::arg("config"), py::arg("out_override") = "");
    m.def("run_compare", &run_compare, py::arg("configs"), py::arg("threshold"),
          py::arg("n_seeds"), py::arg("out_override") = "");
    m.def("run_diagnose", &run_diagnose, py::arg("config"), py::arg("out_override") = "");
    m.def("run_memcheck", &run_memcheck, py::arg("out_dir") = "");
}
