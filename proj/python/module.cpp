#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "semiode/io.hpp"
#include "semiode/selection.hpp"
#include "semiode/sim.hpp"

namespace py = pybind11;
using namespace semiode;

namespace {

BoundaryMode mode_of(const std::string& s) {
    if (s == "unconstrained") return BoundaryMode::Unconstrained;
    if (s == "zero_at_origin") return BoundaryMode::ZeroAtOrigin;
    throw ArgumentError("unknown boundary mode '" + s + "'");
}

std::string mode_str(BoundaryMode m) {
    return m == BoundaryMode::ZeroAtOrigin ? "zero_at_origin" : "unconstrained";
}

}  // namespace

PYBIND11_MODULE(_semiode, m) {
    m.doc() = "Semiparametric ODE fitting: nonparametric gradient function with "
              "subject scale effects";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

    py::class_<SplineBasis>(m, "SplineBasis")
        .def(py::init([](int degree, std::vector<double> knots, double x_lo, double x_hi,
                         const std::string& mode, bool l2_normalized) {
                 return SplineBasis(degree, std::move(knots), x_lo, x_hi, mode_of(mode),
                                    l2_normalized);
             }),
             py::arg("degree"), py::arg("knots"), py::arg("x_lo"), py::arg("x_hi"),
             py::arg("mode") = "unconstrained", py::arg("l2_normalized") = false)
        .def_property_readonly("size", &SplineBasis::size)
        .def_property_readonly("degree", &SplineBasis::degree)
        .def_property_readonly("x_lo", &SplineBasis::x_lo)
        .def_property_readonly("x_hi", &SplineBasis::x_hi)
        .def("eval", &SplineBasis::eval, py::arg("x"), py::arg("deriv") = 0)
        .def("g_value", &SplineBasis::g_value, py::arg("beta"), py::arg("x"),
             py::arg("deriv") = 0);

    m.def(
        "penalty_matrix",
        [](const SplineBasis& basis, double A, double lambda_R) {
            return penalty_matrix(basis, A, lambda_R).B;
        },
        py::arg("basis"), py::arg("A"), py::arg("lambda_R"));

    py::class_<Curve>(m, "Curve")
        .def_readonly("subject_id", &Curve::subject_id)
        .def_readonly("curve_id", &Curve::curve_id)
        .def_readonly("t", &Curve::t)
        .def_readonly("y", &Curve::y)
        .def_readonly("a_known", &Curve::a_known)
        .def_readonly("a0", &Curve::a0)
        .def_readonly("subject", &Curve::subject);

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def(
            "add_curve",
            [](Dataset& d, const std::string& subject_id, const std::string& curve_id,
               std::vector<double> t, std::vector<double> y, bool a_known, double a0) {
                Curve cv;
                cv.subject_id = subject_id;
                cv.curve_id = curve_id;
                cv.t = std::move(t);
                cv.y = std::move(y);
                cv.a_known = a_known;
                cv.a0 = a0;
                d.curves.push_back(std::move(cv));
            },
            py::arg("subject_id"), py::arg("curve_id"), py::arg("t"), py::arg("y"),
            py::arg("a_known") = false, py::arg("a0") = 0.0)
        .def("finalize", &Dataset::finalize)
        .def_readonly("curves", &Dataset::curves)
        .def_readonly("subject_ids", &Dataset::subject_ids)
        .def_property_readonly("n_subjects", &Dataset::n_subjects)
        .def_property_readonly("n_curves", &Dataset::n_curves)
        .def_property_readonly("n_obs", &Dataset::n_obs);

    m.def("ingest", &ingest, py::arg("path"));
    m.def("emit", &emit, py::arg("data"), py::arg("path"));

    py::class_<Parameters>(m, "Parameters")
        .def(py::init<>())
        .def_readwrite("a", &Parameters::a)
        .def_readwrite("theta", &Parameters::theta)
        .def_readwrite("beta", &Parameters::beta);

    py::class_<FitConfig>(m, "FitConfig")
        .def(py::init<>())
        .def_readwrite("lambda1", &FitConfig::lambda1)
        .def_readwrite("lambda2", &FitConfig::lambda2)
        .def_readwrite("lambda3_0", &FitConfig::lambda3_0)
        .def_readwrite("alpha_fixed", &FitConfig::alpha_fixed)
        .def_readwrite("lm_adaptive", &FitConfig::lm_adaptive)
        .def_readwrite("nr_adaptive", &FitConfig::nr_adaptive)
        .def_readwrite("h", &FitConfig::h)
        .def_readwrite("lm_tol", &FitConfig::lm_tol)
        .def_readwrite("nr_tol", &FitConfig::nr_tol)
        .def_readwrite("lm_max_iters", &FitConfig::lm_max_iters)
        .def_readwrite("nr_max_iters", &FitConfig::nr_max_iters)
        .def_property(
            "alpha_policy",
            [](const FitConfig& c) {
                return c.alpha_policy == AlphaPolicy::Fixed ? "fixed" : "mean";
            },
            [](FitConfig& c, const std::string& s) {
                if (s == "mean")
                    c.alpha_policy = AlphaPolicy::MeanOfA;
                else if (s == "fixed")
                    c.alpha_policy = AlphaPolicy::Fixed;
                else
                    throw ArgumentError("unknown alpha policy '" + s + "'");
            });

    py::class_<TraceRecord>(m, "TraceRecord")
        .def_readonly("iter", &TraceRecord::iter)
        .def_property_readonly(
            "phase", [](const TraceRecord& r) { return r.phase == Phase::LM ? "LM" : "NR"; })
        .def_readonly("loss", &TraceRecord::loss)
        .def_readonly("lambda1", &TraceRecord::lambda1)
        .def_readonly("lambda2", &TraceRecord::lambda2)
        .def_readonly("lambda3", &TraceRecord::lambda3)
        .def_readonly("beta_step", &TraceRecord::beta_step);

    py::class_<VarianceEstimates>(m, "VarianceEstimates")
        .def_readonly("sigma_eps2", &VarianceEstimates::sigma_eps2)
        .def_readonly("sigma_a2", &VarianceEstimates::sigma_a2)
        .def_readonly("sigma_theta2", &VarianceEstimates::sigma_theta2);

    py::class_<FitResult>(m, "FitResult")
        .def_readonly("params", &FitResult::params)
        .def_readonly("alpha", &FitResult::alpha)
        .def_readonly("final_loss", &FitResult::final_loss)
        .def_readonly("lm_converged", &FitResult::lm_converged)
        .def_readonly("nr_converged", &FitResult::nr_converged)
        .def_readonly("lm_iters", &FitResult::lm_iters)
        .def_readonly("nr_iters", &FitResult::nr_iters)
        .def_readonly("lambda1", &FitResult::lambda1)
        .def_readonly("lambda2", &FitResult::lambda2)
        .def_readonly("variances", &FitResult::variances)
        .def_readonly("trace", &FitResult::trace);

    m.def("default_init", &default_init, py::arg("basis"), py::arg("data"));
    m.def("fit", &fit, py::arg("basis"), py::arg("data"), py::arg("init"), py::arg("B"),
          py::arg("config"));

    py::class_<ModelSpec>(m, "ModelSpec")
        .def(py::init([](const std::string& id, int degree, std::vector<double> knots,
                         double x_lo, double x_hi, const std::string& mode, bool l2_normalized,
                         double A, double lambda_R) {
                 ModelSpec s;
                 s.id = id;
                 s.degree = degree;
                 s.knots = std::move(knots);
                 s.x_lo = x_lo;
                 s.x_hi = x_hi;
                 s.mode = mode_of(mode);
                 s.l2_normalized = l2_normalized;
                 s.A = A;
                 s.lambda_R = lambda_R;
                 return s;
             }),
             py::arg("id"), py::arg("degree"), py::arg("knots"), py::arg("x_lo"),
             py::arg("x_hi"), py::arg("mode") = "unconstrained",
             py::arg("l2_normalized") = false, py::arg("A") = 0.0, py::arg("lambda_R") = 0.0)
        .def_readwrite("id", &ModelSpec::id)
        .def_readwrite("knots", &ModelSpec::knots)
        .def_property(
            "mode", [](const ModelSpec& s) { return mode_str(s.mode); },
            [](ModelSpec& s, const std::string& v) { s.mode = mode_of(v); });

    m.def("make_basis", &make_basis, py::arg("spec"));

    py::class_<CvRow>(m, "CvRow")
        .def_readonly("id", &CvRow::id)
        .def_readonly("lm_iters", &CvRow::lm_iters)
        .def_readonly("nr_iters", &CvRow::nr_iters)
        .def_readonly("cv", &CvRow::cv)
        .def_readonly("converged", &CvRow::converged);

    py::class_<CvReport>(m, "CvReport")
        .def_readonly("rows", &CvReport::rows)
        .def_readonly("selected", &CvReport::selected);

    m.def("approx_cv", &approx_cv, py::arg("basis"), py::arg("data"), py::arg("fit"),
          py::arg("B"), py::arg("config"));
    m.def("exact_cv", &exact_cv, py::arg("basis"), py::arg("data"), py::arg("B"),
          py::arg("config"));
    m.def(
        "model_search",
        [](const Dataset& data, const std::vector<ModelSpec>& grid, const FitConfig& config) {
            return model_search(data, grid, config);
        },
        py::arg("data"), py::arg("grid"), py::arg("config"));

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init(&default_sim_config))
        .def_readwrite("n", &SimConfig::n)
        .def_readwrite("N", &SimConfig::N)
        .def_property(
            "m",
            [](const SimConfig& c) { return std::make_pair(c.m.lo, c.m.hi); },
            [](SimConfig& c, std::pair<int, int> v) { c.m = {v.first, v.second}; })
        .def_readwrite("theta_sd", &SimConfig::theta_sd)
        .def_readwrite("a_mean", &SimConfig::a_mean)
        .def_readwrite("a_sd", &SimConfig::a_sd)
        .def_readwrite("noise_sd", &SimConfig::noise_sd)
        .def_readwrite("a_known", &SimConfig::a_known)
        .def_readwrite("truth", &SimConfig::truth)
        .def_readwrite("truth_beta", &SimConfig::truth_beta)
        .def_readwrite("seed", &SimConfig::seed);

    py::class_<GeneratedData>(m, "GeneratedData")
        .def_readonly("data", &GeneratedData::data)
        .def_readonly("theta_true", &GeneratedData::theta_true)
        .def_readonly("a_true", &GeneratedData::a_true);

    m.def("default_sim_config", &default_sim_config);
    m.def("plant_sim_config", &plant_sim_config);
    m.def("generate", &generate, py::arg("config"));
    m.def("ise", &ise, py::arg("basis_hat"), py::arg("beta_hat"), py::arg("basis_true"),
          py::arg("beta_true"), py::arg("lo"), py::arg("hi"), py::arg("points") = 512);
    m.def("spe", &spe, py::arg("theta_hat"), py::arg("theta_true"));
}
