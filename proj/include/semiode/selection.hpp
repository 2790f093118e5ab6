#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "semiode/fitting.hpp"

namespace semiode {

// One candidate in a model grid: basis construction inputs plus the
// boundary-constraint penalty parameters.
struct ModelSpec {
    std::string id;
    int degree = 3;
    std::vector<double> knots;
    double x_lo = 0.0, x_hi = 1.0;
    BoundaryMode mode = BoundaryMode::Unconstrained;
    bool l2_normalized = false;
    double A = 0.0;
    double lambda_R = 0.0;
};

struct CvRow {
    std::string id;
    double A = 0.0, lambda_R = 0.0;
    int lm_iters = 0, nr_iters = 0;
    double cv = std::numeric_limits<double>::quiet_NaN();
    bool converged = false;
};

struct CvReport {
    std::vector<CvRow> rows;
    int selected = -1;  // index into rows; minimal score among converged models
};

// Approximate leave-one-curve-out CV score evaluated at the full-data fit.
double approx_cv(const SplineBasis& basis, const Dataset& data, const FitResult& fit,
                 const Eigen::MatrixXd& B, const FitConfig& config);

// Brute-force leave-one-curve-out CV (refits once per curve); the oracle.
double exact_cv(const SplineBasis& basis, const Dataset& data, const Eigen::MatrixXd& B,
                const FitConfig& config);

// Divided differences and midpoint averages per consecutive observation pair.
struct DerivativePoint {
    int curve = 0;
    double x = 0.0;       // (Y_j + Y_{j+1}) / 2
    double xprime = 0.0;  // (Y_{j+1} - Y_j) / (t_{j+1} - t_j)
};
std::vector<DerivativePoint> empirical_derivatives(const Dataset& data);

enum class StepwiseCriterion { AIC, BIC };

// Forward stepwise regression of rescaled empirical derivatives on the
// truncated-power basis {x^2, x^3, (x - x_k)^3_+}.
struct StepwiseResult {
    std::vector<double> selected_knots;   // knots of retained truncated terms
    Eigen::VectorXd coef;                 // coefficients of [x^2, x^3, selected terms]
    Eigen::VectorXd theta0;               // per-subject preliminary log-scales
    double sigma_eps_ini = 0.0;
    double sigma_theta_ini = 0.0;
    double g0(double x) const;            // the fitted initial gradient function
};

StepwiseResult stepwise_init(const Dataset& data, const std::vector<double>& candidate_knots,
                             StepwiseCriterion criterion,
                             const Eigen::VectorXd* theta0 = nullptr);

// Least-squares projection of an arbitrary g onto a spline basis over its
// domain; used to map the stepwise initializer onto candidate bases.
Eigen::VectorXd project_g(const SplineBasis& basis, const std::function<double(double)>& g,
                          int grid_points = 256);

// Fit every candidate, score by approx_cv, select the converged minimum.
// When a stepwise initializer is supplied, each candidate starts from the
// projection of its g0 onto the candidate basis and its theta0.
CvReport model_search(const Dataset& data, const std::vector<ModelSpec>& grid,
                      const FitConfig& config, const StepwiseResult* init = nullptr);

SplineBasis make_basis(const ModelSpec& spec);

}  // namespace semiode
