#pragma once

#include <Eigen/Core>
#include <functional>
#include <vector>

#include "semiode/basis.hpp"
#include "semiode/common.hpp"

namespace semiode {

// x' = e^theta * g_beta(x)
struct VectorField {
    const SplineBasis* basis = nullptr;
    Eigen::VectorXd beta;
    double theta = 0.0;

    double g(double x, int deriv = 0) const { return basis->g_value(beta, x, deriv); }
    double operator()(double x) const { return std::exp(theta) * g(x); }
};

// One classical RK4 step for y' = f(t, y).
double rk4_step(const std::function<double(double, double)>& f, double t, double y, double h);

// A sampled path on a uniform grid together with its time derivative at the
// nodes, so off-grid values interpolate with cubic Hermite (O(step^4)).
struct GridPath {
    double step = 0.0;
    std::vector<double> v;   // values at 0, step, 2*step, ...
    std::vector<double> dv;  // time derivatives at the same nodes

    double at(double t) const;
    bool empty() const { return v.empty(); }
};

// Trajectory plus parameter sensitivities for one curve. The trajectory lives
// on step h, first-order sensitivities on 2h, and second-order ones on 4h.
struct TrajectoryBundle {
    double h = 0.0;
    double a = 0.0;      // initial condition
    double theta = 0.0;  // subject scale used for the solve

    GridPath x;                        // trajectory
    GridPath sens_a, sens_theta;       // dX/da, dX/dtheta
    std::vector<GridPath> sens_beta;   // dX/dbeta_r, r = 1..M

    GridPath hess_aa, hess_tt;                 // d2X/da2, d2X/dtheta2
    std::vector<GridPath> hess_tb;             // d2X/dtheta dbeta_r
    std::vector<std::vector<GridPath>> hess_bb;  // d2X/dbeta_r dbeta_r' (symmetric)

    bool has_first_order() const { return !sens_a.empty(); }
    bool has_second_order() const { return !hess_tt.empty(); }
};

// SecondTheta stops after hess_tt: the blockwise theta Newton step needs no
// beta or initial-condition Hessians, and hess_bb is the dominant cost.
enum class SensOrder { First, SecondTheta, Second };

// Solve the trajectory X(t) = a + int_0^t e^theta g_beta(X) on {0, h, ..., 1}.
TrajectoryBundle solve_trajectory(const VectorField& field, double a, double h);

// Evaluate a solved trajectory at arbitrary times in [0, 1].
std::vector<double> eval_at_times(const TrajectoryBundle& bundle, const std::vector<double>& times);

// Fill sensitivity (and optionally Hessian) paths by RK4 on the linear
// variational ODEs, with the frozen trajectory supplying the coefficients.
void propagate_sensitivities(const VectorField& field, TrajectoryBundle& bundle,
                             SensOrder order = SensOrder::First);

// Closed-form sensitivities for strictly positive g along the trajectory:
//   dX/da     = g(X(t)) / g(X(0))
//   dX/dtheta = e^theta t g(X(t))
//   dX/dbeta_r = g(X(t)) int_{X(0)}^{X(t)} phi_r / g^2
// Throws PositivityError when g is not safely positive on the traversed range.
void closed_form_sensitivities(const VectorField& field, TrajectoryBundle& bundle);

// Closed-form Hessian paths for positive g. `alt_beta_form` selects the
// time-integral representation (default, no e^{-theta} factor); the
// state-integral representation is kept for cross-checking.
void closed_form_hessians(const VectorField& field, TrajectoryBundle& bundle,
                          bool alt_beta_form = true);

}  // namespace semiode
