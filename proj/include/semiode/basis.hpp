#pragma once

#include <Eigen/Core>
#include <vector>

#include "semiode/common.hpp"

namespace semiode {

enum class BoundaryMode {
    Unconstrained,   // plain B-spline family, one function per supplied knot
    ZeroAtOrigin,    // clamped at 0 with constant and linear parts removed
};

// B-spline family representing the gradient function g(x) = sum_k beta_k phi_k(x).
//
// Two constructions are supported:
//  - Unconstrained: the supplied knots k_1 < ... < k_K are taken as the anchor
//    sequence; the knot vector is extended by (degree+1)/2 knots on each side
//    using the boundary gaps, giving exactly M = K basis functions. This is the
//    "M basis functions with M equally spaced knots" convention.
//  - ZeroAtOrigin: the supplied knots are interior knots of a clamped basis on
//    [0, x_hi]; the first two functions (the only ones with nonzero value or
//    slope at 0) are dropped, so g(0) = g'(0) = 0 identically. M = K + degree - 1.
//
// Evaluation outside [x_lo, x_hi] returns zero for every basis function, so a
// trajectory leaving the support has zero velocity and stays constant.
class SplineBasis {
public:
    SplineBasis(int degree, std::vector<double> knots, double x_lo, double x_hi,
                BoundaryMode mode = BoundaryMode::Unconstrained,
                bool l2_normalized = false);

    int degree() const { return degree_; }
    int size() const { return M_; }
    double x_lo() const { return x_lo_; }
    double x_hi() const { return x_hi_; }
    BoundaryMode mode() const { return mode_; }
    bool l2_normalized() const { return normalized_; }
    const std::vector<double>& knots() const { return knots_; }
    const std::vector<double>& full_knots() const { return full_knots_; }

    // (phi_1^(j)(x), ..., phi_M^(j)(x)) for j = deriv_order in {0,1,2}.
    Eigen::VectorXd eval(double x, int deriv_order = 0) const;

    // Nonzero block only: writes up to degree+1 values into vals and sets
    // first to the index of the first one. Returns the count (0 outside domain).
    int eval_nonzero(double x, int deriv_order, int& first, double* vals) const;

    // sum_k beta_k phi_k^(j)(x)
    double g_value(const Eigen::VectorXd& beta, double x, int deriv_order = 0) const;

private:
    double basis_value(int k, double x) const;
    double basis_deriv(int k, int d, double x, int order) const;

    int degree_;
    std::vector<double> knots_;       // as supplied
    std::vector<double> full_knots_;  // extended / clamped knot vector
    // full_knots_ padded with `degree_` ghost knots per side; the evaluation
    // recurrence may index past the band, but ghost-dependent entries are
    // discarded before they can reach a kept basis function.
    std::vector<double> eval_knots_;
    double x_lo_, x_hi_;
    BoundaryMode mode_;
    bool normalized_;
    int offset_;  // index of the first retained basis function in the full family
    int M_;
    std::vector<double> scale_;  // L2 normalization factors (all 1 when disabled)
};

struct PenaltyMatrix {
    Eigen::MatrixXd B;  // M x M, symmetric PSD
    double A = 0.0;
    double lambda_R = 0.0;
};

// B = lambda_R * int_A^{2A} phi'(x) phi'(x)^T dx, by Gauss-Legendre quadrature
// per knot span intersected with [A, 2A]. Exact for the piecewise-polynomial
// integrand at 2*degree points per span.
PenaltyMatrix penalty_matrix(const SplineBasis& basis, double A, double lambda_R);

}  // namespace semiode
