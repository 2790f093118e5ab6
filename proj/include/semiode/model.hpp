#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "semiode/basis.hpp"
#include "semiode/ode.hpp"

namespace semiode {

// One observed curve: sorted times in [0, 1] with noisy trajectory values.
struct Curve {
    std::string subject_id;
    std::string curve_id;
    std::vector<double> t;
    std::vector<double> y;
    bool a_known = false;  // initial condition observed (treated as fixed)
    double a0 = 0.0;       // only meaningful when a_known
    int subject = -1;      // index into Dataset::subject_ids, set by finalize()
};

struct Dataset {
    std::vector<Curve> curves;
    std::vector<std::string> subject_ids;       // unique, in order of appearance
    std::vector<std::vector<int>> by_subject;   // curve indices per subject
    std::vector<int> subject_obs;               // sum_l m_il per subject
    double time_origin = 0.0;                   // original-time metadata (io)
    double time_scale = 1.0;

    // Builds the subject index and validates curves (non-empty, times sorted
    // and inside [0, 1], matching t/y lengths). Throws DataError on failure.
    void finalize();

    int n_subjects() const { return static_cast<int>(subject_ids.size()); }
    int n_curves() const { return static_cast<int>(curves.size()); }
    int n_obs() const;
    double y_min() const;
    double y_max() const;
};

// Model parameters: one a per curve, one theta per subject, spline weights.
struct Parameters {
    Eigen::VectorXd a;
    Eigen::VectorXd theta;
    Eigen::VectorXd beta;
};

enum class AlphaPolicy {
    MeanOfA,   // alpha tracks mean(a) each update
    Fixed,     // alpha held at alpha_fixed
};

struct FitConfig {
    double lambda1 = 0.04;
    double lambda2 = 0.01;
    double lambda3_0 = 1.0;      // LM damping scale, decays as lambda3_0 / iter
    AlphaPolicy alpha_policy = AlphaPolicy::MeanOfA;
    double alpha_fixed = 0.0;
    bool lm_adaptive = false;    // refresh lambda1/lambda2 from variance estimates
    bool nr_adaptive = true;
    double h = 1.0 / 256.0;      // trajectory grid step
    double lm_tol = 0.005;       // relative loss-change stopping rule
    double nr_tol = 1e-4;
    int lm_max_iters = 200;
    int nr_max_iters = 100;
    int max_loss_increases = 5;  // consecutive increases before declaring divergence
};

// Per-curve trajectory and model derivatives evaluated at the observation
// times. Sensitivity/Hessian blocks are filled according to the order passed
// to evaluate_curve(s).
struct CurveEval {
    TrajectoryBundle bundle;
    std::vector<double> xhat;   // X~(t_ilj)
    std::vector<double> resid;  // y - xhat
    std::vector<double> sens_a, sens_theta;
    Eigen::MatrixXd sens_beta;  // m x M
    std::vector<double> hess_aa, hess_tt;
    Eigen::MatrixXd hess_tb;    // m x M
    std::vector<Eigen::MatrixXd> hess_bb;  // per observation, M x M
};

enum class EvalOrder { ValueOnly, First, SecondTheta, Second };

CurveEval evaluate_curve(const SplineBasis& basis, const Curve& curve, double a, double theta,
                         const Eigen::VectorXd& beta, double h, EvalOrder order);

std::vector<CurveEval> evaluate_curves(const SplineBasis& basis, const Dataset& data,
                                       const Parameters& params, double h, EvalOrder order);

// Penalized objective: sum of squared residuals plus the lambda1, lambda2 and
// roughness penalties.
double loss(const Dataset& data, const Parameters& params, const std::vector<CurveEval>& evals,
            const Eigen::MatrixXd& B, double lambda1, double lambda2, double alpha);

double alpha_value(const Dataset& data, const Parameters& params, const FitConfig& config);

struct VarianceEstimates {
    double sigma_eps2 = 0.0;
    double sigma_a2 = 0.0;
    double sigma_theta2 = 0.0;
};

// Method-of-moments estimates used by the adaptive lambda refresh.
VarianceEstimates variance_estimates(const Dataset& data, const Parameters& params,
                                     const std::vector<CurveEval>& evals, double alpha);

}  // namespace semiode
