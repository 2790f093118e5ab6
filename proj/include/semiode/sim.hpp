#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "semiode/selection.hpp"

namespace semiode {

struct UniformInt {
    int lo = 1, hi = 1;
};

struct SimConfig {
    int n = 10;                 // subjects
    int N = 20;                 // curves per subject
    UniformInt m{5, 20};        // observations per curve
    double theta_sd = 0.1;
    double a_mean = 0.25;       // alpha
    double a_sd = 0.05;
    double noise_sd = 0.01;
    bool a_known = false;
    ModelSpec truth;            // basis of the true gradient function
    Eigen::VectorXd truth_beta;
    double truth_h = 1.0 / 1024.0;  // generation grid (finer than fitting)
    std::uint64_t seed = 1;
};

// The simulation protocol: truth spanned by 4 cubic B-splines with knots
// (0.35, 0.6, 0.85, 1.1) and beta = (0.1, 1.2, 1.6, 0.4).
SimConfig default_sim_config();

// Plant-shaped variant: sigmoidal truth with g(0) = g'(0) = 0 and a plateau,
// original time window [0, 12], ragged curves, known initial markers.
SimConfig plant_sim_config();

// Scaled chi-square parameters with mean c*k = target mean, var 2c^2 k.
void chi_square_params(double mean, double sd, double& c, double& k);

// Documented split function deriving per-replicate seeds from the master seed.
std::uint64_t splitmix64(std::uint64_t x);

struct GeneratedData {
    Dataset data;
    Eigen::VectorXd theta_true;  // per subject
    Eigen::VectorXd a_true;      // per curve
};

GeneratedData generate(const SimConfig& config);

// Integrated squared error of g_hat against g_true over [lo, hi] by 512-point
// composite Simpson quadrature.
double ise(const SplineBasis& basis_hat, const Eigen::VectorXd& beta_hat,
           const SplineBasis& basis_true, const Eigen::VectorXd& beta_true, double lo, double hi,
           int points = 512);

double spe(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true);

struct ReplicateRow {
    int replicate = 0;
    std::uint64_t seed = 0;
    bool ok = false;                  // model_search and accuracy fit both succeeded
    std::string error;
    std::string selected_id;
    std::vector<std::string> candidate_ids;
    std::vector<bool> candidate_converged;
    double ise_value = 0.0;           // under the accuracy model
    double spe_value = 0.0;
    bool accuracy_converged = false;
};

struct StudyReport {
    std::vector<ReplicateRow> rows;
    std::map<std::string, int> selection_counts;
    std::map<std::string, int> convergence_counts;
    double mise = 0.0, sd_ise = 0.0;
    double mspe = 0.0, sd_spe = 0.0;
    int n_ok = 0;
};

// Per replicate: generate, model_search over `grid`, and an accuracy fit of
// `accuracy_model` whose ISE/SPE feed the aggregates. Either stage may be
// skipped by passing an empty grid / null accuracy model.
StudyReport run_study(const SimConfig& sim, const std::vector<ModelSpec>& grid,
                      const ModelSpec* accuracy_model, const FitConfig& fit_config,
                      int replicates, double ise_lo = 0.1, double ise_hi = 1.2);

}  // namespace semiode
