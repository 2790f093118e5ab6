#pragma once

#include <string>
#include <vector>

#include "semiode/model.hpp"

namespace semiode {

enum class Phase { LM, NR };

struct TraceRecord {
    int iter = 0;
    Phase phase = Phase::LM;
    double loss = 0.0;
    double lambda1 = 0.0, lambda2 = 0.0, lambda3 = 0.0;
    double beta_step = 0.0;  // ||beta_new - beta_old||
};

struct FitResult {
    Parameters params;
    double alpha = 0.0;
    double final_loss = 0.0;
    bool lm_converged = false;
    bool nr_converged = false;
    bool diverged = false;
    int lm_iters = 0;
    int nr_iters = 0;
    double lambda1 = 0.0, lambda2 = 0.0;  // values in effect at the end
    VarianceEstimates variances;
    std::vector<TraceRecord> trace;
};

// Thrown when the loss increases for max_loss_increases consecutive cycles.
class DivergenceError : public NumericError {
public:
    DivergenceError(const std::string& what, std::vector<TraceRecord> trace)
        : NumericError(what), trace(std::move(trace)) {}
    std::vector<TraceRecord> trace;
};

// Blockwise Levenberg-Marquardt pass followed by Newton-Raphson refinement.
// Curves with a_known keep their initial condition fixed at a0; all other
// initial conditions are updated each cycle.
FitResult fit(const SplineBasis& basis, const Dataset& data, const Parameters& init,
              const Eigen::MatrixXd& B, const FitConfig& config);

// Default initial parameters: a_il = first observation (or a0 when known),
// theta = 0, beta = 1.
Parameters default_init(const SplineBasis& basis, const Dataset& data);

}  // namespace semiode
