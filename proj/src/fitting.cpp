#include "semiode/fitting.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "semiode/common.hpp"

namespace semiode {

namespace {

struct Workspace {
    const SplineBasis& basis;
    const Dataset& data;
    const Eigen::MatrixXd& B;
    const FitConfig& config;
    double lambda1, lambda2;

    double loss_of(const Parameters& p, const std::vector<CurveEval>& evals, double alpha) const {
        return loss(data, p, evals, B, lambda1, lambda2, alpha);
    }

    std::vector<CurveEval> eval(const Parameters& p, EvalOrder order) const {
        return evaluate_curves(basis, data, p, config.h, order);
    }

    // Loss restricted to one curve's residuals plus its a-penalty; used by the
    // blockwise a step and by per-subject step halving.
    double curve_rss(const Parameters& p, int c) const {
        const Curve& cv = data.curves[c];
        CurveEval ev = evaluate_curve(basis, cv, p.a[c], p.theta[cv.subject], p.beta, config.h,
                                      EvalOrder::ValueOnly);
        double rss = 0.0;
        for (double r : ev.resid) rss += r * r;
        return rss;
    }
};

// Solve the damped normal equations for the beta step. Retries once with a
// tenfold larger damping if the system is numerically singular.
Eigen::VectorXd solve_beta_step(const Eigen::MatrixXd& JtJ, const Eigen::VectorXd& rhs,
                                const Eigen::MatrixXd& B, double lambda3) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        Eigen::MatrixXd A = JtJ + B;
        A.diagonal() += lambda3 * JtJ.diagonal();
        Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
        if (ldlt.info() == Eigen::Success) {
            Eigen::VectorXd step = ldlt.solve(rhs);
            if (step.allFinite()) return step;
        }
        lambda3 = (lambda3 > 0 ? lambda3 : 1e-8) * 10.0;
    }
    throw NumericError("beta update: normal equations are singular");
}

void center_theta(Parameters& p) {
    p.theta.array() -= p.theta.mean();
}

void refresh_lambdas(Workspace& ws, const Parameters& p, const std::vector<CurveEval>& evals,
                     double alpha, VarianceEstimates& out) {
    out = variance_estimates(ws.data, p, evals, alpha);
    if (out.sigma_a2 > 0) ws.lambda1 = out.sigma_eps2 / out.sigma_a2;
    if (out.sigma_theta2 > 0) ws.lambda2 = out.sigma_eps2 / out.sigma_theta2;
}

// curve_rss that treats a blown-up trajectory as infinitely bad instead of
// throwing, so backtracking line searches can reject the step and continue.
double safe_curve_rss(const Workspace& ws, const Parameters& p, int c) {
    try {
        const double v = ws.curve_rss(p, c);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    } catch (const NumericError&) {
        return std::numeric_limits<double>::infinity();
    }
}

void lm_update_beta(Workspace& ws, Parameters& p, double lambda3, double alpha,
                    double& beta_step) {
    const std::vector<CurveEval> evals = ws.eval(p, EvalOrder::First);
    const int M = ws.basis.size();
    Eigen::MatrixXd JtJ = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd Jte = Eigen::VectorXd::Zero(M);
    for (const CurveEval& ev : evals) {
        JtJ.noalias() += ev.sens_beta.transpose() * ev.sens_beta;
        Jte.noalias() +=
            ev.sens_beta.transpose() * Eigen::Map<const Eigen::VectorXd>(
                                           ev.resid.data(), static_cast<int>(ev.resid.size()));
    }
    const Eigen::VectorXd rhs = Jte - ws.B * p.beta;
    Eigen::VectorXd step = solve_beta_step(JtJ, rhs, ws.B, lambda3);
    // Backtrack: halve the damped step until the loss it prices stops
    // increasing. An overshooting step on a small dataset can otherwise push
    // the gradient field somewhere the trajectories blow up.
    auto total_loss = [&](const Parameters& q) {
        double v = q.beta.dot(ws.B * q.beta) + ws.lambda2 * q.theta.squaredNorm();
        for (int c = 0; c < ws.data.n_curves(); ++c) {
            const double d = q.a[c] - alpha;
            v += ws.lambda1 * d * d + safe_curve_rss(ws, q, c);
        }
        return v;
    };
    const double base = total_loss(p);
    for (int halving = 0; halving < 24; ++halving) {
        Parameters q = p;
        q.beta += step;
        if (total_loss(q) <= base + 1e-14) {
            beta_step = step.norm();
            p.beta += step;
            return;
        }
        step *= 0.5;
    }
    beta_step = 0.0;
}

void lm_update_theta(Workspace& ws, Parameters& p) {
    const std::vector<CurveEval> evals = ws.eval(p, EvalOrder::First);
    for (int i = 0; i < ws.data.n_subjects(); ++i) {
        double jtj = 0.0, jte = 0.0;
        for (int c : ws.data.by_subject[i]) {
            const CurveEval& ev = evals[c];
            for (std::size_t j = 0; j < ev.resid.size(); ++j) {
                jtj += ev.sens_theta[j] * ev.sens_theta[j];
                jte += ev.sens_theta[j] * ev.resid[j];
            }
        }
        double step = (jte - ws.lambda2 * p.theta[i]) / (jtj + ws.lambda2);
        auto subject_loss = [&](double theta) {
            Parameters q = p;
            q.theta[i] = theta;
            double v = ws.lambda2 * theta * theta;
            for (int c : ws.data.by_subject[i]) v += safe_curve_rss(ws, q, c);
            return v;
        };
        const double base = subject_loss(p.theta[i]);
        for (int halving = 0; halving < 24; ++halving) {
            const double cand = p.theta[i] + step;
            if (subject_loss(cand) <= base + 1e-14) {
                p.theta[i] = cand;
                break;
            }
            step *= 0.5;
        }
    }
    center_theta(p);
}

void lm_update_a(Workspace& ws, Parameters& p, double alpha) {
    const std::vector<CurveEval> evals = ws.eval(p, EvalOrder::First);
    for (int c = 0; c < ws.data.n_curves(); ++c) {
        if (ws.data.curves[c].a_known) continue;
        const CurveEval& ev = evals[c];
        double jtj = 0.0, jte = 0.0;
        for (std::size_t j = 0; j < ev.resid.size(); ++j) {
            jtj += ev.sens_a[j] * ev.sens_a[j];
            jte += ev.sens_a[j] * ev.resid[j];
        }
        double step = (jte + ws.lambda1 * (alpha - p.a[c])) / (jtj + ws.lambda1);
        auto curve_loss = [&](double a) {
            Parameters q = p;
            q.a[c] = a;
            const double d = a - alpha;
            return ws.lambda1 * d * d + safe_curve_rss(ws, q, c);
        };
        const double base = curve_loss(p.a[c]);
        for (int halving = 0; halving < 24; ++halving) {
            const double cand = p.a[c] + step;
            if (curve_loss(cand) <= base + 1e-14) {
                p.a[c] = cand;
                break;
            }
            step *= 0.5;
        }
    }
}

// Newton step for theta, one subject at a time, with a curvature guard
// (Gauss-Newton curvature when the Hessian is not positive) and step halving
// against the subject's contribution to the loss.
void nr_update_theta(Workspace& ws, Parameters& p) {
    const std::vector<CurveEval> evals = ws.eval(p, EvalOrder::SecondTheta);
    for (int i = 0; i < ws.data.n_subjects(); ++i) {
        double grad = 2.0 * ws.lambda2 * p.theta[i];
        double hess = 2.0 * ws.lambda2;
        double hess_gn = 2.0 * ws.lambda2;
        for (int c : ws.data.by_subject[i]) {
            const CurveEval& ev = evals[c];
            for (std::size_t j = 0; j < ev.resid.size(); ++j) {
                grad += -2.0 * ev.resid[j] * ev.sens_theta[j];
                hess += -2.0 * ev.resid[j] * ev.hess_tt[j] +
                        2.0 * ev.sens_theta[j] * ev.sens_theta[j];
                hess_gn += 2.0 * ev.sens_theta[j] * ev.sens_theta[j];
            }
        }
        if (!(hess > 0)) hess = hess_gn;
        if (!(hess > 0)) continue;
        double step = grad / hess;

        auto subject_loss = [&](double theta) {
            Parameters q = p;
            q.theta[i] = theta;
            double v = ws.lambda2 * theta * theta;
            for (int c : ws.data.by_subject[i]) v += safe_curve_rss(ws, q, c);
            return v;
        };
        const double base = subject_loss(p.theta[i]);
        for (int half = 0; half < 10; ++half) {
            const double cand = p.theta[i] - step;
            if (subject_loss(cand) <= base + 1e-14) {
                p.theta[i] = cand;
                break;
            }
            step *= 0.5;
        }
    }
    center_theta(p);
}

void nr_update_beta(Workspace& ws, Parameters& p, double alpha, double& beta_step) {
    const std::vector<CurveEval> evals = ws.eval(p, EvalOrder::Second);
    const int M = ws.basis.size();
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(M, M);
    Eigen::MatrixXd H_gn = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(M);
    for (const CurveEval& ev : evals) {
        for (std::size_t j = 0; j < ev.resid.size(); ++j) {
            const Eigen::VectorXd Jj = ev.sens_beta.row(static_cast<int>(j)).transpose();
            grad.noalias() += -2.0 * ev.resid[j] * Jj;
            H_gn.noalias() += 2.0 * Jj * Jj.transpose();
            H.noalias() += -2.0 * ev.resid[j] * ev.hess_bb[j];
        }
    }
    H += H_gn;
    grad += 2.0 * ws.B * p.beta;
    H += 2.0 * ws.B;
    H_gn += 2.0 * ws.B;

    Eigen::LLT<Eigen::MatrixXd> llt(H);
    Eigen::VectorXd step;
    if (llt.info() == Eigen::Success) {
        step = llt.solve(grad);
    } else {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H_gn);
        if (ldlt.info() != Eigen::Success)
            throw NumericError("beta Newton update: Hessian is singular");
        step = ldlt.solve(grad);
    }
    if (!step.allFinite()) throw NumericError("beta Newton update produced a non-finite step");

    const double base = ws.loss_of(p, evals, alpha);
    Parameters q = p;
    auto cand_loss = [&](const Parameters& c) {
        try {
            const double v = ws.loss_of(c, ws.eval(c, EvalOrder::ValueOnly), alpha);
            return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
        } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    for (int half = 0; half < 10; ++half) {
        q.beta = p.beta - step;
        if (cand_loss(q) <= base + 1e-14) {
            beta_step = step.norm();
            p.beta = q.beta;
            return;
        }
        step *= 0.5;
    }
    beta_step = 0.0;  // no acceptable step; keep beta
}

}  // namespace

Parameters default_init(const SplineBasis& basis, const Dataset& data) {
    Parameters p;
    p.a.resize(data.n_curves());
    for (int c = 0; c < data.n_curves(); ++c) {
        const Curve& cv = data.curves[c];
        p.a[c] = cv.a_known ? cv.a0 : cv.y.front();
    }
    p.theta = Eigen::VectorXd::Zero(data.n_subjects());
    p.beta = Eigen::VectorXd::Ones(basis.size());
    return p;
}

FitResult fit(const SplineBasis& basis, const Dataset& data, const Parameters& init,
              const Eigen::MatrixXd& B, const FitConfig& config) {
    if (B.rows() != basis.size() || B.cols() != basis.size())
        throw ArgumentError("penalty matrix dimension does not match the basis");
    Workspace ws{basis, data, B, config, config.lambda1, config.lambda2};
    FitResult res;
    res.params = init;

    VarianceEstimates var;

    // Lambda-free decomposition of the loss; repricing a cached decomposition
    // under new lambdas avoids a full re-evaluation of the previous iterate.
    struct LossParts {
        double rss = 0.0, a_dev = 0.0, th2 = 0.0, rough = 0.0;
        double priced(double l1, double l2) const { return rss + l1 * a_dev + l2 * th2 + rough; }
    };
    auto parts_of = [&](const Parameters& p, const std::vector<CurveEval>& evals, double alpha) {
        LossParts lp;
        for (const CurveEval& ev : evals)
            for (double r : ev.resid) lp.rss += r * r;
        for (int c = 0; c < data.n_curves(); ++c) {
            const double d = p.a[c] - alpha;
            lp.a_dev += d * d;
        }
        lp.th2 = p.theta.squaredNorm();
        lp.rough = p.beta.dot(ws.B * p.beta);
        return lp;
    };
    auto current_parts = [&](const Parameters& p) {
        return parts_of(p, ws.eval(p, EvalOrder::ValueOnly), alpha_value(data, p, config));
    };
    LossParts last_parts = current_parts(res.params);

    auto run_phase = [&](Phase phase, int max_iters, double tol, bool adaptive, bool& converged,
                         int& iters_out) {
        int increases = 0;
        for (int iter = 1; iter <= max_iters; ++iter) {
            const double alpha = alpha_value(data, res.params, config);
            double beta_step = 0.0;
            if (phase == Phase::LM) {
                lm_update_beta(ws, res.params, config.lambda3_0 / iter, alpha, beta_step);
                lm_update_theta(ws, res.params);
                lm_update_a(ws, res.params, alpha_value(data, res.params, config));
            } else {
                nr_update_beta(ws, res.params, alpha, beta_step);
                nr_update_theta(ws, res.params);
                lm_update_a(ws, res.params, alpha_value(data, res.params, config));
            }
            const double alpha_new = alpha_value(data, res.params, config);
            const std::vector<CurveEval> evals = ws.eval(res.params, EvalOrder::ValueOnly);
            const LossParts cur_parts = parts_of(res.params, evals, alpha_new);
            const double cur = cur_parts.priced(ws.lambda1, ws.lambda2);
            res.trace.push_back({iter, phase, cur, ws.lambda1, ws.lambda2,
                                 phase == Phase::LM ? config.lambda3_0 / iter : 0.0, beta_step});
            iters_out = iter;
            // Divergence is judged with both iterates priced under the same
            // (current) lambdas; adaptive refreshes change the objective
            // between cycles, so raw loss-vs-loss is not comparable.
            const double ref = last_parts.priced(ws.lambda1, ws.lambda2);
            last_parts = cur_parts;
            increases = cur > ref + 1e-14 ? increases + 1 : 0;
            if (increases >= config.max_loss_increases)
                throw DivergenceError("fit diverged: loss increased for " +
                                          std::to_string(increases) + " consecutive cycles",
                                      res.trace);
            if (adaptive) refresh_lambdas(ws, res.params, evals, alpha_new, var);
            if (beta_step < tol) {
                converged = true;
                return;
            }
        }
    };

    run_phase(Phase::LM, config.lm_max_iters, config.lm_tol, config.lm_adaptive, res.lm_converged,
              res.lm_iters);
    const Parameters handoff = res.params;
    run_phase(Phase::NR, config.nr_max_iters, config.nr_tol, config.nr_adaptive, res.nr_converged,
              res.nr_iters);
    // The NR phase must not terminate above its initialization (priced under
    // the final lambdas).
    if (last_parts.priced(ws.lambda1, ws.lambda2) >
        current_parts(handoff).priced(ws.lambda1, ws.lambda2))
        res.params = handoff;

    const double alpha = alpha_value(data, res.params, config);
    const std::vector<CurveEval> evals = ws.eval(res.params, EvalOrder::ValueOnly);
    res.alpha = alpha;
    res.final_loss = ws.loss_of(res.params, evals, alpha);
    res.lambda1 = ws.lambda1;
    res.lambda2 = ws.lambda2;
    try {
        res.variances = variance_estimates(data, res.params, evals, alpha);
    } catch (const DataError&) {
        res.variances = var;  // tiny datasets: keep the last refresh (possibly zeros)
    }
    return res;
}

}  // namespace semiode
