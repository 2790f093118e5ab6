#include "semiode/selection.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>

#include "semiode/common.hpp"

namespace semiode {

namespace {

// Golden-section minimization on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = f(c), fd = f(d);
    while (hi - lo > tol) {
        if (fc < fd) {
            hi = d;
            d = c;
            fd = fc;
            c = hi - gr * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + gr * (hi - lo);
            fd = f(d);
        }
    }
    return 0.5 * (lo + hi);
}

double curve_pred_loss(const SplineBasis& basis, const Curve& cv, double a, double theta,
                       const Eigen::VectorXd& beta, double h) {
    CurveEval ev = evaluate_curve(basis, cv, a, theta, beta, h, EvalOrder::ValueOnly);
    double s = 0.0;
    for (double r : ev.resid) s += r * r;
    return s;
}

// Bracket half-width for the 1-D minimization of a-tilde; falls back to a
// data-scale width when the a-variance estimate is degenerate.
double a_bracket(const Dataset& data, double sigma_a2) {
    if (sigma_a2 > 0) return 3.0 * std::sqrt(sigma_a2);
    return 0.05 * std::max(data.y_max() - data.y_min(), 1e-3);
}

}  // namespace

SplineBasis make_basis(const ModelSpec& spec) {
    return SplineBasis(spec.degree, spec.knots, spec.x_lo, spec.x_hi, spec.mode,
                       spec.l2_normalized);
}

double approx_cv(const SplineBasis& basis, const Dataset& data, const FitResult& fit,
                 const Eigen::MatrixXd& B, const FitConfig& config) {
    const int M = basis.size();
    const std::vector<CurveEval> evals =
        evaluate_curves(basis, data, fit.params, config.h, EvalOrder::Second);

    // Full-data Hessian of the CV criterion in beta, plus 2B.
    Eigen::MatrixXd H = 2.0 * B;
    for (const CurveEval& ev : evals)
        for (std::size_t j = 0; j < ev.resid.size(); ++j) {
            const Eigen::VectorXd Jj = ev.sens_beta.row(static_cast<int>(j)).transpose();
            H.noalias() += 2.0 * Jj * Jj.transpose() - 2.0 * ev.resid[j] * ev.hess_bb[j];
        }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success)
        throw NumericError("approx_cv: corrected beta Hessian is singular");

    // Per-subject Hessians of the CV criterion in theta, plus 2*lambda2.
    std::vector<double> D(data.n_subjects(), 2.0 * fit.lambda2);
    for (int c = 0; c < data.n_curves(); ++c) {
        const CurveEval& ev = evals[c];
        const int i = data.curves[c].subject;
        for (std::size_t j = 0; j < ev.resid.size(); ++j)
            D[i] += -2.0 * ev.resid[j] * ev.hess_tt[j] + 2.0 * ev.sens_theta[j] * ev.sens_theta[j];
    }

    const double half_width = a_bracket(data, fit.variances.sigma_a2);
    double score = 0.0;
    for (int c = 0; c < data.n_curves(); ++c) {
        const Curve& cv = data.curves[c];
        const int i = cv.subject;
        if (data.by_subject[i].size() == 1 && !(fit.lambda2 > 0))
            throw NumericError("approx_cv: subject " + data.subject_ids[i] +
                               " has a single curve and lambda2 = 0; the theta correction is "
                               "undefined");
        if (!(D[i] > 0))
            throw NumericError("approx_cv: nonpositive theta curvature for subject " +
                               data.subject_ids[i]);

        const CurveEval& ev = evals[c];
        double g_theta = 0.0;
        Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(M);
        for (std::size_t j = 0; j < ev.resid.size(); ++j) {
            g_theta += -2.0 * ev.resid[j] * ev.sens_theta[j];
            g_beta.noalias() +=
                -2.0 * ev.resid[j] * ev.sens_beta.row(static_cast<int>(j)).transpose();
        }
        const double theta_t = fit.params.theta[i] + g_theta / D[i];
        const Eigen::VectorXd beta_t = fit.params.beta + ldlt.solve(g_beta);
        if (!beta_t.allFinite())
            throw NumericError("approx_cv: non-finite beta correction for curve " + cv.curve_id);

        double a_t;
        if (cv.a_known) {
            a_t = cv.a0;
        } else {
            const double a_hat = fit.params.a[c];
            auto obj = [&](double a) {
                const double d = a - fit.alpha;
                return curve_pred_loss(basis, cv, a, theta_t, beta_t, config.h) +
                       fit.lambda1 * d * d;
            };
            a_t = golden_section(obj, a_hat - half_width, a_hat + half_width, 1e-8);
        }
        score += curve_pred_loss(basis, cv, a_t, theta_t, beta_t, config.h);
    }
    return score;
}

double exact_cv(const SplineBasis& basis, const Dataset& data, const Eigen::MatrixXd& B,
                const FitConfig& config) {
    if (data.n_curves() < 2) throw DataError("exact_cv: cannot drop the only curve");
    double score = 0.0;
    for (int drop = 0; drop < data.n_curves(); ++drop) {
        Dataset sub;
        sub.time_origin = data.time_origin;
        sub.time_scale = data.time_scale;
        for (int c = 0; c < data.n_curves(); ++c)
            if (c != drop) sub.curves.push_back(data.curves[c]);
        sub.finalize();

        const Curve& dropped = data.curves[drop];
        auto pos = std::find(sub.subject_ids.begin(), sub.subject_ids.end(), dropped.subject_id);
        if (pos == sub.subject_ids.end())
            throw DataError("exact_cv: dropping curve " + dropped.curve_id +
                            " removes all data for its subject");
        const int sub_subject = static_cast<int>(pos - sub.subject_ids.begin());

        FitResult fr;
        try {
            fr = fit(basis, sub, default_init(basis, sub), B, config);
        } catch (const NumericError& e) {
            throw NumericError("exact_cv: drop-fit for curve " + dropped.curve_id +
                               " failed: " + e.what());
        }

        const double theta_d = fr.params.theta[sub_subject];
        double a_d;
        if (dropped.a_known) {
            a_d = dropped.a0;
        } else {
            const double half_width = a_bracket(data, fr.variances.sigma_a2);
            const double a0 = dropped.y.front();
            auto obj = [&](double a) {
                const double d = a - fr.alpha;
                return curve_pred_loss(basis, dropped, a, theta_d, fr.params.beta, config.h) +
                       config.lambda1 * d * d;
            };
            a_d = golden_section(obj, a0 - half_width, a0 + half_width, 1e-8);
        }
        score += curve_pred_loss(basis, dropped, a_d, theta_d, fr.params.beta, config.h);
    }
    return score;
}

std::vector<DerivativePoint> empirical_derivatives(const Dataset& data) {
    std::vector<DerivativePoint> out;
    for (int c = 0; c < data.n_curves(); ++c) {
        const Curve& cv = data.curves[c];
        for (std::size_t j = 0; j + 1 < cv.t.size(); ++j) {
            const double dt = cv.t[j + 1] - cv.t[j];
            if (!(dt > 0))
                throw DataError("curve " + cv.curve_id + " has duplicate observation times");
            out.push_back({c, 0.5 * (cv.y[j] + cv.y[j + 1]), (cv.y[j + 1] - cv.y[j]) / dt});
        }
    }
    return out;
}

namespace {

double trunc_cube(double x, double knot) {
    const double d = x - knot;
    return d > 0 ? d * d * d : 0.0;
}

// Design matrix for columns [x^2, x^3, (x - knot)^3_+ ...].
Eigen::MatrixXd stepwise_design(const std::vector<DerivativePoint>& pts,
                                const std::vector<double>& knots) {
    const int n = static_cast<int>(pts.size());
    Eigen::MatrixXd X(n, 2 + static_cast<int>(knots.size()));
    for (int i = 0; i < n; ++i) {
        const double x = pts[i].x;
        X(i, 0) = x * x;
        X(i, 1) = x * x * x;
        for (std::size_t k = 0; k < knots.size(); ++k) X(i, 2 + k) = trunc_cube(x, knots[k]);
    }
    return X;
}

double rss_of(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<int>& cols,
              Eigen::VectorXd* coef_out) {
    const int n = static_cast<int>(y.size());
    Eigen::MatrixXd Xs(n, static_cast<int>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) Xs.col(static_cast<int>(k)) = X.col(cols[k]);
    // Ridge-stabilized normal equations; the truncated-power design is
    // notoriously ill-conditioned.
    Eigen::MatrixXd A = Xs.transpose() * Xs;
    A.diagonal().array() += 1e-10 * A.diagonal().maxCoeff() + 1e-300;
    const Eigen::VectorXd coef = A.ldlt().solve(Xs.transpose() * y);
    if (coef_out) *coef_out = coef;
    return (y - Xs * coef).squaredNorm();
}

double criterion_value(double rss, int n, int p, StepwiseCriterion crit) {
    const double base = n * std::log(std::max(rss, 1e-300) / n);
    return base + (crit == StepwiseCriterion::AIC ? 2.0 : std::log(static_cast<double>(n))) * p;
}

// Difference-based noise estimate: deviation of each interior observation
// from the line through its neighbors, normalized so E[e^2] = sigma^2.
double difference_noise_sd(const Dataset& data) {
    double ss = 0.0;
    int cnt = 0;
    for (const Curve& cv : data.curves) {
        for (std::size_t j = 1; j + 1 < cv.t.size(); ++j) {
            const double span = cv.t[j + 1] - cv.t[j - 1];
            if (!(span > 0)) continue;
            const double w = (cv.t[j + 1] - cv.t[j]) / span;  // weight on y_{j-1}
            const double pred = w * cv.y[j - 1] + (1.0 - w) * cv.y[j + 1];
            const double norm = 1.0 + w * w + (1.0 - w) * (1.0 - w);
            ss += (cv.y[j] - pred) * (cv.y[j] - pred) / norm;
            ++cnt;
        }
    }
    return cnt > 0 ? std::sqrt(ss / cnt) : 0.0;
}

}  // namespace

double StepwiseResult::g0(double x) const {
    double v = coef[0] * x * x + coef[1] * x * x * x;
    for (std::size_t k = 0; k < selected_knots.size(); ++k)
        v += coef[2 + static_cast<int>(k)] * trunc_cube(x, selected_knots[k]);
    return v;
}

StepwiseResult stepwise_init(const Dataset& data, const std::vector<double>& candidate_knots,
                             StepwiseCriterion criterion, const Eigen::VectorXd* theta0_in) {
    std::vector<DerivativePoint> pts = empirical_derivatives(data);
    const int n = static_cast<int>(pts.size());
    StepwiseResult res;

    Eigen::VectorXd theta0;
    if (theta0_in) {
        if (theta0_in->size() != data.n_subjects())
            throw ArgumentError("stepwise_init: theta0 length does not match subject count");
        theta0 = *theta0_in;
    } else {
        theta0 = Eigen::VectorXd::Zero(data.n_subjects());
    }

    const Eigen::MatrixXd X = stepwise_design(pts, candidate_knots);

    auto forward_select = [&](const Eigen::VectorXd& y, std::vector<int>& cols,
                              Eigen::VectorXd& coef) {
        cols = {0, 1};  // x^2 and x^3 always enter
        double best = criterion_value(rss_of(X, y, cols, &coef), n, 2, criterion);
        const int K = static_cast<int>(candidate_knots.size());
        std::vector<bool> in(K, false);
        while (static_cast<int>(cols.size()) < n) {
            int pick = -1;
            double pick_val = best;
            for (int k = 0; k < K; ++k) {
                if (in[k]) continue;
                std::vector<int> trial = cols;
                trial.push_back(2 + k);
                const double v = criterion_value(rss_of(X, y, trial, nullptr), n,
                                                 static_cast<int>(trial.size()), criterion);
                if (v < pick_val - 1e-12) {
                    pick_val = v;
                    pick = k;
                }
            }
            if (pick < 0) break;
            in[pick] = true;
            cols.push_back(2 + pick);
            best = pick_val;
        }
        rss_of(X, y, cols, &coef);
    };

    Eigen::VectorXd y(n);
    auto fill_response = [&] {
        for (int i = 0; i < n; ++i)
            y[i] = std::exp(-theta0[data.curves[pts[i].curve].subject]) * pts[i].xprime;
    };
    fill_response();

    std::vector<int> cols;
    Eigen::VectorXd coef;
    forward_select(y, cols, coef);

    if (!theta0_in) {
        // Refine preliminary subject scales from the pooled fit: least-squares
        // slope of X' on g0(X) per subject, then re-run the selection with the
        // rescaled responses.
        StepwiseResult pooled;
        pooled.coef = coef;
        for (std::size_t k = 2; k < cols.size(); ++k)
            pooled.selected_knots.push_back(candidate_knots[cols[k] - 2]);
        for (int i = 0; i < data.n_subjects(); ++i) {
            double num = 0.0, den = 0.0;
            for (const DerivativePoint& p : pts) {
                if (data.curves[p.curve].subject != i) continue;
                const double g = pooled.g0(p.x);
                num += p.xprime * g;
                den += g * g;
            }
            theta0[i] = (den > 0 && num > 0) ? std::log(num / den) : 0.0;
        }
        theta0.array() -= theta0.mean();
        fill_response();
        forward_select(y, cols, coef);
    }

    res.theta0 = theta0;
    res.coef = coef;
    for (std::size_t k = 2; k < cols.size(); ++k)
        res.selected_knots.push_back(candidate_knots[cols[k] - 2]);
    std::sort(res.selected_knots.begin(), res.selected_knots.end());

    res.sigma_eps_ini = difference_noise_sd(data);
    res.sigma_theta_ini =
        data.n_subjects() > 1 ? std::sqrt(theta0.squaredNorm() / (data.n_subjects() - 1)) : 0.0;
    return res;
}

Eigen::VectorXd project_g(const SplineBasis& basis, const std::function<double(double)>& g,
                          int grid_points) {
    const int M = basis.size();
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(M, M);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(M);
    const double lo = basis.x_lo(), hi = basis.x_hi();
    for (int i = 0; i <= grid_points; ++i) {
        const double x = lo + (hi - lo) * i / grid_points;
        const Eigen::VectorXd phi = basis.eval(x, 0);
        A.noalias() += phi * phi.transpose();
        b.noalias() += g(x) * phi;
    }
    A.diagonal().array() += 1e-10 * (A.diagonal().maxCoeff() + 1.0);
    return A.ldlt().solve(b);
}

CvReport model_search(const Dataset& data, const std::vector<ModelSpec>& grid,
                      const FitConfig& config, const StepwiseResult* init) {
    if (grid.empty()) throw ArgumentError("model_search: empty model grid");
    CvReport report;
    double best = std::numeric_limits<double>::infinity();
    for (const ModelSpec& spec : grid) {
        CvRow row;
        row.id = spec.id;
        row.A = spec.A;
        row.lambda_R = spec.lambda_R;
        try {
            SplineBasis basis = make_basis(spec);
            const PenaltyMatrix pen = penalty_matrix(basis, spec.A, spec.lambda_R);
            Parameters p0 = default_init(basis, data);
            if (init) {
                p0.theta = init->theta0;
                p0.beta = project_g(basis, [&](double x) { return init->g0(x); });
            }
            FitResult fr = fit(basis, data, p0, pen.B, config);
            row.lm_iters = fr.lm_iters;
            row.nr_iters = fr.nr_iters;
            row.converged = fr.lm_converged && fr.nr_converged;
            row.cv = approx_cv(basis, data, fr, pen.B, config);
        } catch (const NumericError&) {
            row.converged = false;
        }
        if (row.converged && row.cv < best) {
            best = row.cv;
            report.selected = static_cast<int>(report.rows.size());
        }
        report.rows.push_back(row);
    }
    if (report.selected < 0)
        throw NumericError("model_search: no candidate model converged");
    return report;
}

}  // namespace semiode
