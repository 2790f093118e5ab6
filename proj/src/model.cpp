#include "semiode/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "semiode/common.hpp"

namespace semiode {

void Dataset::finalize() {
    if (curves.empty()) throw DataError("dataset contains no curves");
    subject_ids.clear();
    by_subject.clear();
    std::map<std::string, int> index;
    for (std::size_t c = 0; c < curves.size(); ++c) {
        Curve& cv = curves[c];
        if (cv.t.empty()) throw DataError("curve " + cv.curve_id + " has no observations");
        if (cv.t.size() != cv.y.size())
            throw DataError("curve " + cv.curve_id + " has mismatched time/value lengths");
        for (std::size_t j = 0; j < cv.t.size(); ++j) {
            if (!std::isfinite(cv.t[j]) || !std::isfinite(cv.y[j]))
                throw DataError("curve " + cv.curve_id + " contains non-finite data");
            if (cv.t[j] < -1e-9 || cv.t[j] > 1.0 + 1e-9)
                throw DataError("curve " + cv.curve_id + " has times outside [0, 1]");
            if (j > 0 && cv.t[j] < cv.t[j - 1])
                throw DataError("curve " + cv.curve_id + " has unsorted times");
        }
        auto it = index.find(cv.subject_id);
        if (it == index.end()) {
            it = index.emplace(cv.subject_id, static_cast<int>(subject_ids.size())).first;
            subject_ids.push_back(cv.subject_id);
            by_subject.emplace_back();
        }
        cv.subject = it->second;
        by_subject[it->second].push_back(static_cast<int>(c));
    }
    subject_obs.assign(subject_ids.size(), 0);
    for (const Curve& cv : curves)
        subject_obs[cv.subject] += static_cast<int>(cv.t.size());
}

int Dataset::n_obs() const {
    int m = 0;
    for (const Curve& cv : curves) m += static_cast<int>(cv.t.size());
    return m;
}

double Dataset::y_min() const {
    double lo = curves.front().y.front();
    for (const Curve& cv : curves)
        for (double v : cv.y) lo = std::min(lo, v);
    return lo;
}

double Dataset::y_max() const {
    double hi = curves.front().y.front();
    for (const Curve& cv : curves)
        for (double v : cv.y) hi = std::max(hi, v);
    return hi;
}

CurveEval evaluate_curve(const SplineBasis& basis, const Curve& curve, double a, double theta,
                         const Eigen::VectorXd& beta, double h, EvalOrder order) {
    const int M = basis.size();
    const int m = static_cast<int>(curve.t.size());
    VectorField field{&basis, beta, theta};
    CurveEval ev;
    ev.bundle = solve_trajectory(field, a, h);
    if (order != EvalOrder::ValueOnly) {
        SensOrder so = SensOrder::First;
        if (order == EvalOrder::Second) so = SensOrder::Second;
        if (order == EvalOrder::SecondTheta) so = SensOrder::SecondTheta;
        propagate_sensitivities(field, ev.bundle, so);
    }
    ev.xhat = eval_at_times(ev.bundle, curve.t);
    ev.resid.resize(m);
    for (int j = 0; j < m; ++j) ev.resid[j] = curve.y[j] - ev.xhat[j];
    if (order == EvalOrder::ValueOnly) return ev;

    ev.sens_a.resize(m);
    ev.sens_theta.resize(m);
    ev.sens_beta.resize(m, M);
    for (int j = 0; j < m; ++j) {
        const double t = curve.t[j];
        ev.sens_a[j] = ev.bundle.sens_a.at(t);
        ev.sens_theta[j] = ev.bundle.sens_theta.at(t);
        for (int r = 0; r < M; ++r) ev.sens_beta(j, r) = ev.bundle.sens_beta[r].at(t);
    }
    if (order != EvalOrder::Second && order != EvalOrder::SecondTheta) return ev;

    ev.hess_tt.resize(m);
    for (int j = 0; j < m; ++j) ev.hess_tt[j] = ev.bundle.hess_tt.at(curve.t[j]);
    if (order != EvalOrder::Second) return ev;

    ev.hess_aa.resize(m);
    ev.hess_tb.resize(m, M);
    ev.hess_bb.assign(m, Eigen::MatrixXd(M, M));
    for (int j = 0; j < m; ++j) {
        const double t = curve.t[j];
        ev.hess_aa[j] = ev.bundle.hess_aa.at(t);
        for (int r = 0; r < M; ++r) {
            ev.hess_tb(j, r) = ev.bundle.hess_tb[r].at(t);
            for (int rp = r; rp < M; ++rp) {
                const double v = ev.bundle.hess_bb[r][rp].at(t);
                ev.hess_bb[j](r, rp) = v;
                ev.hess_bb[j](rp, r) = v;
            }
        }
    }
    return ev;
}

std::vector<CurveEval> evaluate_curves(const SplineBasis& basis, const Dataset& data,
                                       const Parameters& params, double h, EvalOrder order) {
    if (params.a.size() != data.n_curves())
        throw ArgumentError("parameter vector a has wrong length");
    if (params.theta.size() != data.n_subjects())
        throw ArgumentError("parameter vector theta has wrong length");
    if (params.beta.size() != basis.size())
        throw ArgumentError("parameter vector beta has wrong length");
    std::vector<CurveEval> evals;
    evals.reserve(data.curves.size());
    for (int c = 0; c < data.n_curves(); ++c) {
        const Curve& cv = data.curves[c];
        evals.push_back(evaluate_curve(basis, cv, params.a[c], params.theta[cv.subject],
                                       params.beta, h, order));
    }
    return evals;
}

double loss(const Dataset& data, const Parameters& params, const std::vector<CurveEval>& evals,
            const Eigen::MatrixXd& B, double lambda1, double lambda2, double alpha) {
    double rss = 0.0;
    for (const CurveEval& ev : evals)
        for (double r : ev.resid) rss += r * r;
    double pen_a = 0.0;
    for (int c = 0; c < data.n_curves(); ++c) {
        const double d = params.a[c] - alpha;
        pen_a += d * d;
    }
    double pen_theta = 0.0;
    for (int i = 0; i < data.n_subjects(); ++i) pen_theta += params.theta[i] * params.theta[i];
    const double rough = params.beta.dot(B * params.beta);
    return rss + lambda1 * pen_a + lambda2 * pen_theta + rough;
}

double alpha_value(const Dataset& data, const Parameters& params, const FitConfig& config) {
    if (config.alpha_policy == AlphaPolicy::Fixed) return config.alpha_fixed;
    (void)data;
    return params.a.mean();
}

VarianceEstimates variance_estimates(const Dataset& data, const Parameters& params,
                                     const std::vector<CurveEval>& evals, double alpha) {
    VarianceEstimates v;
    const int m_total = data.n_obs();
    const int N = data.n_curves();
    const int n = data.n_subjects();
    const int M = static_cast<int>(params.beta.size());
    double rss = 0.0;
    for (const CurveEval& ev : evals)
        for (double r : ev.resid) rss += r * r;
    const int dof = m_total - N - n - M;
    if (dof <= 0) throw DataError("too few observations for the error-variance estimate");
    v.sigma_eps2 = rss / dof;
    if (N > 1) {
        double ss = 0.0;
        for (int c = 0; c < N; ++c) {
            const double d = params.a[c] - alpha;
            ss += d * d;
        }
        v.sigma_a2 = ss / (N - 1);
    }
    if (n > 1) {
        double ss = 0.0;
        for (int i = 0; i < n; ++i) ss += params.theta[i] * params.theta[i];
        v.sigma_theta2 = ss / (n - 1);
    }
    return v;
}

}  // namespace semiode
