#include "semiode/ode.hpp"

#include <cmath>
#include <string>

namespace semiode {

namespace {

int grid_steps(double h) {
    if (!(h > 0)) throw ArgumentError("grid step h must be > 0");
    const int n = static_cast<int>(std::lround(1.0 / h));
    if (n < 1 || std::abs(n * h - 1.0) > 1e-9)
        throw ArgumentError("grid step h must divide 1 into integer steps");
    return n;
}

[[noreturn]] void throw_nonfinite(const char* what, double t, double y) {
    throw NumericError(std::string(what) + " produced a non-finite value at t=" +
                       std::to_string(t) + ", y=" + std::to_string(y));
}

// Coefficients of the variational ODEs sampled on the fine trajectory grid.
struct CoeffTable {
    int n = 0;  // fine steps
    int M = 0;
    double et = 1.0;  // e^theta
    std::vector<double> gv, g1, g2;   // g, g', g'' at X(t_m)
    std::vector<double> phi, phi1;    // phi_r and phi_r' at X(t_m), row-major (n+1) x M

    double p(int m, int r) const { return phi[static_cast<std::size_t>(m) * M + r]; }
    double p1(int m, int r) const { return phi1[static_cast<std::size_t>(m) * M + r]; }
};

CoeffTable tabulate(const VectorField& field, const TrajectoryBundle& bundle, bool second_order) {
    CoeffTable ct;
    ct.n = static_cast<int>(bundle.x.v.size()) - 1;
    ct.M = static_cast<int>(field.beta.size());
    ct.et = std::exp(field.theta);
    ct.gv.resize(ct.n + 1);
    ct.g1.resize(ct.n + 1);
    if (second_order) ct.g2.resize(ct.n + 1);
    ct.phi.assign(static_cast<std::size_t>(ct.n + 1) * ct.M, 0.0);
    ct.phi1.assign(static_cast<std::size_t>(ct.n + 1) * ct.M, 0.0);
    double vals[16];
    for (int m = 0; m <= ct.n; ++m) {
        const double xm = bundle.x.v[m];
        int first = 0;
        // g and its derivatives are dots of the phi rows with beta; evaluating
        // the rows once per point halves the basis-kernel calls.
        int cnt = field.basis->eval_nonzero(xm, 0, first, vals);
        double g0 = 0.0;
        for (int i = 0; i < cnt; ++i) {
            ct.phi[static_cast<std::size_t>(m) * ct.M + first + i] = vals[i];
            g0 += field.beta[first + i] * vals[i];
        }
        ct.gv[m] = g0;
        cnt = field.basis->eval_nonzero(xm, 1, first, vals);
        double g1 = 0.0;
        for (int i = 0; i < cnt; ++i) {
            ct.phi1[static_cast<std::size_t>(m) * ct.M + first + i] = vals[i];
            g1 += field.beta[first + i] * vals[i];
        }
        ct.g1[m] = g1;
        if (second_order) ct.g2[m] = field.g(xm, 2);
    }
    return ct;
}

// RK4 for the scalar linear ODE y' = c(t) y + q(t), where c and q are known at
// the step endpoints and midpoint (indices m, m+half, m+2*half on a finer grid).
class LinearPropagator {
public:
    LinearPropagator(const std::vector<double>& c, double step, int stride)
        : c_(c), step_(step), stride_(stride) {}

    // q evaluated at fine index; caller supplies a callable.
    template <typename Q>
    GridPath run(double y0, Q&& q, const char* label) const {
        const int n_fine = static_cast<int>(c_.size()) - 1;
        const int n = n_fine / stride_;
        GridPath p;
        p.step = step_;
        p.v.resize(n + 1);
        p.dv.resize(n + 1);
        double y = y0;
        p.v[0] = y;
        p.dv[0] = c_[0] * y + q(0);
        const int half = stride_ / 2;
        for (int j = 0; j < n; ++j) {
            const int m = j * stride_;
            const double c0 = c_[m], cm = c_[m + half], c1 = c_[m + stride_];
            const double q0 = q(m), qm = q(m + half), q1 = q(m + stride_);
            const double k1 = c0 * y + q0;
            const double k2 = cm * (y + 0.5 * step_ * k1) + qm;
            const double k3 = cm * (y + 0.5 * step_ * k2) + qm;
            const double k4 = c1 * (y + step_ * k3) + q1;
            y += step_ / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
            if (!std::isfinite(y)) throw_nonfinite(label, (j + 1) * step_, y);
            p.v[j + 1] = y;
            p.dv[j + 1] = c1 * y + q1;
        }
        return p;
    }

private:
    const std::vector<double>& c_;
    double step_;
    int stride_;
};

// Cumulative integral of f over a uniform grid, fourth order at every node
// (composite Simpson on pairs, Newton-Cotes 3-point half-panel on odd nodes).
std::vector<double> cumulative_integral(const std::vector<double>& f, double h) {
    const int n = static_cast<int>(f.size()) - 1;
    std::vector<double> F(n + 1, 0.0);
    for (int m = 0; m + 2 <= n; m += 2) {
        F[m + 1] = F[m] + h / 12.0 * (5 * f[m] + 8 * f[m + 1] - f[m + 2]);
        F[m + 2] = F[m] + h / 3.0 * (f[m] + 4 * f[m + 1] + f[m + 2]);
    }
    if (n % 2 == 1)
        F[n] = F[n - 1] + h / 12.0 * (-f[n - 2] + 8 * f[n - 1] + 5 * f[n]);
    return F;
}

GridPath subsample(const std::vector<double>& v, const std::vector<double>& dv, double h,
                   int stride) {
    GridPath p;
    const int n_fine = static_cast<int>(v.size()) - 1;
    const int n = n_fine / stride;
    p.step = h * stride;
    p.v.resize(n + 1);
    p.dv.resize(n + 1);
    for (int j = 0; j <= n; ++j) {
        p.v[j] = v[j * stride];
        p.dv[j] = dv[j * stride];
    }
    return p;
}

void check_positivity(const CoeffTable& ct) {
    double lo = ct.gv[0], hi = ct.gv[0];
    for (double v : ct.gv) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(lo > 1e-6 * std::max(hi, 0.0)))
        throw PositivityError("closed-form sensitivities require g > 0 along the trajectory");
}

}  // namespace

double rk4_step(const std::function<double(double, double)>& f, double t, double y, double h) {
    if (!(h > 0)) throw ArgumentError("rk4_step: h must be > 0");
    const double k1 = f(t, y);
    const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
    const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
    const double k4 = f(t + h, y + h * k3);
    if (!std::isfinite(k1) || !std::isfinite(k2) || !std::isfinite(k3) || !std::isfinite(k4))
        throw_nonfinite("rk4_step field", t, y);
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
}

double GridPath::at(double t) const {
    const int n = static_cast<int>(v.size()) - 1;
    int j = static_cast<int>(std::floor(t / step));
    j = std::max(0, std::min(j, n - 1));
    const double u = (t - j * step) / step;
    const double u2 = u * u, u3 = u2 * u;
    const double h00 = 2 * u3 - 3 * u2 + 1;
    const double h10 = u3 - 2 * u2 + u;
    const double h01 = -2 * u3 + 3 * u2;
    const double h11 = u3 - u2;
    return h00 * v[j] + h10 * step * dv[j] + h01 * v[j + 1] + h11 * step * dv[j + 1];
}

TrajectoryBundle solve_trajectory(const VectorField& field, double a, double h) {
    const int n = grid_steps(h);
    TrajectoryBundle b;
    b.h = h;
    b.a = a;
    b.theta = field.theta;
    b.x.step = h;
    b.x.v.resize(n + 1);
    b.x.dv.resize(n + 1);
    const double et = std::exp(field.theta);
    double y = a;
    b.x.v[0] = y;
    b.x.dv[0] = et * field.g(y);
    for (int m = 0; m < n; ++m) {
        const double k1 = et * field.g(y);
        const double k2 = et * field.g(y + 0.5 * h * k1);
        const double k3 = et * field.g(y + 0.5 * h * k2);
        const double k4 = et * field.g(y + h * k3);
        y += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        if (!std::isfinite(y)) throw_nonfinite("trajectory solve", (m + 1) * h, y);
        b.x.v[m + 1] = y;
        b.x.dv[m + 1] = et * field.g(y);
    }
    return b;
}

std::vector<double> eval_at_times(const TrajectoryBundle& bundle, const std::vector<double>& times) {
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) {
        if (t < -1e-12 || t > 1.0 + 1e-12)
            throw ArgumentError("eval_at_times: time outside [0, 1]");
        out.push_back(bundle.x.at(std::min(std::max(t, 0.0), 1.0)));
    }
    return out;
}

void propagate_sensitivities(const VectorField& field, TrajectoryBundle& bundle, SensOrder order) {
    const CoeffTable ct = tabulate(field, bundle, order != SensOrder::First);
    const int M = ct.M;
    const double h = bundle.h;

    // Shared homogeneous coefficient c(t) = e^theta g'(X(t)).
    std::vector<double> c(ct.n + 1);
    for (int m = 0; m <= ct.n; ++m) c[m] = ct.et * ct.g1[m];

    LinearPropagator first(c, 2 * h, 2);
    bundle.sens_a = first.run(1.0, [](int) { return 0.0; }, "sens_a");
    bundle.sens_theta =
        first.run(0.0, [&](int m) { return ct.et * ct.gv[m]; }, "sens_theta");
    bundle.sens_beta.resize(M);
    for (int r = 0; r < M; ++r)
        bundle.sens_beta[r] =
            first.run(0.0, [&](int m) { return ct.et * ct.p(m, r); }, "sens_beta");

    if (order == SensOrder::First) return;

    // First-order sensitivities at fine index m (they live on the 2h grid;
    // Hessian steps only touch multiples of 2h).
    auto sa = [&](int m) { return bundle.sens_a.v[m / 2]; };
    auto st = [&](int m) { return bundle.sens_theta.v[m / 2]; };
    auto sb = [&](int r, int m) { return bundle.sens_beta[r].v[m / 2]; };

    LinearPropagator second(c, 4 * h, 4);
    bundle.hess_tt = second.run(
        0.0,
        [&](int m) {
            const double s = st(m);
            return ct.et * (ct.gv[m] + 2 * s * ct.g1[m] + s * s * ct.g2[m]);
        },
        "hess_theta_theta");
    if (order == SensOrder::SecondTheta) return;

    bundle.hess_aa = second.run(
        0.0, [&](int m) { return ct.et * sa(m) * sa(m) * ct.g2[m]; }, "hess_aa");
    bundle.hess_tb.resize(M);
    for (int r = 0; r < M; ++r)
        bundle.hess_tb[r] = second.run(
            0.0,
            [&](int m) {
                return ct.et * (sb(r, m) * ct.g1[m] + ct.p(m, r) + st(m) * ct.p1(m, r) +
                                st(m) * sb(r, m) * ct.g2[m]);
            },
            "hess_theta_beta");
    bundle.hess_bb.assign(M, std::vector<GridPath>(M));
    for (int r = 0; r < M; ++r)
        for (int rp = r; rp < M; ++rp) {
            bundle.hess_bb[r][rp] = second.run(
                0.0,
                [&](int m) {
                    return ct.et * (sb(r, m) * ct.p1(m, rp) + sb(rp, m) * ct.p1(m, r) +
                                    sb(r, m) * sb(rp, m) * ct.g2[m]);
                },
                "hess_beta_beta");
            if (rp != r) bundle.hess_bb[rp][r] = bundle.hess_bb[r][rp];
        }
}

void closed_form_sensitivities(const VectorField& field, TrajectoryBundle& bundle) {
    const CoeffTable ct = tabulate(field, bundle, false);
    check_positivity(ct);
    const int M = ct.M;
    const double h = bundle.h;
    const int n = ct.n;

    std::vector<double> c(n + 1);
    for (int m = 0; m <= n; ++m) c[m] = ct.et * ct.g1[m];

    // sens_a = g(X(t)) / g(X(0))
    {
        std::vector<double> v(n + 1), dv(n + 1);
        for (int m = 0; m <= n; ++m) {
            v[m] = ct.gv[m] / ct.gv[0];
            dv[m] = c[m] * v[m];
        }
        bundle.sens_a = subsample(v, dv, h, 2);
    }
    // sens_theta = e^theta t g(X(t))
    {
        std::vector<double> v(n + 1), dv(n + 1);
        for (int m = 0; m <= n; ++m) {
            const double t = m * h;
            v[m] = ct.et * t * ct.gv[m];
            dv[m] = c[m] * v[m] + ct.et * ct.gv[m];
        }
        bundle.sens_theta = subsample(v, dv, h, 2);
    }
    // sens_beta_r = g(X(t)) * F_r(t),  F_r(t) = int_{X(0)}^{X(t)} phi_r / g^2
    //             = int_0^t e^theta phi_r(X(s)) / g(X(s)) ds.
    bundle.sens_beta.resize(M);
    std::vector<double> f(n + 1);
    for (int r = 0; r < M; ++r) {
        for (int m = 0; m <= n; ++m) f[m] = ct.et * ct.p(m, r) / ct.gv[m];
        const std::vector<double> F = cumulative_integral(f, h);
        std::vector<double> v(n + 1), dv(n + 1);
        for (int m = 0; m <= n; ++m) {
            v[m] = ct.gv[m] * F[m];
            dv[m] = c[m] * v[m] + ct.et * ct.p(m, r);
        }
        bundle.sens_beta[r] = subsample(v, dv, h, 2);
    }
}

void closed_form_hessians(const VectorField& field, TrajectoryBundle& bundle, bool alt_beta_form) {
    const CoeffTable ct = tabulate(field, bundle, true);
    check_positivity(ct);
    const int M = ct.M;
    const double h = bundle.h;
    const int n = ct.n;

    std::vector<double> c(n + 1);
    for (int m = 0; m <= n; ++m) c[m] = ct.et * ct.g1[m];

    // Closed-form first-order sensitivities on the fine grid feed the
    // Hessian integrands.
    std::vector<double> s_theta(n + 1);
    for (int m = 0; m <= n; ++m) s_theta[m] = ct.et * (m * h) * ct.gv[m];
    std::vector<std::vector<double>> Fr(M), s_beta(M);
    {
        std::vector<double> f(n + 1);
        for (int r = 0; r < M; ++r) {
            for (int m = 0; m <= n; ++m) f[m] = ct.et * ct.p(m, r) / ct.gv[m];
            Fr[r] = cumulative_integral(f, h);
            s_beta[r].resize(n + 1);
            for (int m = 0; m <= n; ++m) s_beta[r][m] = ct.gv[m] * Fr[r][m];
        }
    }

    // hess_aa = g(X(t)) / g(X(0))^2 * (g'(X(t)) - g'(X(0)))
    {
        std::vector<double> v(n + 1), dv(n + 1);
        const double g0 = ct.gv[0];
        for (int m = 0; m <= n; ++m) {
            v[m] = ct.gv[m] / (g0 * g0) * (ct.g1[m] - ct.g1[0]);
            const double s_a = ct.gv[m] / g0;
            dv[m] = c[m] * v[m] + ct.et * s_a * s_a * ct.g2[m];
        }
        bundle.hess_aa = subsample(v, dv, h, 4);
    }
    // hess_tt = e^theta g(X(t)) [t + e^theta t^2 g'(X(t))]
    {
        std::vector<double> v(n + 1), dv(n + 1);
        for (int m = 0; m <= n; ++m) {
            const double t = m * h;
            v[m] = ct.et * ct.gv[m] * (t + ct.et * t * t * ct.g1[m]);
            const double s = s_theta[m];
            dv[m] = c[m] * v[m] + ct.et * (ct.gv[m] + 2 * s * ct.g1[m] + s * s * ct.g2[m]);
        }
        bundle.hess_tt = subsample(v, dv, h, 4);
    }
    // hess_tb: e^theta g(X(t)) int_0^t [s_theta phi_r' + s_r g' + phi_r + s_theta s_r g''] / g ds
    bundle.hess_tb.resize(M);
    {
        std::vector<double> f(n + 1), v(n + 1), dv(n + 1);
        for (int r = 0; r < M; ++r) {
            for (int m = 0; m <= n; ++m)
                f[m] = (s_theta[m] * ct.p1(m, r) + s_beta[r][m] * ct.g1[m] + ct.p(m, r) +
                        s_theta[m] * s_beta[r][m] * ct.g2[m]) /
                       ct.gv[m];
            const std::vector<double> F = cumulative_integral(f, h);
            for (int m = 0; m <= n; ++m) {
                v[m] = ct.et * ct.gv[m] * F[m];
                dv[m] = c[m] * v[m] + ct.et * (s_beta[r][m] * ct.g1[m] + ct.p(m, r) +
                                               s_theta[m] * ct.p1(m, r) +
                                               s_theta[m] * s_beta[r][m] * ct.g2[m]);
            }
            bundle.hess_tb[r] = subsample(v, dv, h, 4);
        }
    }
    // hess_bb
    bundle.hess_bb.assign(M, std::vector<GridPath>(M));
    std::vector<double> f(n + 1), v(n + 1), dv(n + 1);
    for (int r = 0; r < M; ++r)
        for (int rp = r; rp < M; ++rp) {
            if (alt_beta_form) {
                // time-integral representation
                for (int m = 0; m <= n; ++m)
                    f[m] = (s_beta[r][m] * ct.p1(m, rp) + s_beta[rp][m] * ct.p1(m, r) +
                            s_beta[r][m] * s_beta[rp][m] * ct.g2[m]) /
                           ct.gv[m];
                const std::vector<double> F = cumulative_integral(f, h);
                for (int m = 0; m <= n; ++m) v[m] = ct.et * ct.gv[m] * F[m];
            } else {
                // State-integral representation
                //   g(Xt) int (phi_r' F_r' + phi_r'' F_r)/g dx
                //   + F_r F_r' g(Xt) g'(Xt)
                //   - g(Xt) int (g'/g^2) (phi_r F_r' + phi_r' F_r) dx
                // rewritten as time integrals via dx = e^theta g(X) ds.
                std::vector<double> f2(n + 1);
                for (int m = 0; m <= n; ++m) {
                    f[m] = ct.et * (ct.p1(m, r) * Fr[rp][m] + ct.p1(m, rp) * Fr[r][m]);
                    f2[m] = ct.et * ct.g1[m] / ct.gv[m] *
                            (ct.p(m, r) * Fr[rp][m] + ct.p(m, rp) * Fr[r][m]);
                }
                const std::vector<double> F1 = cumulative_integral(f, h);
                const std::vector<double> F2 = cumulative_integral(f2, h);
                for (int m = 0; m <= n; ++m)
                    v[m] = ct.gv[m] * F1[m] + Fr[r][m] * Fr[rp][m] * ct.gv[m] * ct.g1[m] -
                           ct.gv[m] * F2[m];
            }
            for (int m = 0; m <= n; ++m)
                dv[m] = c[m] * v[m] + ct.et * (s_beta[r][m] * ct.p1(m, rp) +
                                               s_beta[rp][m] * ct.p1(m, r) +
                                               s_beta[r][m] * s_beta[rp][m] * ct.g2[m]);
            bundle.hess_bb[r][rp] = subsample(v, dv, h, 4);
            if (rp != r) bundle.hess_bb[rp][r] = bundle.hess_bb[r][rp];
        }
}

}  // namespace semiode
