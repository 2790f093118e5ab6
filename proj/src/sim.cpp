#include "semiode/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "semiode/common.hpp"

namespace semiode {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void chi_square_params(double mean, double sd, double& c, double& k) {
    if (!(mean > 0) || !(sd > 0)) throw ArgumentError("chi-square target mean and sd must be > 0");
    c = sd * sd / (2.0 * mean);
    k = 2.0 * mean * mean / (sd * sd);
}

SimConfig default_sim_config() {
    SimConfig cfg;
    cfg.truth.id = "truth";
    cfg.truth.degree = 3;
    cfg.truth.knots = {0.35, 0.6, 0.85, 1.1};
    cfg.truth.x_lo = 0.0;
    cfg.truth.x_hi = 1.6;
    cfg.truth_beta.resize(4);
    cfg.truth_beta << 0.1, 1.2, 1.6, 0.4;
    return cfg;
}

SimConfig plant_sim_config() {
    SimConfig cfg;
    cfg.n = 6;
    cfg.N = 10;
    cfg.m = {2, 17};
    cfg.theta_sd = 0.2;
    cfg.a_mean = 2.0;
    cfg.a_sd = 1.0;
    cfg.noise_sd = 0.05;
    cfg.a_known = true;
    cfg.truth.id = "plant-truth";
    cfg.truth.degree = 3;
    cfg.truth.knots = {3.0, 6.0, 9.0};
    cfg.truth.x_lo = 0.0;
    cfg.truth.x_hi = 14.0;
    cfg.truth.mode = BoundaryMode::ZeroAtOrigin;
    // Rising then flat: the trailing equal coefficients give a plateau.
    SplineBasis b = make_basis(cfg.truth);
    cfg.truth_beta = Eigen::VectorXd::Constant(b.size(), 2.0);
    if (b.size() >= 2) cfg.truth_beta[0] = 0.5;
    if (b.size() >= 3) cfg.truth_beta[1] = 1.5;
    return cfg;
}

GeneratedData generate(const SimConfig& config) {
    if (config.n < 1 || config.N < 1 || config.m.lo < 1 || config.m.lo > config.m.hi)
        throw ArgumentError("invalid simulation dimensions");
    if (config.theta_sd < 0 || config.a_sd < 0 || config.noise_sd < 0)
        throw ArgumentError("simulation standard deviations must be nonnegative");
    SplineBasis truth_basis = make_basis(config.truth);
    if (config.truth_beta.size() != truth_basis.size())
        throw ArgumentError("truth beta length does not match truth basis");

    std::mt19937_64 rng(splitmix64(config.seed));
    std::normal_distribution<double> norm(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> m_dist(config.m.lo, config.m.hi);
    double c_a = 0.0, k_a = 0.0;
    if (config.a_sd > 0) chi_square_params(config.a_mean, config.a_sd, c_a, k_a);
    std::gamma_distribution<double> chi2(k_a / 2.0, 2.0);

    GeneratedData out;
    out.theta_true.resize(config.n);
    out.a_true.resize(config.n * config.N);
    for (int i = 0; i < config.n; ++i) out.theta_true[i] = config.theta_sd * norm(rng);

    int curve_index = 0;
    for (int i = 0; i < config.n; ++i) {
        for (int l = 0; l < config.N; ++l, ++curve_index) {
            const double a = config.a_sd > 0 ? c_a * chi2(rng) : config.a_mean;
            out.a_true[curve_index] = a;
            const int m = m_dist(rng);
            std::vector<double> t(m);
            for (double& v : t) v = unif(rng);
            std::sort(t.begin(), t.end());

            VectorField field{&truth_basis, config.truth_beta, out.theta_true[i]};
            TrajectoryBundle bundle = solve_trajectory(field, a, config.truth_h);
            if (bundle.x.v.back() > truth_basis.x_hi() || bundle.x.v.front() < truth_basis.x_lo())
                throw NumericError("generated trajectory escapes the truth basis domain");

            Curve cv;
            cv.subject_id = "s" + std::to_string(i + 1);
            cv.curve_id = cv.subject_id + "c" + std::to_string(l + 1);
            cv.t = t;
            cv.y.resize(m);
            const std::vector<double> x = eval_at_times(bundle, t);
            for (int j = 0; j < m; ++j) cv.y[j] = x[j] + config.noise_sd * norm(rng);
            cv.a_known = config.a_known;
            cv.a0 = a;
            out.data.curves.push_back(std::move(cv));
        }
    }
    out.data.finalize();
    return out;
}

double ise(const SplineBasis& basis_hat, const Eigen::VectorXd& beta_hat,
           const SplineBasis& basis_true, const Eigen::VectorXd& beta_true, double lo, double hi,
           int points) {
    if (!(hi > lo)) throw ArgumentError("ise: empty integration domain");
    if (points < 2 || points % 2 != 0) throw ArgumentError("ise: points must be even and >= 2");
    auto diff2 = [&](double x) {
        const double d = basis_hat.g_value(beta_hat, x, 0) - basis_true.g_value(beta_true, x, 0);
        return d * d;
    };
    const double h = (hi - lo) / points;
    double s = diff2(lo) + diff2(hi);
    for (int i = 1; i < points; ++i) s += (i % 2 == 1 ? 4.0 : 2.0) * diff2(lo + i * h);
    return s * h / 3.0;
}

double spe(const Eigen::VectorXd& theta_hat, const Eigen::VectorXd& theta_true) {
    if (theta_hat.size() != theta_true.size())
        throw ArgumentError("spe: theta vectors differ in length");
    return (theta_hat - theta_true).squaredNorm() / theta_hat.size();
}

StudyReport run_study(const SimConfig& sim, const std::vector<ModelSpec>& grid,
                      const ModelSpec* accuracy_model, const FitConfig& fit_config,
                      int replicates, double ise_lo, double ise_hi) {
    if (replicates < 1) throw ArgumentError("run_study: replicates must be >= 1");
    StudyReport report;
    const SplineBasis truth_basis = make_basis(sim.truth);

    for (int r = 0; r < replicates; ++r) {
        ReplicateRow row;
        row.replicate = r;
        row.seed = splitmix64(sim.seed + static_cast<std::uint64_t>(r) + 1);
        SimConfig rep_cfg = sim;
        rep_cfg.seed = row.seed;
        try {
            const GeneratedData gen = generate(rep_cfg);
            row.ok = true;
            if (!grid.empty()) {
                const CvReport cv = model_search(gen.data, grid, fit_config);
                for (const CvRow& cr : cv.rows) {
                    row.candidate_ids.push_back(cr.id);
                    row.candidate_converged.push_back(cr.converged);
                    if (cr.converged) ++report.convergence_counts[cr.id];
                }
                row.selected_id = cv.rows[cv.selected].id;
                ++report.selection_counts[row.selected_id];
            }
            if (accuracy_model) {
                const SplineBasis basis = make_basis(*accuracy_model);
                const PenaltyMatrix pen =
                    penalty_matrix(basis, accuracy_model->A, accuracy_model->lambda_R);
                const FitResult fr =
                    fit(basis, gen.data, default_init(basis, gen.data), pen.B, fit_config);
                row.accuracy_converged = fr.lm_converged && fr.nr_converged;
                row.ise_value =
                    ise(basis, fr.params.beta, truth_basis, sim.truth_beta, ise_lo, ise_hi);
                row.spe_value = spe(fr.params.theta, gen.theta_true);
            }
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        report.rows.push_back(std::move(row));
    }

    double sum_ise = 0.0, sum_spe = 0.0;
    for (const ReplicateRow& row : report.rows)
        if (row.ok) ++report.n_ok;
    if (accuracy_model && report.n_ok > 0) {
        for (const ReplicateRow& row : report.rows) {
            if (!row.ok) continue;
            sum_ise += row.ise_value;
            sum_spe += row.spe_value;
        }
        report.mise = sum_ise / report.n_ok;
        report.mspe = sum_spe / report.n_ok;
        double ss_ise = 0.0, ss_spe = 0.0;
        for (const ReplicateRow& row : report.rows) {
            if (!row.ok) continue;
            ss_ise += (row.ise_value - report.mise) * (row.ise_value - report.mise);
            ss_spe += (row.spe_value - report.mspe) * (row.spe_value - report.mspe);
        }
        if (report.n_ok > 1) {
            report.sd_ise = std::sqrt(ss_ise / (report.n_ok - 1));
            report.sd_spe = std::sqrt(ss_spe / (report.n_ok - 1));
        }
    } else if (report.n_ok == 0) {
        throw NumericError("run_study: every replicate failed; first error: " +
                           (report.rows.empty() ? std::string("none") : report.rows[0].error));
    }
    return report;
}

}  // namespace semiode
