#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "semiode/selection.hpp"

using namespace semiode;

namespace {

SplineBasis cubic_basis() {
    return SplineBasis(3, {0.35, 0.6, 0.85, 1.1}, 0.0, 1.6, BoundaryMode::Unconstrained, true);
}

Eigen::VectorXd cubic_beta() {
    Eigen::VectorXd b(4);
    b << 0.1, 1.2, 1.6, 0.4;
    return b;
}

Dataset make_data(const SplineBasis& basis, const Eigen::VectorXd& theta, const Eigen::VectorXd& a,
                  double h, double noise_sd, unsigned seed, int obs = 8) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd > 0 ? noise_sd : 1.0);
    const Eigen::VectorXd beta = cubic_beta();
    Dataset data;
    int c = 0;
    for (int i = 0; i < theta.size(); ++i) {
        for (int l = 0; l < 2; ++l, ++c) {
            VectorField field{&basis, beta, theta[i]};
            TrajectoryBundle b = solve_trajectory(field, a[c], h);
            Curve cv;
            cv.subject_id = "s" + std::to_string(i);
            cv.curve_id = "c" + std::to_string(c);
            for (int j = 0; j < obs; ++j) {
                const double t = static_cast<double>(j) / (obs - 1);
                cv.t.push_back(t);
                cv.y.push_back(b.x.at(t) + (noise_sd > 0 ? noise(rng) : 0.0));
            }
            data.curves.push_back(std::move(cv));
        }
    }
    data.finalize();
    return data;
}

// Dense curves discretely consistent with X' = e^theta g0(X) for the smooth
// polynomial g0(x) = 0.5 x^2 + 0.2 x^3: successive values solve the midpoint
// rule exactly, so the divided differences hit g0 at the midpoints exactly.
double poly_g0(double x) { return 0.5 * x * x + 0.2 * x * x * x; }

Dataset midpoint_dataset(const Eigen::VectorXd& theta, double noise_sd, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd > 0 ? noise_sd : 1.0);
    Dataset data;
    const double dt = 0.05;
    int c = 0;
    for (int i = 0; i < theta.size(); ++i) {
        for (int l = 0; l < 2; ++l, ++c) {
            Curve cv;
            cv.subject_id = "s" + std::to_string(i);
            cv.curve_id = "c" + std::to_string(c);
            double y = 0.6 + 0.05 * l;
            double t = 0.0;
            const double scale = std::exp(theta[i]);
            for (int j = 0; j < 20; ++j, t += dt) {
                cv.t.push_back(t);
                cv.y.push_back(y + (noise_sd > 0 ? noise(rng) : 0.0));
                // Solve y_next = y + dt * scale * g0((y + y_next)/2) by fixed point.
                double yn = y;
                for (int s = 0; s < 60; ++s) yn = y + dt * scale * poly_g0(0.5 * (y + yn));
                y = yn;
            }
            data.curves.push_back(std::move(cv));
        }
    }
    data.finalize();
    return data;
}

}  // namespace

TEST_CASE("empirical derivatives are midpoints and divided differences") {
    // [DERIVED] for y = c + s t the pairs are ((y_j + y_{j+1})/2, s) exactly.
    Dataset d;
    Curve cv;
    cv.subject_id = "s0";
    cv.curve_id = "c0";
    cv.t = {0.0, 0.2, 0.5, 1.0};
    cv.y = {1.0, 1.4, 2.0, 3.0};  // slope 2 everywhere
    d.curves.push_back(cv);
    d.finalize();
    auto pts = empirical_derivatives(d);
    REQUIRE(pts.size() == 3);
    for (std::size_t j = 0; j < pts.size(); ++j) {
        CHECK(pts[j].curve == 0);
        CHECK(pts[j].x == doctest::Approx(0.5 * (cv.y[j] + cv.y[j + 1])));
        CHECK(pts[j].xprime == doctest::Approx(2.0));
    }

    Dataset tied;
    Curve tc = cv;
    tc.t = {0.0, 0.2, 0.2, 1.0};
    tied.curves.push_back(tc);
    tied.finalize();
    CHECK_THROWS_AS(empirical_derivatives(tied), DataError);
}

TEST_CASE("stepwise initializer recovers a polynomial gradient function") {
    Eigen::VectorXd theta(3);
    theta << 0.15, 0.0, -0.15;
    Dataset data = midpoint_dataset(theta, 0.0, 1);
    std::vector<double> candidates = {0.7, 0.9, 1.1, 1.3};
    for (StepwiseCriterion crit : {StepwiseCriterion::AIC, StepwiseCriterion::BIC}) {
        StepwiseResult res = stepwise_init(data, candidates, crit);
        // theta0 is centered and ordered like the truth.
        CHECK(res.theta0.sum() == doctest::Approx(0.0).scale(1.0).epsilon(1e-10));
        CHECK(res.theta0[0] > res.theta0[1]);
        CHECK(res.theta0[1] > res.theta0[2]);
        for (int i = 0; i < 3; ++i) CHECK(std::abs(res.theta0[i] - theta[i]) < 0.05);
        // g0 tracks the generating polynomial over the populated x-range.
        for (double x = 0.65; x <= 1.3; x += 0.05)
            CHECK(res.g0(x) == doctest::Approx(poly_g0(x)).epsilon(0.05));
        // Selected knots come from the candidate pool, sorted.
        for (std::size_t k = 0; k < res.selected_knots.size(); ++k) {
            CHECK(std::count(candidates.begin(), candidates.end(), res.selected_knots[k]) == 1);
            if (k > 0) CHECK(res.selected_knots[k] > res.selected_knots[k - 1]);
        }
        CHECK(res.coef.size() == 2 + static_cast<int>(res.selected_knots.size()));
    }
}

TEST_CASE("stepwise noise estimate and fixed theta path") {
    Eigen::VectorXd theta(2);
    theta << 0.1, -0.1;
    const double sd = 0.008;
    Dataset data = midpoint_dataset(theta, sd, 4);
    StepwiseResult res = stepwise_init(data, {0.8, 1.0}, StepwiseCriterion::BIC);
    // [DERIVED] the local-linear difference estimator is unbiased for sigma.
    CHECK(res.sigma_eps_ini == doctest::Approx(sd).epsilon(0.5));
    CHECK(res.sigma_theta_ini ==
          doctest::Approx(std::sqrt(res.theta0.squaredNorm() / 1.0)).epsilon(1e-12));

    Eigen::VectorXd fixed = theta;
    StepwiseResult forced = stepwise_init(data, {0.8, 1.0}, StepwiseCriterion::BIC, &fixed);
    CHECK((forced.theta0 - fixed).norm() == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));

    Eigen::VectorXd wrong = Eigen::VectorXd::Zero(5);
    CHECK_THROWS_AS(stepwise_init(data, {0.8}, StepwiseCriterion::AIC, &wrong), ArgumentError);
}

TEST_CASE("project_g recovers coefficients of a function already in the span") {
    SplineBasis basis = cubic_basis();
    const Eigen::VectorXd beta = cubic_beta();
    auto g = [&](double x) { return basis.g_value(beta, x); };
    Eigen::VectorXd rec = project_g(basis, g, 512);
    CHECK((rec - beta).norm() == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
}

TEST_CASE("approximate CV tracks the exact leave-one-curve-out oracle") {
    SplineBasis basis = cubic_basis();
    Eigen::VectorXd theta(2), a(4);
    theta << 0.08, -0.08;
    a << 0.24, 0.3, 0.26, 0.32;
    FitConfig cfg;
    cfg.nr_adaptive = false;  // keep the fitted and refit lambdas identical
    cfg.nr_max_iters = 400;
    Dataset data = make_data(basis, theta, a, cfg.h, 0.01, 11);
    PenaltyMatrix pen = penalty_matrix(basis, 0.35, 0.0);
    FitResult fr = fit(basis, data, default_init(basis, data), pen.B, cfg);
    REQUIRE(fr.nr_converged);
    const double approx = approx_cv(basis, data, fr, pen.B, cfg);
    const double exact = exact_cv(basis, data, pen.B, cfg);
    CHECK(approx > 0.0);
    CHECK(exact > 0.0);
    // Same order of magnitude on a dense, low-noise instance.
    CHECK(approx / exact > 0.3);
    CHECK(approx / exact < 3.0);
}

TEST_CASE("CV scorers reject undefined configurations") {
    SplineBasis basis = cubic_basis();
    PenaltyMatrix pen = penalty_matrix(basis, 0.35, 0.0);
    FitConfig cfg;

    // A subject with a single curve and lambda2 = 0 has no usable theta
    // curvature correction.
    Dataset solo;
    Curve cv;
    cv.subject_id = "only";
    cv.curve_id = "c0";
    VectorField field{&basis, cubic_beta(), 0.0};
    TrajectoryBundle b = solve_trajectory(field, 0.3, 1.0 / 256);
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        cv.t.push_back(t);
        cv.y.push_back(b.x.at(t));
    }
    solo.curves.push_back(cv);
    solo.finalize();
    FitResult fr;
    fr.params = default_init(basis, solo);
    fr.params.beta = cubic_beta();
    fr.lambda1 = 0.0;
    fr.lambda2 = 0.0;
    fr.alpha = 0.3;
    CHECK_THROWS_AS(approx_cv(basis, solo, fr, pen.B, cfg), NumericError);

    // exact_cv cannot drop the only curve, nor orphan a subject.
    CHECK_THROWS_AS(exact_cv(basis, solo, pen.B, cfg), DataError);
    Dataset two = solo;
    Curve cv2 = cv;
    cv2.subject_id = "other";
    cv2.curve_id = "c1";
    two.curves.push_back(cv2);
    two.finalize();
    CHECK_THROWS_AS(exact_cv(basis, two, pen.B, cfg), DataError);
}

TEST_CASE("model_search selects the minimal-CV converged candidate") {
    SplineBasis truth = cubic_basis();
    Eigen::VectorXd theta(2), a(4);
    theta << 0.1, -0.1;
    a << 0.22, 0.3, 0.26, 0.34;
    FitConfig cfg;
    cfg.nr_max_iters = 400;
    Dataset data = make_data(truth, theta, a, cfg.h, 0.01, 21, 10);

    ModelSpec right{"true-knots", 3, {0.35, 0.6, 0.85, 1.1}, 0.0, 1.6,
                    BoundaryMode::Unconstrained, true, 0.0, 0.0};
    ModelSpec crude{"two-knots", 3, {0.6, 1.0}, 0.0, 1.6, BoundaryMode::Unconstrained, true, 0.0, 0.0};
    CvReport rep = model_search(data, {crude, right}, cfg);
    REQUIRE(rep.rows.size() == 2);
    REQUIRE(rep.selected >= 0);
    CHECK(rep.rows[0].id == "two-knots");
    CHECK(rep.rows[1].id == "true-knots");
    for (const CvRow& r : rep.rows) {
        if (!r.converged) continue;
        CHECK(std::isfinite(r.cv));
        CHECK(r.cv >= rep.rows[rep.selected].cv);
        CHECK(r.nr_iters > 0);
    }

    // A stepwise initializer is accepted and does not change the winner's id.
    StepwiseResult sw = stepwise_init(data, {0.6, 0.85, 1.1}, StepwiseCriterion::BIC);
    CvReport rep2 = model_search(data, {crude, right}, cfg, &sw);
    CHECK(rep2.selected >= 0);

    CHECK_THROWS_AS(model_search(data, {}, cfg), ArgumentError);
}
