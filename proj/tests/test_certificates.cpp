#include <doctest.h>

#include <cmath>
#include <random>

#include "robustid/certificates.hpp"
#include "robustid/error.hpp"
#include "robustid/estimators.hpp"
#include "support.hpp"

using namespace robustid;

namespace {

void check_witness(const Certificate& c, const Matrix& f, const Vector& g) {
    if (c.verdict == Verdict::optimal) {
        CHECK((f * c.w.col(0) - g).cwiseAbs().maxCoeff() <= 1e-8);
        CHECK(c.w.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    } else if (c.verdict == Verdict::not_optimal) {
        CHECK(farkas_dual_value(f, g, c.z.col(0)) < 0.0);
        CHECK(c.z.col(0).norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

/// Rebuilds states from x_0 = 0 and the given disturbance columns.
Trajectory trajectory_from_disturbances(const Matrix& a, const Matrix& d, const std::vector<int>& times) {
    const int n = static_cast<int>(a.rows());
    const int horizon = static_cast<int>(d.cols());
    Trajectory t;
    t.states = Matrix::Zero(n, horizon + 1);
    for (int i = 0; i < horizon; ++i) t.states.col(i + 1) = a * t.states.col(i) + d.col(i);
    t.inputs = Matrix(0, horizon);
    t.disturbances = d;
    t.schedule = AttackSchedule(horizon, times);
    return t;
}

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

}  // namespace

TEST_CASE("farkas_feasible hand examples") {
    const Matrix id = Matrix::Identity(2, 2);
    SUBCASE("zero right-hand side") {
        const auto c = farkas_feasible(Matrix::Random(3, 4), Vector::Zero(3));
        CHECK(c.verdict == Verdict::optimal);
        CHECK(c.w.isZero(0.0));
    }
    SUBCASE("outside the box") {
        Vector g(2);
        g << 3.0, 0.0;
        const auto c = farkas_feasible(id, g);
        CHECK(c.verdict == Verdict::not_optimal);
        check_witness(c, id, g);
        Vector z(2);
        z << -1.0, 0.0;
        CHECK(farkas_dual_value(id, g, z) == doctest::Approx(-2.0));
    }
    SUBCASE("inside the box") {
        Vector g(2);
        g << 0.5, -0.5;
        const auto c = farkas_feasible(id, g);
        CHECK(c.verdict == Verdict::optimal);
        CHECK((c.w.col(0) - g).norm() <= 1e-10);
    }
    CHECK_THROWS_AS(farkas_feasible(id, Vector::Zero(3)), DomainError);
}

TEST_CASE("farkas witnesses re-verify on random instances") {
    std::mt19937_64 eng(77);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 60; ++i) {
        const int n = 1 + i % 3;
        const int q = 1 + (i / 3) % 8;
        Matrix f(n, q);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < q; ++c) f(r, c) = nd(eng);
        }
        Vector g(n);
        for (int r = 0; r < n; ++r) g(r) = 2.0 * nd(eng);
        check_witness(farkas_feasible(f, g), f, g);
    }
}

TEST_CASE("group feasibility uses row balls") {
    // One column, two outputs: w must satisfy F w^T = G with the row of w in the unit ball.
    Matrix f(1, 1);
    f << 1.0;
    Matrix inside(1, 2);
    inside << 0.6, 0.6;
    CHECK(group_feasible(f, inside).verdict == Verdict::optimal);
    Matrix outside(1, 2);
    outside << 0.9, 0.9;
    const auto c = group_feasible(f, outside);
    CHECK(c.verdict == Verdict::not_optimal);
    CHECK(group_dual_value(f, outside, c.z) < 0.0);
}

TEST_CASE("sphere net") {
    SUBCASE("covers the circle at the requested resolution") {
        const double eps = 0.1;
        std::vector<Vector> pts;
        for_each_sphere_net_point(2, eps, [&](const Vector& z) { pts.push_back(z); });
        CHECK(pts.size() == sphere_net_size(2, eps));
        for (int k = 0; k < 500; ++k) {
            const double th = 2.0 * M_PI * k / 500.0;
            Vector u(2);
            u << std::cos(th), std::sin(th);
            double best = 10.0;
            for (const auto& z : pts) best = std::min(best, (z - u).norm());
            CHECK(best <= eps);
        }
        for (const auto& z : pts) CHECK(z.norm() == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("covers the 2-sphere") {
        const double eps = 0.2;
        std::vector<Vector> pts;
        for_each_sphere_net_point(3, eps, [&](const Vector& z) { pts.push_back(z); });
        std::mt19937_64 eng(5);
        std::normal_distribution<double> nd;
        for (int k = 0; k < 300; ++k) {
            Vector u(3);
            u << nd(eng), nd(eng), nd(eng);
            u.normalize();
            double best = 10.0;
            for (const auto& z : pts) best = std::min(best, (z - u).norm());
            CHECK(best <= eps);
        }
    }
}

TEST_CASE("dual_min_fz examples") {
    SUBCASE("g = 0 is certified") {
        const Matrix f = Matrix::Random(2, 3);
        const auto r = dual_min_fz(f, Vector::Zero(2));
        CHECK(r.min_value >= 0.0);
        CHECK(r.certified_nonnegative);
    }
    SUBCASE("violator near (-1, 0)") {
        Vector g(2);
        g << 3.0, 0.0;
        const auto r = dual_min_fz(Matrix::Identity(2, 2), g);
        CHECK(r.min_value <= -1.9);
        CHECK(r.argmin(0) < -0.9);
        CHECK_FALSE(r.certified_nonnegative);
    }
    SUBCASE("feasible random instances are nonnegative") {
        std::mt19937_64 eng(3);
        std::uniform_real_distribution<double> ud(-1.0, 1.0);
        for (int i = 0; i < 10; ++i) {
            const Matrix f = Matrix::Random(2, 4);
            Vector w(4);
            for (int k = 0; k < 4; ++k) w(k) = ud(eng);
            const auto r = dual_min_fz(f, f * w);
            CHECK(r.min_value >= -1e-9);
        }
    }
    SUBCASE("budget guard") {
        DualMinOptions opts;
        opts.epsilon = 1e-3;
        opts.budget = 1000;
        CHECK_THROWS_WITH_AS(dual_min_fz(Matrix::Random(3, 3), Vector::Ones(3), opts),
                             doctest::Contains("farkas_feasible"), DomainError);
    }
}

TEST_CASE("kkt_certificate at the ground truth") {
    SUBCASE("clean data") {
        const auto sys = random_stable_system(3, 1, 0.8, 1);
        const auto t = simulate(sys, InputPolicy::iid_gaussian(1.0), AttackSchedule(60, {}), {}, 1);
        for (auto kind : {EstimatorKind::least_squares, EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
            const auto r = kkt_certificate(t, sys.a(), sys.b(), kind);
            CHECK(r.verdict == Verdict::optimal);
            CHECK(r.support.empty());
        }
    }
    SUBCASE("scalar delta-spaced instances") {
        for (int delta : {2, 3, 5}) {
            const auto sys = LtiSystem::autonomous(Matrix::Constant(1, 1, 0.6));
            const auto t = simulate(sys, InputPolicy::zero(), make_delta_spaced(4 * delta, delta, 0), {}, 2);
            CHECK(lemma2_condition(t).holds);
            for (auto kind : {EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
                CHECK(kkt_certificate(t, sys.a(), Matrix(1, 0), kind).verdict == Verdict::optimal);
            }
        }
    }
}

TEST_CASE("kkt_certificate rejects least squares on attacked data") {
    const auto sys = random_stable_system(2, 0, 0.7, 3);
    StealthAttackConfig att;
    att.sigma = 10.0;
    const auto t = simulate(sys, InputPolicy::zero(), make_bernoulli(40, 0.3, 3), att, 3);
    const auto ls = least_squares(t);
    for (auto kind : {EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
        const auto r = kkt_certificate(t, ls.a, ls.b, kind);
        CHECK(r.verdict == Verdict::not_optimal);
    }
    CHECK(kkt_certificate(t, ls.a, ls.b, EstimatorKind::least_squares).verdict == Verdict::optimal);
}

TEST_CASE("kkt_certificate flags ambiguous supports") {
    const auto t = testing::scalar_trajectory({1.0, 0.5, 0.25 + 1e-6, 0.125}, 0.5, {});
    KktOptions opts;
    opts.support_tol = 1e-6;
    const auto r = kkt_certificate(t, Matrix::Constant(1, 1, 0.5), Matrix(1, 0), EstimatorKind::entry_l1, opts);
    CHECK(r.support_info.ambiguous);
}

TEST_CASE("lemma2_condition") {
    const auto ex = lemma2_condition(testing::scalar_trajectory({0, 0, 4, 2}, 0.5, {1}));
    CHECK(ex.holds);
    CHECK(ex.lhs == 4.0);
    CHECK(ex.rhs == 0.0);
    const auto all = lemma2_condition(testing::scalar_trajectory({1, 2, 3, 4}, 0.5, {0, 1, 2}));
    CHECK_FALSE(all.holds);
    CHECK(all.lhs == 0.0);
    for (int horizon = 3; horizon <= 30; ++horizon) {
        const auto sys = LtiSystem::autonomous(Matrix::Constant(1, 1, -0.8));
        const auto t = simulate(sys, InputPolicy::zero(), make_delta_spaced(horizon, 2, 1), {}, 4);
        CHECK(lemma2_condition(t).holds);
    }
}

TEST_CASE("span_condition") {
    const Matrix a = random_stable_system(3, 0, 0.8, 2).a();
    SUBCASE("long spacing spans the whole space") {
        const auto t = simulate(LtiSystem::autonomous(a), InputPolicy::zero(), make_delta_spaced(40, 5, 0), {}, 3);
        const auto checks = span_condition(t, a, 5);
        CHECK_FALSE(checks.empty());
        for (const auto& c : checks) {
            CHECK(c.basis_rank == 3);
            CHECK(c.holds);
        }
    }
    SUBCASE("next attack inside the Krylov basis") {
        const int delta = 3;
        Matrix d = Matrix::Zero(3, 10);
        d.col(0) << 1.0, -2.0, 0.5;
        d.col(3) = a * d.col(0);
        d.col(6) = a * d.col(3) - 0.3 * d.col(3);
        const auto t = trajectory_from_disturbances(a, d, {0, 3, 6});
        for (const auto& c : span_condition(t, a, delta)) CHECK(c.holds);
    }
    SUBCASE("generic next attack with a short basis fails") {
        const auto t = simulate(LtiSystem::autonomous(a), InputPolicy::zero(), make_delta_spaced(30, 2, 0), {}, 5);
        for (const auto& c : span_condition(t, a, 2)) {
            CHECK_FALSE(c.holds);
            CHECK(c.relative_residual > 1e-9);
        }
    }
    SUBCASE("zero disturbance is reported") {
        Matrix d = Matrix::Zero(3, 6);
        d.col(3) << 1.0, 0.0, 0.0;
        Trajectory t = trajectory_from_disturbances(a, d, {});
        t.schedule = make_delta_spaced(6, 3, 0);
        const auto checks = span_condition(t, a, 3);
        REQUIRE_FALSE(checks.empty());
        CHECK(checks.front().degenerate);
        CHECK_FALSE(checks.front().holds);
    }
}

TEST_CASE("eigen_condition examples") {
    const auto zero = eigen_condition({0.0, 0.0}, 5);
    CHECK(zero.holds);
    CHECK(zero.lhs == 0.0);
    const auto scalar = eigen_condition({0.5}, 3);
    CHECK(scalar.lhs == doctest::Approx(0.25));
    CHECK(scalar.rhs == doctest::Approx(1.5));
    CHECK(scalar.holds);
    CHECK_THROWS_AS(eigen_condition({0.5, 0.5}, 2), DomainError);
}

TEST_CASE("complete homogeneous polynomials of repeated eigenvalues are binomials") {
    for (int n = 1; n <= 6; ++n) {
        for (double lam : {0.3, -0.7, 1.4}) {
            const std::vector<std::complex<double>> eigs(n, lam);
            const auto h = complete_homogeneous(eigs, 6);
            for (int k = 0; k <= 6; ++k) {
                const double expected = binomial(n + k - 1, k) * std::pow(lam, k);
                CHECK(std::abs(h[k].real() - expected) <= 1e-10 * std::max(1.0, std::abs(expected)));
                CHECK(std::abs(h[k].imag()) <= 1e-12);
            }
        }
    }
}

TEST_CASE("eigen_condition flips at C_{n,k} for repeated eigenvalues") {
    for (int n = 1; n <= 4; ++n) {
        for (int k = 1; k <= 6; ++k) {
            const double c = cnk_bound(n, k);
            const double margin = 1e-6 * c;
            CHECK(eigen_condition(std::vector<std::complex<double>>(n, c - margin), n + k).holds);
            CHECK_FALSE(eigen_condition(std::vector<std::complex<double>>(n, c + margin), n + k).holds);
        }
    }
}

TEST_CASE("C_{n,k} anchors") {
    for (int n = 1; n <= 10; ++n) CHECK(cnk_bound(n, 1) == doctest::Approx(1.0 / n).epsilon(1e-12));
    CHECK(cnk_bound(1, 1) == doctest::Approx(1.0));
    double prev = 0.0;
    for (int k = 1; k <= 30; ++k) {
        const double c = cnk_bound(1, k);
        CHECK(c > prev);
        CHECK(c < 2.0);
        prev = c;
    }
    for (int n = 1; n <= 8; ++n) CHECK(cnk_bound(n, n) == 1.0);
    for (int n = 1; n <= 8; ++n) {
        for (int k = 1; k <= 8; ++k) {
            CHECK(std::abs(cnk_polynomial(n, k, cnk_bound(n, k))) <= 1e-8 * binomial(n + k - 1, k));
        }
    }
    CHECK_THROWS_AS(cnk_bound(0, 1), DomainError);
}

TEST_CASE("verdict names") {
    CHECK(to_string(Verdict::optimal) == "optimal");
    CHECK(to_string(Verdict::not_optimal) == "not-optimal");
    CHECK(to_string(Verdict::inconclusive) == "inconclusive");
}
