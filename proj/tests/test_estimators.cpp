#include <doctest.h>

#include <cmath>
#include <random>

#include "robustid/error.hpp"
#include "robustid/estimators.hpp"
#include "support.hpp"

using namespace robustid;

namespace {

Matrix random_matrix(int rows, int cols, std::mt19937_64& eng) {
    std::normal_distribution<double> nd;
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) m(i, j) = nd(eng);
    }
    return m;
}

double brute_scalar_argmin(const Trajectory& t, double lo, double hi, double step) {
    double best_a = lo;
    double best = std::numeric_limits<double>::infinity();
    Matrix a(1, 1);
    for (double v = lo; v <= hi; v += step) {
        a(0, 0) = v;
        const double f = objective(t, a, Matrix(1, 0), EstimatorKind::entry_l1);
        if (f < best) {
            best = f;
            best_a = v;
        }
    }
    return best_a;
}

}  // namespace

TEST_CASE("estimator names parse both ways") {
    for (auto k : {EstimatorKind::least_squares, EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
        CHECK(estimator_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(estimator_kind_from_string("l3"), DomainError);
}

TEST_CASE("least squares recovers clean excited systems") {
    const auto sys = random_stable_system(2, 2, 0.8, 3);
    const auto t = simulate(sys, InputPolicy::iid_gaussian(1.0), AttackSchedule(200, {}), {}, 5);
    const auto est = least_squares(t);
    CHECK(estimation_error(est.a, sys.a()) <= 1e-8);
    CHECK((est.b - sys.b()).norm() <= 1e-8);
}

TEST_CASE("least squares and a single attack") {
    // The attack lands after a zero state, so it never enters a regressor.
    const auto hidden = testing::scalar_trajectory({0, 0, 4, 2}, 0.5, {1});
    CHECK(least_squares(hidden).a(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
    const auto biased = testing::scalar_trajectory({1, 0.5, 4, 2}, 0.5, {1});
    CHECK(least_squares(biased).a(0, 0) == doctest::Approx(10.5 / 17.25).epsilon(1e-14));
    CHECK(solve_scalar_exact(biased).a_hat == 0.5);
}

TEST_CASE("least squares on an all-zero trajectory returns the minimum-norm zero") {
    const auto t = testing::scalar_trajectory({0, 0, 0, 0}, 0.5, {});
    CHECK(least_squares(t).a(0, 0) == 0.0);
}

TEST_CASE("scalar exact solver") {
    SUBCASE("absorbs the single attack") {
        const auto t = testing::scalar_trajectory({0, 0, 4, 2}, 0.5, {1});
        const auto sol = solve_scalar_exact(t);
        CHECK(sol.a_hat == 0.5);
        CHECK(sol.objective == doctest::Approx(4.0));
        Matrix ls(1, 1);
        ls << 0.4;
        CHECK(objective(t, ls, Matrix(1, 0), EstimatorKind::entry_l1) > sol.objective);
    }
    SUBCASE("clean data gives the truth") {
        for (double a : {-0.9, -0.3, 0.2, 0.75}) {
            Trajectory t = testing::scalar_trajectory({1.0, a, a * a, a * a * a}, a, {});
            CHECK(solve_scalar_exact(t).a_hat == doctest::Approx(a).epsilon(1e-15));
        }
    }
    SUBCASE("one clean sample against many aligned attacks is not recovered") {
        const auto t = testing::scalar_trajectory({1.0, 0.5, 1.0, 2.0, 4.0, 8.0}, 0.5, {1, 2, 3, 4});
        const auto sol = solve_scalar_exact(t);
        CHECK(sol.a_hat != doctest::Approx(0.5));
        CHECK(sol.a_hat == doctest::Approx(brute_scalar_argmin(t, -2.0, 2.0, 1e-4)).epsilon(1e-3));
    }
    SUBCASE("all-zero states are degenerate") {
        const auto sol = solve_scalar_exact(testing::scalar_trajectory({0, 0, 0}, 0.5, {}));
        CHECK(sol.degenerate);
        CHECK(sol.a_hat == 0.0);
    }
    SUBCASE("ties resolve to the smallest breakpoint") {
        // Breakpoints 1 and 3 with equal weight: every a in [1, 3] is optimal.
        const auto t = testing::scalar_trajectory({1.0, 1.0, 0.0, 1.0, 3.0}, 1.0, {});
        const auto sol = solve_scalar_exact(t);
        CHECK(sol.a_hat == 1.0);
    }
    CHECK_THROWS_AS(solve_scalar_exact(simulate(random_stable_system(2, 0, 0.5, 1), InputPolicy::zero(),
                                                AttackSchedule(4, {}), {}, 1)),
                    DomainError);
}

TEST_CASE("objective identities") {
    const auto sys = random_stable_system(3, 1, 0.8, 2);
    const auto t = simulate(sys, InputPolicy::iid_gaussian(1.0), make_bernoulli(100, 0.3, 2), {}, 3);
    double l2 = 0.0;
    double l1 = 0.0;
    for (int i = 0; i < t.horizon(); ++i) {
        l2 += t.disturbances.col(i).norm();
        l1 += t.disturbances.col(i).lpNorm<1>();
    }
    CHECK(objective(t, sys.a(), sys.b(), EstimatorKind::group_l2) == doctest::Approx(l2).epsilon(1e-10));
    CHECK(objective(t, sys.a(), sys.b(), EstimatorKind::entry_l1) == doctest::Approx(l1).epsilon(1e-10));

    const auto clean = simulate(sys, InputPolicy::iid_gaussian(1.0), AttackSchedule(50, {}), {}, 3);
    CHECK(objective(clean, sys.a(), sys.b(), EstimatorKind::group_l2) <= 1e-12);
}

TEST_CASE("scalar group and entrywise objectives coincide") {
    std::mt19937_64 eng(4);
    std::uniform_real_distribution<double> ud(-2.0, 2.0);
    const auto sys = LtiSystem::autonomous(Matrix::Constant(1, 1, 0.6));
    const auto t = simulate(sys, InputPolicy::zero(), make_bernoulli(80, 0.4, 1), {}, 2);
    for (int k = 0; k < 50; ++k) {
        Matrix a(1, 1);
        a << ud(eng);
        CHECK(objective(t, a, Matrix(1, 0), EstimatorKind::group_l2) ==
              objective(t, a, Matrix(1, 0), EstimatorKind::entry_l1));
    }
}

TEST_CASE("objectives are convex along segments") {
    std::mt19937_64 eng(9);
    const auto sys = random_stable_system(3, 2, 0.8, 5);
    const auto t = simulate(sys, InputPolicy::iid_gaussian(1.0), make_bernoulli(60, 0.3, 5), {}, 6);
    for (auto kind : {EstimatorKind::least_squares, EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
        for (int k = 0; k < 50; ++k) {
            const Matrix a1 = random_matrix(3, 3, eng);
            const Matrix b1 = random_matrix(3, 2, eng);
            const Matrix a2 = random_matrix(3, 3, eng);
            const Matrix b2 = random_matrix(3, 2, eng);
            const double mid = objective(t, 0.5 * (a1 + a2), 0.5 * (b1 + b2), kind);
            const double avg = 0.5 * (objective(t, a1, b1, kind) + objective(t, a2, b2, kind));
            CHECK(mid <= avg + 1e-10);
        }
    }
}

TEST_CASE("positive homogeneity") {
    const auto sys = LtiSystem::autonomous(Matrix::Constant(1, 1, 0.7));
    const auto t = simulate(sys, InputPolicy::zero(), make_bernoulli(60, 0.3, 3), {}, 3);
    Trajectory scaled = t;
    const double c = 3.5;
    scaled.states *= c;
    scaled.disturbances *= c;
    Matrix a(1, 1);
    a << 0.2;
    CHECK(objective(scaled, a, Matrix(1, 0), EstimatorKind::group_l2) ==
          doctest::Approx(c * objective(t, a, Matrix(1, 0), EstimatorKind::group_l2)).epsilon(1e-12));
    CHECK(solve_scalar_exact(scaled).a_hat == doctest::Approx(solve_scalar_exact(t).a_hat).epsilon(1e-14));
}

TEST_CASE("estimation_error") {
    const Matrix a = Matrix::Random(2, 2);
    CHECK(estimation_error(a, a) == 0.0);
    CHECK(estimation_error(a + 0.1 * Matrix::Identity(2, 2), a) == doctest::Approx(0.1 * std::sqrt(2.0)));
    std::mt19937_64 eng(3);
    const Matrix x = random_matrix(4, 4, eng);
    const Matrix y = random_matrix(4, 4, eng);
    double sum = 0.0;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) sum += (x(i, j) - y(i, j)) * (x(i, j) - y(i, j));
    }
    CHECK(estimation_error(x, y) == doctest::Approx(std::sqrt(sum)).epsilon(1e-14));
    CHECK_THROWS_AS(estimation_error(Matrix::Zero(2, 2), Matrix::Zero(3, 3)), DomainError);
}

TEST_CASE("subgradient solver stops immediately on clean data") {
    const auto sys = random_stable_system(3, 1, 0.8, 2);
    const auto t = simulate(sys, InputPolicy::iid_gaussian(1.0), AttackSchedule(80, {}), {}, 4);
    for (auto kind : {EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
        const auto res = solve_subgradient(t, kind);
        CHECK(res.iterations_used == 0);
        CHECK(res.certified);
        CHECK(res.objective <= 1e-10);
    }
}

TEST_CASE("subgradient solver agrees with the scalar exact solver") {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        const auto sys = LtiSystem::autonomous(Matrix::Constant(1, 1, 0.9 - 0.3 * static_cast<double>(seed % 4)));
        StealthAttackConfig att;
        att.sigma = 10.0;
        const auto t = simulate(sys, InputPolicy::zero(), make_bernoulli(120, 0.45, seed), att, seed);
        const auto exact = solve_scalar_exact(t);
        SolverConfig cfg;
        cfg.max_iters = 100000;
        for (auto kind : {EstimatorKind::group_l2, EstimatorKind::entry_l1}) {
            const auto res = solve_subgradient(t, kind, cfg);
            CHECK(res.objective == doctest::Approx(exact.objective).epsilon(1e-6));
        }
    }
}

TEST_CASE("subgradient bookkeeping") {
    const auto sys = random_stable_system(3, 1, 0.8, 7);
    const auto t = simulate(sys, InputPolicy::iid_gaussian(1.0), make_bernoulli(150, 0.4, 7), {}, 7);
    SolverConfig cfg;
    cfg.max_iters = 3000;
    cfg.polish = false;
    cfg.certify_every = 0;
    cfg.log_every = 10;
    cfg.warm_start = WarmStart::zero;
    const auto res = solve_subgradient(t, EstimatorKind::group_l2, cfg);
    CHECK(res.trace.size() == 300);
    for (std::size_t k = 1; k < res.trace.size(); ++k) CHECK(res.trace[k] <= res.trace[k - 1]);
    const double recomputed = objective(t, res.a_hat, res.b_hat, EstimatorKind::group_l2);
    CHECK(std::abs(recomputed - res.objective) <= 1e-10 * std::max(1.0, recomputed));
    CHECK(res.residuals.cols() == t.horizon());
    CHECK(res.stop_reason == "max_iters");
}

TEST_CASE("subgradient solver reports divergence") {
    const auto sys = random_stable_system(2, 0, 0.8, 1);
    const auto t = simulate(sys, InputPolicy::zero(), make_bernoulli(50, 0.5, 1), {}, 1);
    SolverConfig cfg;
    cfg.eta0 = 1e308;
    cfg.polish = false;
    cfg.certify_every = 0;
    cfg.warm_start = WarmStart::zero;
    CHECK_THROWS_WITH_AS(solve_subgradient(t, EstimatorKind::group_l2, cfg),
                         doctest::Contains("non-finite objective at iteration"), DomainError);
}

TEST_CASE("solver configuration is validated") {
    SolverConfig cfg;
    cfg.tol = -1.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    cfg = {};
    cfg.eta0 = -2.0;
    CHECK_THROWS_AS(cfg.validate(), DomainError);
    const auto t = testing::scalar_trajectory({0, 0, 4, 2}, 0.5, {1});
    CHECK_THROWS_AS(solve_subgradient(t, EstimatorKind::least_squares), DomainError);
}

TEST_CASE("robust estimators recover under sparse attacks where least squares fails") {
    const auto sys = random_stable_system(3, 0, 0.8, 3);
    StealthAttackConfig att;
    att.sigma = 10.0;
    const auto t = simulate(sys, InputPolicy::zero(), make_bernoulli(400, 0.3, 3), att, 3);
    const auto l2 = estimate(t, EstimatorKind::group_l2);
    const auto l1 = estimate(t, EstimatorKind::entry_l1);
    const auto ls = estimate(t, EstimatorKind::least_squares);
    CHECK(estimation_error(l2.estimate(), sys) <= 1e-8);
    CHECK(estimation_error(l1.estimate(), sys) <= 1e-8);
    CHECK(estimation_error(ls.estimate(), sys) > 1e-3);
}
