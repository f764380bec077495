#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "robustid/complexity.hpp"
#include "robustid/error.hpp"

using namespace robustid;

namespace {

ComplexityInputs base_inputs() {
    ComplexityInputs in;
    in.n = 3;
    in.m = 2;
    in.p = 0.3;
    in.rho = 0.7;
    in.c = 0.6;
    in.delta = 0.05;
    return in;
}

// Plain double-precision re-derivation used as a second evaluation path.
double reference_r(int n, double p, double rho, double c) {
    const double lc = std::log(1.0 / c);
    const double lr = std::log(1.0 / rho);
    const double a = lc / (n * std::pow(c, 4) * p * (1 - p) * lr);
    const double b = lc * lc / (std::pow(c, 10) * (1 - p) * (1 - p) * std::pow(1 - rho, 3) * lr * lr);
    const double d = 1.0 / (n * p * (1 - p));
    return std::max({a, b, d});
}

double reference_t_l2(int n, double p, double rho, double c, double delta) {
    const double r = reference_r(n, p, rho, c);
    return n * r * (n * std::log(n * r) + std::log(1.0 / delta));
}

}  // namespace

TEST_CASE("l2 and l1 autonomous sample sizes differ by a factor of n") {
    std::mt19937_64 eng(11);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 100; ++k) {
        ComplexityInputs in;
        in.n = 1 + static_cast<int>(u(eng) * 10);
        in.p = 0.01 + 0.98 * u(eng);
        in.rho = 0.01 + 0.98 * u(eng);
        in.c = 0.05 + 0.95 * u(eng);
        in.delta = 0.001 + 0.9 * u(eng);
        const double ratio = t_sample_auto_l2(in) / t_sample_auto_l1(in);
        CHECK(std::abs(ratio - in.n) <= 1e-12 * in.n);
    }
}

TEST_CASE("autonomous formula against an independent evaluation") {
    for (double p : {0.1, 0.5, 0.9}) {
        for (double rho : {0.3, 0.8}) {
            ComplexityInputs in = base_inputs();
            in.p = p;
            in.rho = rho;
            CHECK(r_autonomous(in) == doctest::Approx(reference_r(in.n, p, rho, in.c)).epsilon(1e-12));
            CHECK(t_sample_auto_l2(in) ==
                  doctest::Approx(reference_t_l2(in.n, p, rho, in.c, in.delta)).epsilon(1e-12));
        }
    }
    ComplexityInputs a = base_inputs();
    a.p = 0.9;
    ComplexityInputs b = base_inputs();
    b.p = 0.5;
    CHECK(t_sample_auto_l2(a) / t_sample_auto_l2(b) ==
          doctest::Approx(reference_t_l2(3, 0.9, 0.7, 0.6, 0.05) / reference_t_l2(3, 0.5, 0.7, 0.6, 0.05))
              .epsilon(1e-12));
}

TEST_CASE("c = 1 leaves only the 1/(np(1-p)) branch") {
    ComplexityInputs in = base_inputs();
    in.c = 1.0;
    CHECK(r_autonomous(in) == doctest::Approx(1.0 / (3 * 0.3 * 0.7)).epsilon(1e-14));
}

TEST_CASE("doubling 1/delta adds nR log 2") {
    ComplexityInputs in = base_inputs();
    in.multiplier = 2.5;
    const double r = r_autonomous(in);
    const double t1 = t_sample_auto_l2(in);
    in.delta /= 2.0;
    CHECK(t_sample_auto_l2(in) - t1 == doctest::Approx(2.5 * in.n * r * std::log(2.0)).epsilon(1e-10));
}

TEST_CASE("input-driven second radius") {
    ComplexityInputs in;
    in.n = 6;
    in.m = 1;
    in.p = 0.6;
    in.rho = 0.5;
    CHECK(r2_input(in) == doctest::Approx(3.75).epsilon(1e-14));
    const auto t = t_sample_input(in, false);
    CHECK(t.t == std::max(t.t1, t.t2));
    const auto t1 = t_sample_input(in, true);
    CHECK(t.t1 / t1.t1 == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("kappa at its floor gives the (1 - rho)^-2 dependence") {
    ComplexityInputs in = base_inputs();
    in.c = 1.0;
    in.p = 0.9;
    in.rho = 0.5;
    const double kappa = 1.0 / (1.0 - in.rho);
    const double second = in.p * kappa * kappa / ((1 - in.p) * (1 - in.p) * (1 - in.rho) * (1 - in.rho));
    CHECK(r1_input(in) >= second * (1.0 - 1e-12));
    CHECK(r1_input(in) == doctest::Approx(second).epsilon(1e-12));
}

TEST_CASE("sample sizes are nondecreasing in 1/delta and rho, and in p on the upper branch") {
    for (int n : {1, 3, 6}) {
        for (double c : {0.5, 1.0}) {
            double prev_rho_l2 = 0.0;
            double prev_rho_in = 0.0;
            for (double rho = 0.05; rho < 0.99; rho += 0.05) {
                ComplexityInputs in = base_inputs();
                in.n = n;
                in.c = c;
                in.rho = rho;
                const double l2 = t_sample_auto_l2(in);
                const double inp = t_sample_input(in, false).t;
                CHECK(l2 >= prev_rho_l2);
                CHECK(inp >= prev_rho_in);
                prev_rho_l2 = l2;
                prev_rho_in = inp;

                double prev_delta = 0.0;
                for (double delta : {0.5, 0.1, 0.01, 0.001}) {
                    in.delta = delta;
                    const double t = t_sample_auto_l1(in) + t_sample_input(in, true).t;
                    CHECK(t >= prev_delta);
                    prev_delta = t;
                }
            }
            double prev_p = 0.0;
            for (double p = 0.5; p < 0.99; p += 0.02) {
                ComplexityInputs in = base_inputs();
                in.n = n;
                in.c = c;
                in.p = p;
                const double t = t_sample_input(in, false).t;
                CHECK(t >= prev_p);
                prev_p = t;
            }
        }
    }
}

TEST_CASE("complexity inputs are validated") {
    ComplexityInputs in = base_inputs();
    in.p = 1.0;
    CHECK_THROWS_AS(t_sample_auto_l2(in), DomainError);
    in = base_inputs();
    in.rho = 1.0;
    CHECK_THROWS_AS(t_sample_auto_l1(in), DomainError);
    in = base_inputs();
    in.m = 0;
    CHECK_THROWS_AS(t_sample_input(in, false), DomainError);
    in = base_inputs();
    in.kappa = 1.0;
    CHECK_THROWS_AS(t_sample_input(in, false), DomainError);
}

TEST_CASE("kappa and c candidates") {
    const auto sys = random_stable_system(3, 2, 0.6, 4);
    const auto kc = kappa_c_candidates(sys, 1.0, 2.0, 0.3);
    CHECK(kc.kappa >= 1.0 / (1.0 - sys.rho()) - 1e-12);
    CHECK(kc.c > 0.0);
    CHECK(kc.c <= 1.0);
    CHECK(kc.sigma_bar > 0.0);
    CHECK_THROWS_AS(kappa_c_candidates(random_stable_system(3, 0, 0.6, 4), 1.0, 1.0, 0.3), DomainError);
}

TEST_CASE("phase transition without attacks always recovers") {
    PhaseScenario sc;
    sc.system = random_stable_system(2, 1, 0.7, 3);
    sc.policy = InputPolicy::iid_gaussian(1.0);
    sc.p = 0.0;
    const auto curve = phase_transition(sc, {4, 8, 16}, 5, 1);
    for (const auto& pt : curve.points) CHECK(pt.success_rate() == 1.0);
    REQUIRE(curve.threshold);
    CHECK(*curve.threshold == 4);
}

TEST_CASE("scalar delta-spaced phase transition succeeds from T = 3") {
    PhaseScenario sc;
    sc.system = LtiSystem::autonomous(Matrix::Constant(1, 1, 0.8));
    sc.spacing = 2;
    sc.first_attack = 0;
    sc.attack.sigma = 100.0;
    const auto curve = phase_transition(sc, {3, 4, 5, 10, 40}, 10, 2);
    CHECK(curve.recovery_tol == 1e-9);
    for (const auto& pt : curve.points) CHECK(pt.success_rate() == 1.0);
}

TEST_CASE("phase transition is reproducible and thread-count independent") {
    PhaseScenario sc;
    sc.system = random_stable_system(2, 0, 0.8, 1);
    sc.p = 0.3;
    const std::vector<int> grid = {8, 16, 32};
    const auto a = phase_transition(sc, grid, 1, 9);
    const auto b = phase_transition(sc, grid, 1, 9);
    const auto c = phase_transition(sc, grid, 6, 9, 1);
    const auto d = phase_transition(sc, grid, 6, 9, 3);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        CHECK(a.points[k].successes == b.points[k].successes);
        CHECK(c.points[k].successes == d.points[k].successes);
        CHECK(c.points[k].certified == d.points[k].certified);
    }
    CHECK_THROWS_AS(phase_transition(sc, {8, 8}, 1, 1), DomainError);
    CHECK_THROWS_AS(phase_transition(sc, {8}, 0, 1), DomainError);
}
