#include "robustid/complexity.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "robustid/error.hpp"

namespace robustid {

namespace {

using Real = long double;

void require_open_unit(double v, const char* name) {
    if (!(v > 0.0 && v < 1.0)) {
        throw DomainError(std::string("complexity: ") + name + " must lie in (0, 1)");
    }
}

Real sq(Real v) { return v * v; }

}  // namespace

void ComplexityInputs::validate(bool needs_inputs) const {
    if (n < 1) throw DomainError("complexity: n must be positive");
    if (needs_inputs && m < 1) throw DomainError("complexity: m must be positive for the input case");
    if (m < 0) throw DomainError("complexity: m must be nonnegative");
    require_open_unit(p, "p");
    require_open_unit(rho, "rho");
    if (!(c > 0.0 && c <= 1.0)) throw DomainError("complexity: c must lie in (0, 1]");
    if (!(delta > 0.0 && delta <= 1.0)) throw DomainError("complexity: delta must lie in (0, 1]");
    if (!(multiplier > 0.0) || !std::isfinite(multiplier)) {
        throw DomainError("complexity: multiplier must be positive");
    }
    if (kappa != 0.0 && !(kappa >= 1.0 / (1.0 - rho))) {
        throw DomainError("complexity: kappa must be at least 1/(1 - rho)");
    }
}

double ComplexityInputs::effective_kappa() const { return kappa > 0.0 ? kappa : 1.0 / (1.0 - rho); }

double r_autonomous(const ComplexityInputs& in) {
    in.validate(false);
    const Real n = in.n;
    const Real p = in.p;
    const Real rho = in.rho;
    const Real c = in.c;
    const Real log_inv_c = -std::log(c);
    const Real log_inv_rho = -std::log(rho);
    const Real b1 = log_inv_c / (n * std::pow(c, 4.0L) * p * (1 - p) * log_inv_rho);
    const Real b2 = sq(log_inv_c) /
                    (std::pow(c, 10.0L) * sq(1 - p) * std::pow(1 - rho, 3.0L) * sq(log_inv_rho));
    const Real b3 = 1 / (n * p * (1 - p));
    return static_cast<double>(std::max({b1, b2, b3}));
}

namespace {

/// lead * R [dim log(nR) + log(1/delta)] scaled by the multiplier.
Real sample_expression(Real lead, Real n, Real r, Real dim, Real delta, Real multiplier) {
    return multiplier * lead * r * (dim * std::log(n * r) + std::log(1 / delta));
}

}  // namespace

double t_sample_auto_l2(const ComplexityInputs& in) {
    const Real r = r_autonomous(in);
    return static_cast<double>(sample_expression(in.n, in.n, r, in.n, in.delta, in.multiplier));
}

double t_sample_auto_l1(const ComplexityInputs& in) {
    const Real r = r_autonomous(in);
    return static_cast<double>(sample_expression(1, in.n, r, in.n, in.delta, in.multiplier));
}

double r1_input(const ComplexityInputs& in) {
    in.validate(true);
    const Real n = in.n;
    const Real p = in.p;
    const Real rho = in.rho;
    const Real c = in.c;
    const Real kappa = in.effective_kappa();
    const Real log_kc = std::log(kappa / c);
    const Real log_inv_rho = -std::log(rho);
    const Real b1 = log_kc / (n * std::pow(c, 4.0L) * log_inv_rho);
    const Real b2 = p * sq(kappa) / (std::pow(c, 10.0L) * sq(1 - p) * sq(1 - rho));
    const Real b3 = p * sq(kappa) * sq(log_kc) / (std::pow(c, 10.0L) * sq(1 - rho) * sq(log_inv_rho));
    const Real b4 = 1 / (n * p);
    return static_cast<double>(std::max({b1, b2, b3, b4}));
}

double r2_input(const ComplexityInputs& in) {
    in.validate(true);
    const Real n = in.n;
    const Real p = in.p;
    return static_cast<double>(std::max({1 / (n * p), p / sq(1 - p), static_cast<Real>(in.m) / n}));
}

InputSampleComplexity t_sample_input(const ComplexityInputs& in, bool l1) {
    InputSampleComplexity out;
    out.r1 = r1_input(in);
    out.r2 = r2_input(in);
    const Real lead = l1 ? 1 : in.n;
    out.t1 = static_cast<double>(sample_expression(lead, in.n, out.r1, in.n, in.delta, in.multiplier));
    out.t2 = static_cast<double>(sample_expression(lead, in.n, out.r2, in.m, in.delta, in.multiplier));
    out.t = std::max(out.t1, out.t2);
    return out;
}

KappaC kappa_c_candidates(const LtiSystem& system, double xi, double sigma, double p) {
    const int n = system.n();
    const int m = system.m();
    if (m < 1) throw DomainError("kappa_c_candidates: system has no inputs");
    if (!system.stable()) throw DomainError("kappa_c_candidates: system must be stable");
    if (!(xi > 0.0) || !(sigma > 0.0)) throw DomainError("kappa_c_candidates: xi and sigma must be positive");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("kappa_c_candidates: p must lie in [0, 1]");
    const double rho = system.rho();

    Matrix ctrb(n, n * m);
    Matrix block = system.b();
    for (int k = 0; k < n; ++k) {
        ctrb.middleCols(k * m, m) = block;
        block = system.a() * block;
    }
    const Eigen::JacobiSVD<Matrix> ctrb_svd(ctrb);
    const Eigen::JacobiSVD<Matrix> b_svd(system.b());

    KappaC out;
    out.eta_b = ctrb_svd.singularValues().minCoeff() / ((1.0 - rho) * (1.0 - rho));
    out.rho_b = b_svd.singularValues().maxCoeff();
    const double xi2 = xi * xi;
    const double s2 = sigma * sigma;
    const double sigma_bar2 = out.eta_b * out.eta_b * xi2 / m + p * s2 / n;
    const double sigma_tilde2 = out.rho_b * out.rho_b * xi2 / (m * (1.0 - rho)) + p * s2 / (n * (1.0 - rho));
    out.sigma_bar = std::sqrt(sigma_bar2);
    out.sigma_tilde = std::sqrt(sigma_tilde2);
    out.kappa = std::max(out.sigma_tilde / out.sigma_bar, 1.0 / (1.0 - rho));
    out.c = std::min(1.0, (out.eta_b * out.eta_b * xi2 / m) / (out.rho_b * out.rho_b * xi2 / m + p * s2 / n));
    return out;
}

double default_recovery_tol(const PhaseScenario& scenario) {
    if (scenario.recovery_tol >= 0.0) return scenario.recovery_tol;
    const bool exact = scenario.scalar_exact && scenario.system.n() == 1 && scenario.system.m() == 0;
    if (exact) return 1e-9;
    return 1e-3 * (1.0 + scenario.system.a().norm());
}

PhaseCurve phase_transition(const PhaseScenario& scenario, const std::vector<int>& grid, int trials,
                            std::uint64_t seed, int threads) {
    if (trials < 1) throw DomainError("phase_transition: trials must be positive");
    if (grid.empty()) throw DomainError("phase_transition: empty T grid");
    for (std::size_t k = 0; k < grid.size(); ++k) {
        if (grid[k] < 1) throw DomainError("phase_transition: T values must be positive");
        if (k > 0 && grid[k] <= grid[k - 1]) throw DomainError("phase_transition: T grid must be increasing");
    }
    if (!scenario.spacing && !(scenario.p >= 0.0 && scenario.p <= 1.0)) {
        throw DomainError("phase_transition: p must lie in [0, 1]");
    }
    if (!(scenario.target > 0.0 && scenario.target <= 1.0)) {
        throw DomainError("phase_transition: target must lie in (0, 1]");
    }
    scenario.solver.validate();
    scenario.attack.validate(scenario.system.n());

    const double tol = default_recovery_tol(scenario);
    const bool exact = scenario.scalar_exact && scenario.system.n() == 1 && scenario.system.m() == 0;
    const int horizon = grid.back();
    const std::size_t cells = grid.size();

    // outcome[trial * cells + k]: bit 0 success, bit 1 certified.
    std::vector<int> outcome(static_cast<std::size_t>(trials) * cells, 0);

    auto run_trial = [&](int trial) {
        const std::uint64_t trial_seed = derive_seed(seed, Stream::trial, static_cast<std::uint64_t>(trial));
        const AttackSchedule schedule =
            scenario.spacing ? make_delta_spaced(horizon, *scenario.spacing, scenario.first_attack)
                             : make_bernoulli(horizon, scenario.p, trial_seed);
        const Trajectory full = simulate(scenario.system, scenario.policy, schedule, scenario.attack, trial_seed);
        for (std::size_t k = 0; k < cells; ++k) {
            const int t = grid[k];
            try {
                const Trajectory traj = full.prefix(t);
                double error = 0.0;
                bool certified = false;
                if (exact) {
                    const auto sol = solve_scalar_exact(traj);
                    error = std::abs(sol.a_hat - scenario.system.a()(0, 0));
                    certified = !sol.degenerate;
                } else {
                    const auto res = estimate(traj, scenario.estimator, scenario.solver);
                    error = estimation_error(res.estimate(), scenario.system);
                    certified = res.certified;
                }
                int code = 0;
                if (error <= tol) code |= 1;
                if (certified) code |= 2;
                outcome[static_cast<std::size_t>(trial) * cells + k] = code;
            } catch (const DomainError& e) {
                throw DomainError("phase_transition (T=" + std::to_string(t) + ", trial=" +
                                  std::to_string(trial) + "): " + e.what());
            }
        }
    };

    const int workers = std::max(1, std::min(threads, trials));
    if (workers == 1) {
        for (int j = 0; j < trials; ++j) run_trial(j);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                while (true) {
                    const int j = next.fetch_add(1);
                    if (j >= trials) return;
                    try {
                        run_trial(j);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next.store(trials);
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    PhaseCurve curve;
    curve.recovery_tol = tol;
    curve.target = scenario.target;
    for (std::size_t k = 0; k < cells; ++k) {
        PhasePoint point;
        point.horizon = grid[k];
        point.trials = trials;
        for (int j = 0; j < trials; ++j) {
            const int code = outcome[static_cast<std::size_t>(j) * cells + k];
            if (code & 1) ++point.successes;
            if (code & 2) ++point.certified;
        }
        if (!curve.threshold && point.success_rate() >= scenario.target) curve.threshold = point.horizon;
        curve.points.push_back(point);
    }
    return curve;
}

}  // namespace robustid
