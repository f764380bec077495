#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "robustid/estimators.hpp"
#include "robustid/lti.hpp"

namespace robustid {

/**
 * Parameters of the sample-complexity predictions. All values are order
 * predictions: `multiplier` stands in for the unspecified universal constant.
 */
struct ComplexityInputs {
    int n = 1;
    int m = 0;
    double p = 0.5;
    double rho = 0.5;
    double c = 1.0;
    /// 0 selects the floor 1 / (1 - rho).
    double kappa = 0.0;
    double delta = 0.05;
    double multiplier = 1.0;

    void validate(bool needs_inputs) const;
    double effective_kappa() const;
};

/// R for the autonomous case.
double r_autonomous(const ComplexityInputs& in);

/// multiplier * n R [n log(nR) + log(1/delta)].
double t_sample_auto_l2(const ComplexityInputs& in);
/// The same expression without the leading factor n.
double t_sample_auto_l1(const ComplexityInputs& in);

struct InputSampleComplexity {
    double r1 = 0.0;
    double r2 = 0.0;
    double t1 = 0.0;
    double t2 = 0.0;
    double t = 0.0;
};

double r1_input(const ComplexityInputs& in);
double r2_input(const ComplexityInputs& in);

/// T1 = n R1 [n log(nR1) + log(1/delta)], T2 = n R2 [m log(nR2) + log(1/delta)],
/// T = max(T1, T2). With `l1`, the leading factor n is dropped from both.
InputSampleComplexity t_sample_input(const ComplexityInputs& in, bool l1 = false);

struct KappaC {
    double kappa = 0.0;
    double c = 0.0;
    double eta_b = 0.0;
    double rho_b = 0.0;
    double sigma_bar = 0.0;
    double sigma_tilde = 0.0;
};

/// Candidate kappa and c for an input-driven system with input scale xi,
/// attack scale sigma and attack probability p.
KappaC kappa_c_candidates(const LtiSystem& system, double xi, double sigma, double p);

/// One sweep scenario: the system, the attack process and the estimator.
struct PhaseScenario {
    LtiSystem system = LtiSystem::autonomous(Matrix::Zero(1, 1));
    /// Bernoulli probability, used when `spacing` is empty.
    double p = 0.3;
    std::optional<int> spacing;
    int first_attack = 0;
    StealthAttackConfig attack;
    InputPolicy policy;
    EstimatorKind estimator = EstimatorKind::group_l2;
    SolverConfig solver;
    /// Negative selects the default for the estimator in use.
    double recovery_tol = -1.0;
    /// Success fraction that counts as recovery.
    double target = 0.9;
    /// Use the exact weighted-median solver for scalar autonomous systems.
    bool scalar_exact = true;
};

struct PhasePoint {
    int horizon = 0;
    int successes = 0;
    int trials = 0;
    int certified = 0;
    double success_rate() const { return trials > 0 ? static_cast<double>(successes) / trials : 0.0; }
};

struct PhaseCurve {
    std::vector<PhasePoint> points;
    std::optional<int> threshold;
    double recovery_tol = 0.0;
    double target = 0.0;
};

double default_recovery_tol(const PhaseScenario& scenario);

/**
 * For every T in `grid`, counts how many of `trials` seeded runs recover the
 * system within the recovery tolerance. Trial j uses one simulated trajectory
 * whose prefixes serve every grid point. Trials run on `threads` workers with
 * per-trial seeds, so results do not depend on the thread count.
 */
PhaseCurve phase_transition(const PhaseScenario& scenario, const std::vector<int>& grid, int trials,
                            std::uint64_t seed, int threads = 1);

}  // namespace robustid
