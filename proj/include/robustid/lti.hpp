#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "robustid/rng.hpp"

namespace robustid {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest eigenvalue magnitude of a square matrix.
/// Throws DomainError if the matrix is not square or the eigensolver fails.
double spectral_radius(const Matrix& a);

/**
 * Discrete-time system x_{i+1} = A x_i + B u_i + d_i.
 *
 * m = 0 encodes an autonomous system (B is n x 0). The spectral radius is
 * computed once at construction.
 */
class LtiSystem {
public:
    LtiSystem(Matrix a, Matrix b);
    static LtiSystem autonomous(Matrix a);

    const Matrix& a() const { return a_; }
    const Matrix& b() const { return b_; }
    int n() const { return static_cast<int>(a_.rows()); }
    int m() const { return static_cast<int>(b_.cols()); }
    double rho() const { return rho_; }
    bool stable() const { return rho_ < 1.0; }

private:
    Matrix a_;
    Matrix b_;
    double rho_;
};

/// Forward-Euler discretization: A = I + dt Ac, B = dt Bc.
LtiSystem discretize_euler(const Matrix& ac, const Matrix& bc, double dt);

/// Ordered set of attack times within a horizon of T steps.
class AttackSchedule {
public:
    AttackSchedule() = default;
    /// Validates that times are strictly increasing and lie in [0, T).
    AttackSchedule(int horizon, std::vector<int> times);

    int horizon() const { return horizon_; }
    const std::vector<int>& times() const { return times_; }
    std::optional<int> delta() const { return delta_; }
    bool attacked(int i) const;
    /// Complement of the attack set in {0..T-1}.
    std::vector<int> clean_times() const;
    /// Restriction to the first `horizon` steps.
    AttackSchedule prefix(int horizon) const;

private:
    friend AttackSchedule make_delta_spaced(int, int, int);
    int horizon_ = 0;
    std::vector<int> times_;
    std::optional<int> delta_;
};

/// Attacks at first_attack, first_attack + delta, ... below T.
AttackSchedule make_delta_spaced(int horizon, int delta, int first_attack);

/// Each time index attacked independently with probability p.
AttackSchedule make_bernoulli(int horizon, double p, std::uint64_t seed);

enum class LengthLaw { gaussian, uniform_bounded, rademacher_scaled };
enum class DisturbanceLaw {
    stealth,   ///< d = l f with f uniform on the unit sphere, l a scalar length
    gaussian,  ///< d ~ N(0, sigma^2 I) on the active coordinates
};

/**
 * Attack vector sampler configuration.
 *
 * For the stealth law, sigma is the length scale; every length law has
 * variance sigma^2. For the gaussian law, sigma is the per-coordinate
 * standard deviation. `support` restricts the nonzero coordinates (empty
 * means all coordinates are active).
 */
struct StealthAttackConfig {
    DisturbanceLaw law = DisturbanceLaw::stealth;
    double sigma = 1.0;
    LengthLaw length_law = LengthLaw::gaussian;
    double history_coupling = 0.0;
    std::vector<int> support;

    void validate(int n) const;
    /// Ratio between the length standard deviation and its sub-Gaussian parameter.
    double variance_ratio() const { return 1.0; }
};

/// Previous draw seen by the sampler; the AR coupling only looks one step back.
struct AttackHistory {
    std::optional<double> previous_length;
    std::optional<Vector> previous_vector;
};

/// Separate engines for attack directions and lengths.
struct AttackStreams {
    Engine directions;
    Engine lengths;

    static AttackStreams from_seed(std::uint64_t seed);
};

/// Draws one attack vector of dimension n. Never returns the zero vector.
Vector sample_stealth_attack(const StealthAttackConfig& cfg, int n, AttackHistory& history,
                             AttackStreams& streams);

enum class InputKind { zero, iid_gaussian, feedback };

struct InputPolicy {
    InputKind kind = InputKind::zero;
    double xi = 0.0;
    Matrix feedback_gain;  ///< m x n, used by InputKind::feedback

    static InputPolicy zero() { return {}; }
    static InputPolicy iid_gaussian(double xi) { return {InputKind::iid_gaussian, xi, {}}; }
    static InputPolicy feedback(Matrix gain, double xi) {
        return {InputKind::feedback, xi, std::move(gain)};
    }
};

/// States x_0..x_T (columns), inputs u_0..u_{T-1}, disturbances d_0..d_{T-1}.
struct Trajectory {
    Matrix states;
    Matrix inputs;
    Matrix disturbances;
    AttackSchedule schedule;
    std::uint64_t seed = 0;

    int horizon() const { return static_cast<int>(disturbances.cols()); }
    int n() const { return static_cast<int>(states.rows()); }
    int m() const { return static_cast<int>(inputs.rows()); }

    /// First `horizon` transitions of this trajectory.
    Trajectory prefix(int horizon) const;
    /// Stacked regressors z_i = (x_i, u_i), one column per step.
    Matrix regressors() const;
    /// Successor states x_1..x_T.
    Matrix successors() const;
};

/// Simulates from x_0 = 0. Identical arguments give bit-identical output.
/// Throws DomainError on dimension mismatch or when |x|_inf exceeds 1e12.
Trajectory simulate(const LtiSystem& system, const InputPolicy& policy,
                    const AttackSchedule& schedule, const StealthAttackConfig& attack,
                    std::uint64_t seed);

/// Parameters of the linearized insulin absorption model.
struct HovorkaParams {
    double ka1, ka2, ka3;
    double kb1, kb2, kb3;
    double t_max_i;
    double v_i;
    double ke;

    void validate() const;
};

HovorkaParams load_hovorka_params(const std::string& path);
HovorkaParams default_hovorka_params();

struct ContinuousModel {
    Matrix ac;
    Matrix bc;
    std::vector<std::string> labels;
};

/// Six-state continuous model, state order (x1, x2, x3, S1, S2, I), Bc = 0.
ContinuousModel hovorka_continuous(const HovorkaParams& params);
ContinuousModel hovorka_continuous(const std::string& params_path);

/// Random n x n matrix rescaled to spectral radius `rho`, with an n x m
/// Gaussian input matrix.
LtiSystem random_stable_system(int n, int m, double rho, std::uint64_t seed);

/// Rank of [B AB ... A^{n-1}B].
int controllability_rank(const LtiSystem& system, double tol = 1e-9);

}  // namespace robustid
