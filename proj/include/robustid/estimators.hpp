#pragma once

#include <string>
#include <vector>

#include "robustid/lti.hpp"

namespace robustid {

/// Loss applied to each one-step residual x_{t+1} - A x_t - B u_t.
enum class EstimatorKind {
    least_squares,  ///< sum of squared 2-norms
    group_l2,       ///< sum of 2-norms
    entry_l1,       ///< sum of 1-norms
};

std::string to_string(EstimatorKind kind);
/// Accepts "ls", "l2", "l1" and the long names.
EstimatorKind estimator_kind_from_string(const std::string& name);

enum class WarmStart { zero, least_squares };

struct SolverConfig {
    int max_iters = 20000;
    /// Initial step; 0 selects 1 / mean_t |z_t|^2.
    double eta0 = 0.0;
    /// Certificate tolerance used for the optimality-based stop.
    double tol = 1e-8;
    WarmStart warm_start = WarmStart::least_squares;
    bool track = true;
    /// Iterations between trace entries.
    int log_every = 100;
    /// Iterations between certificate checks of the best iterate; 0 disables
    /// certificate-based stopping and polishing.
    int certify_every = 500;
    /// Try least-squares refits on the near-zero-residual set of the best
    /// iterate at every certificate check.
    bool polish = true;

    void validate() const;
};

struct Estimate {
    Matrix a;
    Matrix b;
};

struct EstimationResult {
    Matrix a_hat;
    Matrix b_hat;
    double objective = 0.0;
    /// Columns d_i = x_{i+1} - A_hat x_i - B_hat u_i.
    Matrix residuals;
    int iterations_used = 0;
    /// Best objective after every `log_every` iterations; non-increasing.
    std::vector<double> trace;
    bool certified = false;
    std::string stop_reason;

    Estimate estimate() const { return {a_hat, b_hat}; }
};

/// Residual matrix D = X_+ - A X - B U for a candidate (A, B).
Matrix residuals(const Trajectory& traj, const Matrix& a, const Matrix& b);

/// Sum over t of |x_{t+1} - A x_t - B u_t| in the norm selected by `kind`
/// (squared 2-norm for least squares).
double objective(const Trajectory& traj, const Matrix& a, const Matrix& b, EstimatorKind kind);
double objective_from_residuals(const Matrix& residuals, EstimatorKind kind);

/// Joint least squares for [A B]; minimum-norm solution when the regressor
/// is rank deficient.
Estimate least_squares(const Trajectory& traj);

/// Least squares restricted to the given time indices.
Estimate least_squares_on(const Trajectory& traj, const std::vector<int>& times);

struct ScalarSolution {
    double a_hat = 0.0;
    double objective = 0.0;
    /// Every x_i (i < T) is zero, so every a is optimal.
    bool degenerate = false;
};

/// Exact minimizer of sum_i |x_{i+1} - a x_i| for n = 1 autonomous data.
/// The minimizer is a weighted median of the ratios x_{i+1}/x_i with weights
/// |x_i|; ties resolve to the smallest optimal ratio.
ScalarSolution solve_scalar_exact(const Trajectory& traj);

/// Subgradient descent on [A B] with steps eta0/sqrt(k+1) and best-iterate
/// tracking. Throws DomainError if the objective becomes non-finite.
/// `initial`, when given, replaces the warm start if its objective is lower.
EstimationResult solve_subgradient(const Trajectory& traj, EstimatorKind kind,
                                   const SolverConfig& config = {}, const Estimate* initial = nullptr);

/// Least squares or subgradient, depending on `kind`.
EstimationResult estimate(const Trajectory& traj, EstimatorKind kind,
                          const SolverConfig& config = {}, const Estimate* initial = nullptr);

/// Frobenius norm of A_hat - A_true.
double estimation_error(const Matrix& a_hat, const Matrix& a_true);
/// Frobenius norm of [A_hat - A, B_hat - B].
double estimation_error(const Estimate& est, const LtiSystem& truth);

}  // namespace robustid
