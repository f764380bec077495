#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "robustid/estimators.hpp"
#include "robustid/lti.hpp"

namespace robustid {

enum class Verdict { optimal, not_optimal, inconclusive };

std::string to_string(Verdict verdict);

/**
 * Outcome of a bounded-multiplier feasibility check F w = g.
 *
 * optimal: `w` satisfies the box (or ball) bound and |F w - g|_inf <= margin.
 * not_optimal: `z` is a unit direction whose dual value is negative; `margin`
 * holds that value.
 * inconclusive: neither could be established; `margin` is the final residual.
 */
struct Certificate {
    Verdict verdict = Verdict::inconclusive;
    double margin = 0.0;
    Matrix w;
    Matrix z;
    double residual = 0.0;
    int iterations = 0;
};

struct FeasibilityOptions {
    double tol = 1e-8;
    int max_iters = 20000;
    /// Bound on |w|_inf (box) or on each row's 2-norm (ball).
    double radius = 1.0;
};

/// z^T g + |F^T z|_1.
double farkas_dual_value(const Matrix& f, const Vector& g, const Vector& z);

/// <Z, G> + sum_i |Z^T F_i|_2 over the columns F_i of F.
double group_dual_value(const Matrix& f, const Matrix& g, const Matrix& z);

/**
 * Decides whether some w with |w|_inf <= radius solves F w = g.
 *
 * Box-constrained least squares by projected gradient on the row-whitened
 * system (same feasible set, unit step). Residual tolerance is `tol` scaled
 * by max(1, |g|_inf, max column inf-norm of F). When infeasible, the
 * whitened residual yields a violating direction z.
 */
Certificate farkas_feasible(const Matrix& f, const Vector& g, const FeasibilityOptions& opts = {});

/// Convenience overload for the default radius.
Certificate farkas_feasible(const Matrix& f, const Vector& g, double tol);

/**
 * Decides whether F W = G has a solution whose rows all have 2-norm at most
 * `radius` (F is r x q, W is q x k, G is r x k). Violating directions are
 * r x k matrices Z with group_dual_value(F, G, Z) < 0.
 */
Certificate group_feasible(const Matrix& f, const Matrix& g, const FeasibilityOptions& opts = {});

/// Visits a deterministic epsilon-net of the unit sphere in R^dim.
void for_each_sphere_net_point(int dim, double epsilon, const std::function<void(const Vector&)>& visit);
/// Number of points for_each_sphere_net_point would visit.
std::size_t sphere_net_size(int dim, double epsilon);

struct DualMinResult {
    double min_value = 0.0;
    Vector argmin;
    /// min over the net >= theta and the Lipschitz slack L*epsilon < theta.
    bool certified_nonnegative = false;
    double lipschitz = 0.0;
    std::size_t evaluations = 0;
};

struct DualMinOptions {
    double epsilon = 0.05;
    double theta = 1e-6;
    int quasi_random_points = 4096;
    /// Local descent runs started from the best net points.
    int refinement_starts = 8;
    int refinement_steps = 400;
    std::size_t budget = 10'000'000;
};

/// Minimizes f(z) = z^T g + |z^T F|_1 over the unit sphere (dim <= 6).
/// Throws DomainError if dim > 6 or the net exceeds the budget.
DualMinResult dual_min_fz(const Matrix& f, const Vector& g, const DualMinOptions& opts = {});

/// Per-time residual support of a candidate estimate.
struct SupportInfo {
    double tol = 0.0;
    bool ambiguous = false;
};

struct KktReport {
    Verdict verdict = Verdict::inconclusive;
    /// Largest feasibility residual, or the most negative dual value found.
    double margin = 0.0;
    /// One certificate per output coordinate (n systems).
    std::vector<Certificate> coordinates;
    /// Exact ball system for the group estimator, when it was needed.
    std::optional<Certificate> group;
    /// Times whose residual is treated as nonzero (group and least squares)
    /// or, for entry_l1, the union over coordinates.
    std::vector<int> support;
    SupportInfo support_info;
};

struct KktOptions {
    double tol = 1e-8;
    /// Negative selects 1e-6 * (1 + median residual norm).
    double support_tol = -1.0;
    int max_iters = 20000;
};

/**
 * Optimality certificate for (A_hat, B_hat) under the sum-of-norms objective.
 *
 * Coordinate l uses the clean regressors z_i = (x_i, u_i) as columns and
 * g_l = sum over the support of s_i^l z_i, where s_i is the residual's
 * subgradient. For group_l2 the columns are scaled by 1/sqrt(n), which is
 * sufficient but not necessary; if a coordinate system fails, the exact ball
 * system decides instead. entry_l1 systems are exact.
 */
KktReport kkt_certificate(const Trajectory& traj, const Matrix& a_hat, const Matrix& b_hat,
                          EstimatorKind kind, const KktOptions& opts = {});

struct Lemma2Result {
    bool holds = false;
    double lhs = 0.0;  ///< sum of |x_i| over clean times
    double rhs = 0.0;  ///< sum of |x_i| over attack times
};

/// Scalar uniqueness condition: clean mass strictly exceeds attacked mass.
Lemma2Result lemma2_condition(const Trajectory& traj);

struct SpanCheck {
    int attack_time = 0;
    int next_attack_time = 0;
    double relative_residual = 0.0;
    int basis_rank = 0;
    bool holds = false;
    /// d_i = 0, so the Krylov basis is empty.
    bool degenerate = false;
};

/// For consecutive attacks i, i + delta: is d_{i+delta} in the span of
/// d_i, A d_i, ..., A^{delta-2} d_i?
std::vector<SpanCheck> span_condition(const Trajectory& traj, const Matrix& a_true, int delta,
                                      double tol = 1e-9);

/// h_0..h_degree of the complete homogeneous symmetric polynomials.
std::vector<std::complex<double>> complete_homogeneous(const std::vector<std::complex<double>>& eigs,
                                                       int degree);

struct EigenConditionResult {
    bool holds = false;
    /// lhs == rhs up to rounding.
    bool boundary = false;
    double lhs = 0.0;
    double rhs = 0.0;
    /// Natural logs of lhs and rhs; finite even when the plain values overflow.
    double log_lhs = 0.0;
    double log_rhs = 0.0;
};

/// |h_{delta-n}(eigs)| <= sum_{t < delta-n} |h_t(eigs)|. Requires delta >= n + 1.
EigenConditionResult eigen_condition(const std::vector<std::complex<double>>& eigs, int delta);

/// C(n+k-1, k) x^k - sum_{i<k} C(n+i-1, i) x^i.
double cnk_polynomial(int n, int k, double x);

/// Unique positive root of cnk_polynomial(n, k, .), by bisection on [0, 4].
double cnk_bound(int n, int k, double tol = 1e-13);

}  // namespace robustid
