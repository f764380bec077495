#include "robustid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "robustid/certificates.hpp"
#include "robustid/error.hpp"

namespace robustid {

std::string to_string(EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::least_squares: return "ls";
        case EstimatorKind::group_l2: return "l2";
        case EstimatorKind::entry_l1: return "l1";
    }
    return "?";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
    if (name == "ls" || name == "least-squares") return EstimatorKind::least_squares;
    if (name == "l2" || name == "group-l2") return EstimatorKind::group_l2;
    if (name == "l1" || name == "entry-l1") return EstimatorKind::entry_l1;
    throw DomainError("unknown estimator '" + name + "' (expected ls, l2 or l1)");
}

void SolverConfig::validate() const {
    if (max_iters < 0) throw DomainError("solver: max_iters must be nonnegative");
    if (!(eta0 >= 0.0) || !std::isfinite(eta0)) throw DomainError("solver: eta0 must be positive (0 = auto)");
    if (!(tol >= 0.0)) throw DomainError("solver: tol must be nonnegative");
    if (log_every < 1) throw DomainError("solver: log_every must be positive");
    if (certify_every < 0) throw DomainError("solver: certify_every must be nonnegative");
}

Matrix residuals(const Trajectory& traj, const Matrix& a, const Matrix& b) {
    const int n = traj.n();
    const int m = traj.m();
    if (a.rows() != n || a.cols() != n) {
        throw DomainError("residuals: A must be n x n");
    }
    if (m > 0 && (b.rows() != n || b.cols() != m)) {
        throw DomainError("residuals: B must be n x m");
    }
    const int horizon = traj.horizon();
    Matrix r = traj.states.rightCols(horizon) - a * traj.states.leftCols(horizon);
    if (m > 0) r.noalias() -= b * traj.inputs;
    return r;
}

double objective_from_residuals(const Matrix& r, EstimatorKind kind) {
    switch (kind) {
        case EstimatorKind::least_squares: return r.squaredNorm();
        case EstimatorKind::group_l2: return r.rows() == 1 ? r.cwiseAbs().sum() : r.colwise().norm().sum();
        case EstimatorKind::entry_l1: return r.cwiseAbs().sum();
    }
    return 0.0;
}

double objective(const Trajectory& traj, const Matrix& a, const Matrix& b, EstimatorKind kind) {
    return objective_from_residuals(residuals(traj, a, b), kind);
}

namespace {

Estimate split_theta(const Matrix& theta, int n, int m) {
    return {theta.leftCols(n), theta.rightCols(m)};
}

Matrix join_theta(const Matrix& a, const Matrix& b) {
    Matrix theta(a.rows(), a.cols() + b.cols());
    theta << a, b;
    return theta;
}

/// Minimum-norm solution of theta * Z = Y in the least-squares sense.
Matrix min_norm_regression(const Matrix& z, const Matrix& y) {
    if (z.cols() == 0) return Matrix::Zero(y.rows(), z.rows());
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(z.transpose());
    return cod.solve(y.transpose()).transpose();
}

}  // namespace

Estimate least_squares(const Trajectory& traj) {
    const Matrix theta = min_norm_regression(traj.regressors(), traj.successors());
    return split_theta(theta, traj.n(), traj.m());
}

Estimate least_squares_on(const Trajectory& traj, const std::vector<int>& times) {
    const Matrix z = traj.regressors();
    const Matrix y = traj.successors();
    Matrix zs(z.rows(), static_cast<Eigen::Index>(times.size()));
    Matrix ys(y.rows(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) {
        zs.col(static_cast<Eigen::Index>(k)) = z.col(times[k]);
        ys.col(static_cast<Eigen::Index>(k)) = y.col(times[k]);
    }
    return split_theta(min_norm_regression(zs, ys), traj.n(), traj.m());
}

ScalarSolution solve_scalar_exact(const Trajectory& traj) {
    if (traj.n() != 1 || traj.m() != 0) {
        throw DomainError("solve_scalar_exact: requires n = 1 and no inputs");
    }
    const int horizon = traj.horizon();
    struct Breakpoint {
        double ratio;
        double weight;
    };
    std::vector<Breakpoint> points;
    double total = 0.0;
    for (int i = 0; i < horizon; ++i) {
        const double xi = traj.states(0, i);
        if (xi != 0.0) {
            points.push_back({traj.states(0, i + 1) / xi, std::abs(xi)});
            total += std::abs(xi);
        }
    }
    ScalarSolution out;
    if (points.empty()) {
        out.degenerate = true;
        out.a_hat = 0.0;
    } else {
        std::sort(points.begin(), points.end(),
                  [](const Breakpoint& l, const Breakpoint& r) { return l.ratio < r.ratio; });
        // Smallest ratio whose cumulative weight reaches half the total.
        double cumulative = 0.0;
        for (const auto& p : points) {
            cumulative += p.weight;
            if (2.0 * cumulative >= total) {
                out.a_hat = p.ratio;
                break;
            }
        }
    }
    Matrix a(1, 1);
    a(0, 0) = out.a_hat;
    out.objective = objective(traj, a, Matrix(1, 0), EstimatorKind::entry_l1);
    return out;
}

namespace {

/// Subgradient of the objective at residuals r, in residual space; zero
/// residual columns (or entries) take the minimal-norm element 0.
Matrix residual_subgradient(const Matrix& r, EstimatorKind kind) {
    Matrix g(r.rows(), r.cols());
    if (kind == EstimatorKind::group_l2) {
        for (Eigen::Index t = 0; t < r.cols(); ++t) {
            const double norm = r.col(t).norm();
            if (norm > 0.0) {
                g.col(t) = r.col(t) / norm;
            } else {
                g.col(t).setZero();
            }
        }
    } else {
        g = r.unaryExpr([](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
    }
    return g;
}

/// Least-squares refits on the near-zero-residual times of `theta`. Returns
/// the candidate with the lowest objective, if any beats `best_value`.
std::optional<Matrix> polish_candidate(const Matrix& z, const Matrix& y,
                                       const Matrix& theta, EstimatorKind kind, double best_value) {
    const int dim = static_cast<int>(z.rows());
    std::optional<Matrix> best;
    double best_obj = best_value;

    auto evaluate = [&](const Matrix& candidate) {
        if (!candidate.allFinite()) return;
        const double value = objective_from_residuals(y - candidate * z, kind);
        if (value < best_obj) {
            best_obj = value;
            best = candidate;
        }
    };

    auto refit_rows = [&](const Matrix& r) {
        // Row-wise sets for the separable l1 loss, shared column sets otherwise.
        const bool separable = kind == EstimatorKind::entry_l1;
        const Eigen::Index rows = separable ? r.rows() : 1;
        std::vector<std::vector<double>> magnitudes(static_cast<std::size_t>(rows));
        for (Eigen::Index l = 0; l < rows; ++l) {
            auto& mags = magnitudes[static_cast<std::size_t>(l)];
            mags.resize(static_cast<std::size_t>(r.cols()));
            for (Eigen::Index t = 0; t < r.cols(); ++t) {
                mags[static_cast<std::size_t>(t)] = separable ? std::abs(r(l, t)) : r.col(t).norm();
            }
        }
        double scale = 0.0;
        for (const auto& mags : magnitudes) scale = std::max(scale, *std::max_element(mags.begin(), mags.end()));
        if (scale == 0.0) return;

        std::vector<double> thresholds;
        for (int k = 1; k <= 12; ++k) thresholds.push_back(scale * std::pow(10.0, -k));
        for (double tau : thresholds) {
            Matrix candidate = theta;
            bool usable = true;
            for (Eigen::Index l = 0; l < rows && usable; ++l) {
                const auto& mags = magnitudes[static_cast<std::size_t>(l)];
                std::vector<int> times;
                for (std::size_t t = 0; t < mags.size(); ++t) {
                    if (mags[t] <= tau) times.push_back(static_cast<int>(t));
                }
                if (static_cast<int>(times.size()) < dim) {
                    usable = false;
                    break;
                }
                Matrix zs(dim, static_cast<Eigen::Index>(times.size()));
                Matrix ys(separable ? 1 : y.rows(), static_cast<Eigen::Index>(times.size()));
                for (std::size_t k = 0; k < times.size(); ++k) {
                    zs.col(static_cast<Eigen::Index>(k)) = z.col(times[k]);
                    ys.col(static_cast<Eigen::Index>(k)) =
                        separable ? Vector(y.row(l).segment(times[k], 1)) : Vector(y.col(times[k]));
                }
                const Matrix fit = min_norm_regression(zs, ys);
                if (separable) {
                    candidate.row(l) = fit;
                } else {
                    candidate = fit;
                }
            }
            if (usable) evaluate(candidate);
        }
    };

    refit_rows(y - theta * z);
    if (best) {
        // One fixed-point pass from the improved point.
        const Matrix improved = *best;
        refit_rows(y - improved * z);
    }
    return best;
}

}  // namespace

EstimationResult solve_subgradient(const Trajectory& traj, EstimatorKind kind,
                                   const SolverConfig& config, const Estimate* initial) {
    if (kind == EstimatorKind::least_squares) {
        throw DomainError("solve_subgradient: kind must be group_l2 or entry_l1");
    }
    config.validate();
    const int n = traj.n();
    const int m = traj.m();
    const int horizon = traj.horizon();
    if (horizon < 1) throw DomainError("solve_subgradient: empty trajectory");

    const Matrix z = traj.regressors();
    const Matrix y = traj.successors();

    Matrix theta = Matrix::Zero(n, n + m);
    if (config.warm_start == WarmStart::least_squares) {
        const auto ls = least_squares(traj);
        theta = join_theta(ls.a, ls.b);
    }
    if (initial != nullptr) {
        if (initial->a.rows() != n || initial->a.cols() != n || (m > 0 && (initial->b.rows() != n || initial->b.cols() != m))) {
            throw DomainError("solve_subgradient: initial estimate has wrong dimensions");
        }
        const Matrix start = join_theta(initial->a, m > 0 ? initial->b : Matrix(n, 0));
        if (objective_from_residuals(y - start * z, kind) < objective_from_residuals(y - theta * z, kind)) {
            theta = start;
        }
    }

    double eta0 = config.eta0;
    if (eta0 == 0.0) {
        const double mean_sq = z.squaredNorm() / horizon;
        eta0 = mean_sq > 0.0 ? 1.0 / mean_sq : 1.0;
    }

    EstimationResult result;
    Matrix r = y - theta * z;
    double value = objective_from_residuals(r, kind);
    if (!std::isfinite(value)) throw DomainError("solve_subgradient: non-finite objective at iteration 0");
    Matrix best = theta;
    double best_value = value;

    auto certify = [&]() {
        if (config.polish) {
            if (auto candidate = polish_candidate(z, y, best, kind, best_value)) {
                best = *candidate;
                best_value = objective_from_residuals(y - best * z, kind);
                theta = best;
                r = y - theta * z;
            }
        }
        const auto est = split_theta(best, n, m);
        KktOptions opts;
        opts.tol = config.tol;
        return kkt_certificate(traj, est.a, est.b, kind, opts).verdict == Verdict::optimal;
    };

    int k = 0;
    if (best_value == 0.0) {
        result.certified = true;
        result.stop_reason = "zero objective";
    } else if (config.certify_every > 0 && certify()) {
        result.certified = true;
        result.stop_reason = "certified";
    } else {
        result.stop_reason = "max_iters";
        for (k = 1; k <= config.max_iters; ++k) {
            const Matrix g = residual_subgradient(r, kind);
            const double step = eta0 / std::sqrt(static_cast<double>(k));
            theta.noalias() += (step / horizon) * (g * z.transpose());
            r = y - theta * z;
            value = objective_from_residuals(r, kind);
            if (!std::isfinite(value)) {
                throw DomainError("solve_subgradient: non-finite objective at iteration " + std::to_string(k));
            }
            if (value < best_value) {
                best_value = value;
                best = theta;
            }
            if (config.track && k % config.log_every == 0) result.trace.push_back(best_value);
            if (best_value == 0.0) {
                result.certified = true;
                result.stop_reason = "zero objective";
                break;
            }
            if (config.certify_every > 0 && k % config.certify_every == 0 && certify()) {
                result.certified = true;
                result.stop_reason = "certified";
                break;
            }
        }
        if (k > config.max_iters) k = config.max_iters;
    }

    const auto est = split_theta(best, n, m);
    result.a_hat = est.a;
    result.b_hat = est.b;
    result.residuals = y - best * z;
    result.objective = objective_from_residuals(result.residuals, kind);
    result.iterations_used = k;
    return result;
}

EstimationResult estimate(const Trajectory& traj, EstimatorKind kind, const SolverConfig& config,
                          const Estimate* initial) {
    if (kind != EstimatorKind::least_squares) return solve_subgradient(traj, kind, config, initial);
    const auto ls = least_squares(traj);
    EstimationResult result;
    result.a_hat = ls.a;
    result.b_hat = ls.b;
    result.residuals = residuals(traj, ls.a, ls.b);
    result.objective = objective_from_residuals(result.residuals, kind);
    result.stop_reason = "closed form";
    return result;
}

double estimation_error(const Matrix& a_hat, const Matrix& a_true) {
    if (a_hat.rows() != a_true.rows() || a_hat.cols() != a_true.cols()) {
        throw DomainError("estimation_error: dimension mismatch");
    }
    return (a_hat - a_true).norm();
}

double estimation_error(const Estimate& est, const LtiSystem& truth) {
    if (est.a.rows() != truth.n() || est.a.cols() != truth.n() ||
        (truth.m() > 0 && (est.b.rows() != truth.n() || est.b.cols() != truth.m()))) {
        throw DomainError("estimation_error: dimension mismatch");
    }
    const double da = (est.a - truth.a()).squaredNorm();
    const double db = truth.m() > 0 ? (est.b - truth.b()).squaredNorm() : 0.0;
    return std::sqrt(da + db);
}

}  // namespace robustid
