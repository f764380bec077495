#include <algorithm>
#include <cmath>

#include "robustid/certificates.hpp"
#include "robustid/error.hpp"

namespace robustid {

double farkas_dual_value(const Matrix& f, const Vector& g, const Vector& z) {
    return z.dot(g) + (f.transpose() * z).cwiseAbs().sum();
}

double group_dual_value(const Matrix& f, const Matrix& g, const Matrix& z) {
    // Row i of F^T Z is (Z^T F_i)^T.
    return (z.array() * g.array()).sum() + (f.transpose() * z).rowwise().norm().sum();
}

namespace {

enum class Bound { box, row_ball };

void project(Matrix& w, Bound bound, double radius) {
    if (bound == Bound::box) {
        w = w.cwiseMax(-radius).cwiseMin(radius);
        return;
    }
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        const double norm = w.row(i).norm();
        if (norm > radius) w.row(i) *= radius / norm;
    }
}

double dual_value(const Matrix& f, const Matrix& g, const Matrix& z, Bound bound) {
    if (bound == Bound::box) {
        return (z.array() * g.array()).sum() + (f.transpose() * z).cwiseAbs().sum();
    }
    return group_dual_value(f, g, z);
}

/**
 * Solves min |F W - G|_F^2 over the constraint set, after replacing (F, G)
 * with (M F, M G) where M whitens the rows of F. The whitened F has unit
 * spectral norm.
 */
Certificate solve_bounded_system(const Matrix& f, const Matrix& g, Bound bound,
                                 const FeasibilityOptions& opts) {
    if (f.rows() != g.rows()) {
        throw DomainError("feasibility: F and g must have the same number of rows");
    }
    if (!(opts.radius > 0.0) || !(opts.tol >= 0.0) || opts.max_iters < 0) {
        throw DomainError("feasibility: invalid options");
    }
    if (!f.allFinite() || !g.allFinite()) {
        throw DomainError("feasibility: non-finite entries");
    }
    const Eigen::Index rows = f.rows();
    const Eigen::Index q = f.cols();
    const Eigen::Index k = g.cols();

    const double col_scale = q > 0 ? f.cwiseAbs().colwise().maxCoeff().maxCoeff() : 0.0;
    const double g_scale = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
    const double threshold = opts.tol * std::max({1.0, col_scale * opts.radius, g_scale});

    Certificate cert;
    cert.w = Matrix::Zero(q, k);
    if (g_scale == 0.0) {
        cert.verdict = Verdict::optimal;
        return cert;
    }

    auto finish_infeasible = [&](const Matrix& direction, double residual) {
        const double norm = direction.norm();
        if (norm > 0.0) {
            Matrix zdir = direction / norm;
            const double value = dual_value(f, g, zdir, bound);
            // Guard against rounding on systems that sit on the feasibility boundary.
            const double noise = 1e-12 * (g.norm() + f.colwise().norm().sum());
            if (value < -noise) {
                cert.verdict = Verdict::not_optimal;
                cert.margin = value;
                cert.z = std::move(zdir);
                cert.residual = residual;
                return;
            }
        }
        cert.verdict = Verdict::inconclusive;
        cert.margin = residual;
        cert.residual = residual;
    };

    // Row whitening from the eigendecomposition of F F^T.
    Eigen::SelfAdjointEigenSolver<Matrix> eig(f * f.transpose());
    const Vector& s = eig.eigenvalues();
    const double s_max = s.size() > 0 ? s.maxCoeff() : 0.0;
    std::vector<Eigen::Index> range;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > 1e-13 * s_max && s(i) > 0.0) range.push_back(i);
    }
    Matrix basis(rows, static_cast<Eigen::Index>(range.size()));
    Vector inv_sqrt(static_cast<Eigen::Index>(range.size()));
    for (std::size_t c = 0; c < range.size(); ++c) {
        basis.col(static_cast<Eigen::Index>(c)) = eig.eigenvectors().col(range[c]);
        inv_sqrt(static_cast<Eigen::Index>(c)) = 1.0 / std::sqrt(s(range[c]));
    }
    // Part of G outside range(F) cannot be matched by any W.
    const Matrix g_perp = g - basis * (basis.transpose() * g);
    if (g_perp.cwiseAbs().maxCoeff() > threshold) {
        finish_infeasible(-g_perp, g_perp.cwiseAbs().maxCoeff());
        return cert;
    }

    const Matrix whiten = inv_sqrt.asDiagonal() * basis.transpose();
    const Matrix fw = whiten * f;
    const Matrix gw = whiten * g;

    Matrix w = fw.transpose() * gw;  // minimum-norm solution of the whitened system
    project(w, bound, opts.radius);

    double residual = (f * w - g).cwiseAbs().maxCoeff();
    int it = 0;
    for (; it < opts.max_iters && residual > threshold; ++it) {
        const Matrix grad = fw.transpose() * (fw * w - gw);
        Matrix next = w - grad;
        project(next, bound, opts.radius);
        const double move = (next - w).norm();
        w = std::move(next);
        if ((it + 1) % 8 == 0 || move == 0.0) {
            residual = (f * w - g).cwiseAbs().maxCoeff();
        }
        if (move <= 1e-15 * (1.0 + w.norm())) break;
    }
    residual = (f * w - g).cwiseAbs().maxCoeff();
    cert.iterations = it;
    cert.residual = residual;

    if (residual <= threshold) {
        cert.verdict = Verdict::optimal;
        cert.margin = residual;
        cert.w = std::move(w);
        return cert;
    }
    // The whitened residual maps to a dual direction through M^T.
    finish_infeasible(whiten.transpose() * (fw * w - gw), residual);
    if (cert.verdict == Verdict::inconclusive) cert.w = std::move(w);
    return cert;
}

}  // namespace

Certificate farkas_feasible(const Matrix& f, const Vector& g, const FeasibilityOptions& opts) {
    return solve_bounded_system(f, g, Bound::box, opts);
}

Certificate farkas_feasible(const Matrix& f, const Vector& g, double tol) {
    FeasibilityOptions opts;
    opts.tol = tol;
    return farkas_feasible(f, g, opts);
}

Certificate group_feasible(const Matrix& f, const Matrix& g, const FeasibilityOptions& opts) {
    return solve_bounded_system(f, g, Bound::row_ball, opts);
}

}  // namespace robustid
