#include "robustid/certificates.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "robustid/error.hpp"

namespace robustid {

std::string to_string(Verdict verdict) {
    switch (verdict) {
        case Verdict::optimal: return "optimal";
        case Verdict::not_optimal: return "not-optimal";
        case Verdict::inconclusive: return "inconclusive";
    }
    return "?";
}

namespace {

double median(std::vector<double> values) {
    if (values.empty()) return 0.0;
    const auto mid = values.begin() + static_cast<std::ptrdiff_t>(values.size() / 2);
    std::nth_element(values.begin(), mid, values.end());
    if (values.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(values.begin(), mid);
    return 0.5 * (lower + upper);
}

Matrix select_columns(const Matrix& z, const std::vector<int>& times) {
    Matrix out(z.rows(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t k = 0; k < times.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = z.col(times[k]);
    return out;
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Worst margin across certificates: the most negative dual value if any
/// system is violated, otherwise the largest residual.
double combined_margin(const std::vector<Certificate>& certs) {
    double worst_dual = 0.0;
    double worst_residual = 0.0;
    bool violated = false;
    for (const auto& c : certs) {
        if (c.verdict == Verdict::not_optimal) {
            worst_dual = violated ? std::min(worst_dual, c.margin) : c.margin;
            violated = true;
        } else {
            worst_residual = std::max(worst_residual, c.margin);
        }
    }
    return violated ? worst_dual : worst_residual;
}

Verdict combined_verdict(const std::vector<Certificate>& certs) {
    bool all_optimal = true;
    for (const auto& c : certs) {
        if (c.verdict == Verdict::not_optimal) return Verdict::not_optimal;
        if (c.verdict != Verdict::optimal) all_optimal = false;
    }
    return all_optimal ? Verdict::optimal : Verdict::inconclusive;
}

}  // namespace

KktReport kkt_certificate(const Trajectory& traj, const Matrix& a_hat, const Matrix& b_hat,
                          EstimatorKind kind, const KktOptions& opts) {
    const int n = traj.n();
    const int horizon = traj.horizon();
    if (horizon < 1) throw DomainError("kkt_certificate: empty trajectory");
    const Matrix d = residuals(traj, a_hat, b_hat);
    const Matrix z = traj.regressors();

    KktReport report;
    std::vector<double> norms(static_cast<std::size_t>(horizon));
    for (int t = 0; t < horizon; ++t) norms[static_cast<std::size_t>(t)] = d.col(t).norm();
    const double tol = opts.support_tol >= 0.0 ? opts.support_tol : 1e-6 * (1.0 + median(norms));
    report.support_info.tol = tol;

    auto ambiguous = [&](double v) { return v > 0.1 * tol && v < 10.0 * tol; };

    FeasibilityOptions feas;
    feas.tol = opts.tol;
    feas.max_iters = opts.max_iters;

    if (kind == EstimatorKind::least_squares) {
        // Smooth loss: stationarity is the normal equation D Z^T = 0.
        const Matrix grad = d * z.transpose();
        const double scale = std::max(1.0, (d.cwiseAbs().colwise().sum().maxCoeff()) *
                                               z.cwiseAbs().maxCoeff() * horizon);
        Certificate cert;
        cert.residual = grad.cwiseAbs().maxCoeff();
        cert.margin = cert.residual;
        cert.verdict = cert.residual <= opts.tol * scale ? Verdict::optimal : Verdict::not_optimal;
        if (cert.verdict == Verdict::not_optimal) cert.z = grad / grad.norm();
        report.coordinates.push_back(std::move(cert));
        report.verdict = report.coordinates.front().verdict;
        report.margin = report.coordinates.front().margin;
        for (int t = 0; t < horizon; ++t) {
            if (norms[static_cast<std::size_t>(t)] > tol) report.support.push_back(t);
        }
        return report;
    }

    if (kind == EstimatorKind::entry_l1) {
        std::vector<bool> in_union(static_cast<std::size_t>(horizon), false);
        for (int l = 0; l < n; ++l) {
            std::vector<int> clean;
            Vector g = Vector::Zero(z.rows());
            for (int t = 0; t < horizon; ++t) {
                const double v = std::abs(d(l, t));
                if (ambiguous(v)) report.support_info.ambiguous = true;
                if (v > tol) {
                    g += sign(d(l, t)) * z.col(t);
                    in_union[static_cast<std::size_t>(t)] = true;
                } else {
                    clean.push_back(t);
                }
            }
            report.coordinates.push_back(farkas_feasible(select_columns(z, clean), g, feas));
        }
        for (int t = 0; t < horizon; ++t) {
            if (in_union[static_cast<std::size_t>(t)]) report.support.push_back(t);
        }
        report.verdict = combined_verdict(report.coordinates);
        report.margin = combined_margin(report.coordinates);
        return report;
    }

    // group_l2: one shared support; coordinate boxes scaled by 1/sqrt(n) first.
    std::vector<int> clean;
    Matrix g = Matrix::Zero(z.rows(), n);
    for (int t = 0; t < horizon; ++t) {
        const double v = norms[static_cast<std::size_t>(t)];
        if (ambiguous(v)) report.support_info.ambiguous = true;
        if (v > tol) {
            g += z.col(t) * (d.col(t) / v).transpose();
            report.support.push_back(t);
        } else {
            clean.push_back(t);
        }
    }
    const Matrix f = select_columns(z, clean);
    const Matrix f_scaled = f / std::sqrt(static_cast<double>(n));
    bool boxes_ok = true;
    for (int l = 0; l < n; ++l) {
        report.coordinates.push_back(farkas_feasible(f_scaled, g.col(l), feas));
        if (report.coordinates.back().verdict != Verdict::optimal) boxes_ok = false;
    }
    if (boxes_ok) {
        report.verdict = Verdict::optimal;
        report.margin = combined_margin(report.coordinates);
        return report;
    }
    report.group = group_feasible(f, g, feas);
    report.verdict = report.group->verdict;
    report.margin = report.group->margin;
    return report;
}

Lemma2Result lemma2_condition(const Trajectory& traj) {
    if (traj.n() != 1) throw DomainError("lemma2_condition: requires n = 1");
    Lemma2Result out;
    for (int i = 0; i < traj.horizon(); ++i) {
        const double v = std::abs(traj.states(0, i));
        if (traj.schedule.attacked(i)) {
            out.rhs += v;
        } else {
            out.lhs += v;
        }
    }
    out.holds = out.lhs > out.rhs;
    return out;
}

std::vector<SpanCheck> span_condition(const Trajectory& traj, const Matrix& a_true, int delta,
                                      double tol) {
    const int n = traj.n();
    if (a_true.rows() != n || a_true.cols() != n) throw DomainError("span_condition: A must be n x n");
    if (delta < 2) throw DomainError("span_condition: spacing must be at least 2");
    const auto& times = traj.schedule.times();
    std::vector<SpanCheck> out;
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        SpanCheck check;
        check.attack_time = times[k];
        check.next_attack_time = times[k + 1];
        const Vector di = traj.disturbances.col(times[k]);
        const Vector dj = traj.disturbances.col(times[k + 1]);
        if (di.norm() == 0.0) {
            check.degenerate = true;
            check.relative_residual = dj.norm() > 0.0 ? 1.0 : 0.0;
            out.push_back(check);
            continue;
        }
        Matrix basis(n, delta - 1);
        Vector v = di;
        for (int c = 0; c < delta - 1; ++c) {
            basis.col(c) = v;
            v = a_true * v;
        }
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(basis);
        cod.setThreshold(1e-12);
        check.basis_rank = static_cast<int>(cod.rank());
        const Vector coeff = cod.solve(dj);
        const double denom = dj.norm();
        const double resid = (basis * coeff - dj).norm();
        check.relative_residual = denom > 0.0 ? resid / denom : resid;
        check.holds = check.relative_residual <= tol;
        out.push_back(check);
    }
    return out;
}

std::vector<std::complex<double>> complete_homogeneous(const std::vector<std::complex<double>>& eigs,
                                                       int degree) {
    if (degree < 0) throw DomainError("complete_homogeneous: negative degree");
    // h^{(j)}_t = h^{(j-1)}_t + lambda_j h^{(j)}_{t-1}, starting from h^{(0)} = (1, 0, 0, ...).
    std::vector<std::complex<double>> h(static_cast<std::size_t>(degree) + 1, 0.0);
    h[0] = 1.0;
    for (const auto& lambda : eigs) {
        for (int t = 1; t <= degree; ++t) {
            h[static_cast<std::size_t>(t)] += lambda * h[static_cast<std::size_t>(t - 1)];
        }
    }
    return h;
}

EigenConditionResult eigen_condition(const std::vector<std::complex<double>>& eigs, int delta) {
    const int n = static_cast<int>(eigs.size());
    if (n < 1) throw DomainError("eigen_condition: empty eigenvalue list");
    if (delta < n + 1) throw DomainError("eigen_condition: requires spacing >= n + 1");
    for (const auto& e : eigs) {
        if (!std::isfinite(e.real()) || !std::isfinite(e.imag())) {
            throw DomainError("eigen_condition: non-finite eigenvalue");
        }
    }
    const int k = delta - n;
    double s = 1.0;
    for (const auto& e : eigs) s = std::max(s, std::abs(e));
    std::vector<std::complex<double>> scaled(eigs.begin(), eigs.end());
    for (auto& e : scaled) e /= s;
    const auto h = complete_homogeneous(scaled, k);

    // With h_t(lambda) = s^t h_t(lambda / s), divide both sides by s^k.
    const double top = std::abs(h[static_cast<std::size_t>(k)]);
    double rest = 0.0;
    const double log_s = std::log(s);
    for (int t = 0; t < k; ++t) {
        rest += std::abs(h[static_cast<std::size_t>(t)]) * std::exp(static_cast<double>(t - k) * log_s);
    }

    EigenConditionResult out;
    out.log_lhs = (top > 0.0 ? std::log(top) : -std::numeric_limits<double>::infinity()) + k * log_s;
    out.log_rhs = std::log(rest) + k * log_s;
    out.lhs = std::exp(out.log_lhs);
    out.rhs = std::exp(out.log_rhs);
    out.boundary = std::abs(top - rest) <= 1e-14 * std::max(top, rest);
    out.holds = top <= rest || out.boundary;
    return out;
}

double cnk_polynomial(int n, int k, double x) {
    if (n < 1 || k < 1) throw DomainError("cnk: n and k must be positive");
    double binom = 1.0;  // C(n + i - 1, i) at i = 0
    double power = 1.0;
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        sum += binom * power;
        binom = binom * static_cast<double>(n + i) / static_cast<double>(i + 1);
        power *= x;
    }
    return binom * power - sum;
}

double cnk_bound(int n, int k, double tol) {
    if (n < 1 || k < 1) throw DomainError("cnk: n and k must be positive");
    if (!(tol > 0.0)) throw DomainError("cnk: tol must be positive");
    double lo = 0.0;
    double hi = 4.0;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        const double value = cnk_polynomial(n, k, mid);
        if (value == 0.0) return mid;
        if (value < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

}  // namespace robustid
