#include <algorithm>
#include <cmath>
#include <numbers>

#include "robustid/certificates.hpp"
#include "robustid/error.hpp"

namespace robustid {

namespace {

constexpr double kPi = std::numbers::pi;

/// Number of circle points whose half-spacing is at most eps.
long long circle_count(double eps) { return std::max(1LL, static_cast<long long>(std::ceil(kPi / eps))); }

/// Sub-net radius on the (dim-1)-sphere at polar angle phi.
double ring_radius(double eps, double phi) {
    const double s = std::sin(phi);
    return s > 0.0 ? 0.5 * eps / s : 4.0;
}

long long polar_count(double eps) { return std::max(1LL, static_cast<long long>(std::ceil(kPi / eps))); }

// Recursive lat-long construction: a point is (cos phi, sin phi * v) with v on
// the sphere one dimension down. Angular spacing eps in phi plus a sub-net of
// radius eps / (2 sin phi) keeps every sphere point within eps of the net.
void visit_net(int dim, double eps, double scale, int offset,
               const std::function<void(const Vector&)>& visit, Vector& point) {
    if (dim == 1) {
        point(offset) = scale;
        visit(point);
        point(offset) = -scale;
        visit(point);
        return;
    }
    if (eps >= 2.0) {
        point.segment(offset, dim).setZero();
        point(offset) = scale;
        visit(point);
        return;
    }
    if (dim == 2) {
        const long long count = circle_count(eps);
        for (long long j = 0; j < count; ++j) {
            const double angle = 2.0 * kPi * static_cast<double>(j) / static_cast<double>(count);
            point(offset) = scale * std::cos(angle);
            point(offset + 1) = scale * std::sin(angle);
            visit(point);
        }
        return;
    }
    const long long steps = polar_count(eps);
    for (long long j = 0; j <= steps; ++j) {
        const double phi = kPi * static_cast<double>(j) / static_cast<double>(steps);
        point(offset) = scale * std::cos(phi);
        const double radius = ring_radius(eps, phi);
        if (radius >= 2.0 || j == 0 || j == steps) {
            point.segment(offset + 1, dim - 1).setZero();
            point(offset + 1) = scale * std::sin(phi);
            visit(point);
            continue;
        }
        visit_net(dim - 1, radius, scale * std::sin(phi), offset + 1, visit, point);
    }
}

double count_net(int dim, double eps) {
    if (dim == 1) return 2.0;
    if (eps >= 2.0) return 1.0;
    if (dim == 2) return static_cast<double>(circle_count(eps));
    const long long steps = polar_count(eps);
    double total = 0.0;
    for (long long j = 0; j <= steps; ++j) {
        const double phi = kPi * static_cast<double>(j) / static_cast<double>(steps);
        const double radius = ring_radius(eps, phi);
        if (radius >= 2.0 || j == 0 || j == steps) {
            total += 1.0;
        } else {
            total += count_net(dim - 1, radius);
        }
    }
    return total;
}

double radical_inverse(std::uint64_t index, std::uint64_t base) {
    double result = 0.0;
    double f = 1.0 / static_cast<double>(base);
    while (index > 0) {
        result += f * static_cast<double>(index % base);
        index /= base;
        f /= static_cast<double>(base);
    }
    return result;
}

/// Halton point mapped through hyperspherical angles.
Vector halton_sphere_point(int dim, std::uint64_t index) {
    static constexpr std::uint64_t primes[] = {2, 3, 5, 7, 11, 13};
    Vector z(dim);
    double scale = 1.0;
    for (int k = 0; k < dim - 1; ++k) {
        const double u = radical_inverse(index, primes[k]);
        const double angle = (k == dim - 2) ? 2.0 * kPi * u : std::acos(1.0 - 2.0 * u);
        if (k == dim - 2) {
            z(k) = scale * std::cos(angle);
            z(k + 1) = scale * std::sin(angle);
        } else {
            z(k) = scale * std::cos(angle);
            scale *= std::sin(angle);
        }
    }
    if (dim == 1) z(0) = radical_inverse(index, 2) < 0.5 ? 1.0 : -1.0;
    return z;
}

double fz(const Matrix& f, const Vector& g, const Vector& z) {
    return z.dot(g) + (f.transpose() * z).cwiseAbs().sum();
}

}  // namespace

void for_each_sphere_net_point(int dim, double epsilon, const std::function<void(const Vector&)>& visit) {
    if (dim < 1) throw DomainError("sphere net: dimension must be positive");
    if (!(epsilon > 0.0)) throw DomainError("sphere net: epsilon must be positive");
    Vector point = Vector::Zero(dim);
    visit_net(dim, epsilon, 1.0, 0, visit, point);
}

std::size_t sphere_net_size(int dim, double epsilon) {
    if (dim < 1) throw DomainError("sphere net: dimension must be positive");
    if (!(epsilon > 0.0)) throw DomainError("sphere net: epsilon must be positive");
    const double count = count_net(dim, epsilon);
    if (count > 1e18) throw DomainError("sphere net: size overflows");
    return static_cast<std::size_t>(count);
}

DualMinResult dual_min_fz(const Matrix& f, const Vector& g, const DualMinOptions& opts) {
    const int dim = static_cast<int>(g.size());
    if (f.rows() != g.size()) throw DomainError("dual_min_fz: F and g row counts differ");
    if (dim < 1) throw DomainError("dual_min_fz: empty system");
    if (dim > 6) throw DomainError("dual_min_fz: dimension above 6; use farkas_feasible instead");
    if (!(opts.epsilon > 0.0)) throw DomainError("dual_min_fz: epsilon must be positive");
    const std::size_t size = sphere_net_size(dim, opts.epsilon);
    const std::size_t total = size + static_cast<std::size_t>(std::max(0, opts.quasi_random_points)) +
                              static_cast<std::size_t>(std::max(0, opts.refinement_starts)) *
                                  static_cast<std::size_t>(std::max(0, opts.refinement_steps));
    if (total > opts.budget) {
        throw DomainError("dual_min_fz: net of " + std::to_string(size) +
                          " points exceeds the evaluation budget; use farkas_feasible instead");
    }

    DualMinResult out;
    out.lipschitz = g.norm() + f.colwise().norm().sum();

    // Keep the best few net points as local descent seeds.
    const std::size_t keep = static_cast<std::size_t>(std::max(1, opts.refinement_starts));
    std::vector<std::pair<double, Vector>> seeds;
    auto consider = [&](const Vector& z) {
        const double value = fz(f, g, z);
        ++out.evaluations;
        if (out.argmin.size() == 0 || value < out.min_value) {
            out.min_value = value;
            out.argmin = z;
        }
        if (seeds.size() < keep || value < seeds.back().first) {
            auto pos = std::upper_bound(seeds.begin(), seeds.end(), value,
                                        [](double v, const auto& s) { return v < s.first; });
            seeds.insert(pos, {value, z});
            if (seeds.size() > keep) seeds.pop_back();
        }
    };

    for_each_sphere_net_point(dim, opts.epsilon, consider);
    const double net_min = out.min_value;
    for (int k = 0; k < opts.quasi_random_points; ++k) {
        consider(halton_sphere_point(dim, static_cast<std::uint64_t>(k) + 1));
    }

    // Local refinement: jump to the minimizer of the linear piece selected by
    // the current sign pattern, otherwise take a projected subgradient step.
    for (int s = 0; s < opts.refinement_starts && s < static_cast<int>(seeds.size()); ++s) {
        Vector z = seeds[static_cast<std::size_t>(s)].second;
        double value = seeds[static_cast<std::size_t>(s)].first;
        for (int step = 1; step <= opts.refinement_steps; ++step) {
            const Vector signs = (f.transpose() * z).unaryExpr(
                [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
            const Vector grad = g + f * signs;
            Vector candidate = -grad;
            const double cn = candidate.norm();
            bool moved = false;
            if (cn > 0.0) {
                candidate /= cn;
                const double cv = fz(f, g, candidate);
                ++out.evaluations;
                if (cv < value - 1e-15 * (1.0 + std::abs(value))) {
                    z = candidate;
                    value = cv;
                    moved = true;
                }
            }
            if (!moved) {
                const Vector tangent = grad - grad.dot(z) * z;
                const double tn = tangent.norm();
                if (tn == 0.0) break;
                Vector next = z - (0.5 * opts.epsilon / std::sqrt(static_cast<double>(step))) * tangent / tn;
                next.normalize();
                const double nv = fz(f, g, next);
                ++out.evaluations;
                z = next;
                value = nv;
            }
            if (value < out.min_value) {
                out.min_value = value;
                out.argmin = z;
            }
        }
    }

    if (g.cwiseAbs().maxCoeff() == 0.0) {
        // f(z) = |F^T z|_1 is nonnegative everywhere.
        out.certified_nonnegative = true;
    } else {
        out.certified_nonnegative = net_min >= opts.theta && out.lipschitz * opts.epsilon < opts.theta &&
                                    out.min_value >= 0.0;
    }
    return out;
}

}  // namespace robustid
