#include "robustid/lti.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "robustid/error.hpp"

namespace robustid {

namespace {

constexpr double kOverflowGuard = 1e12;

}  // namespace

double spectral_radius(const Matrix& a) {
    if (a.rows() != a.cols()) {
        throw DomainError("spectral_radius: matrix must be square");
    }
    if (a.size() == 0) {
        return 0.0;
    }
    if (!a.allFinite()) {
        throw DomainError("spectral_radius: matrix has non-finite entries");
    }
    Eigen::EigenSolver<Matrix> solver(a, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        throw DomainError("spectral_radius: eigenvalue iteration did not converge");
    }
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

LtiSystem::LtiSystem(Matrix a, Matrix b) : a_(std::move(a)), b_(std::move(b)) {
    if (a_.rows() != a_.cols()) {
        throw DomainError("LtiSystem: A must be square");
    }
    if (b_.rows() != a_.rows()) {
        if (b_.size() == 0) {
            b_.resize(a_.rows(), 0);
        } else {
            throw DomainError("LtiSystem: B must have as many rows as A");
        }
    }
    rho_ = spectral_radius(a_);
}

LtiSystem LtiSystem::autonomous(Matrix a) {
    const auto n = a.rows();
    return LtiSystem(std::move(a), Matrix(n, 0));
}

LtiSystem discretize_euler(const Matrix& ac, const Matrix& bc, double dt) {
    if (!(dt > 0.0)) {
        throw DomainError("discretize_euler: dt must be positive");
    }
    if (ac.rows() != ac.cols()) {
        throw DomainError("discretize_euler: Ac must be square");
    }
    Matrix a = Matrix::Identity(ac.rows(), ac.cols()) + dt * ac;
    Matrix b = bc.size() == 0 ? Matrix(ac.rows(), 0) : Matrix(dt * bc);
    return LtiSystem(std::move(a), std::move(b));
}

AttackSchedule::AttackSchedule(int horizon, std::vector<int> times)
    : horizon_(horizon), times_(std::move(times)) {
    if (horizon_ < 0) {
        throw DomainError("AttackSchedule: negative horizon");
    }
    for (std::size_t k = 0; k < times_.size(); ++k) {
        if (times_[k] < 0 || times_[k] >= horizon_) {
            throw DomainError("AttackSchedule: attack time " + std::to_string(times_[k]) +
                              " outside [0, " + std::to_string(horizon_) + ")");
        }
        if (k > 0 && times_[k] <= times_[k - 1]) {
            throw DomainError("AttackSchedule: attack times must be strictly increasing");
        }
    }
}

bool AttackSchedule::attacked(int i) const {
    return std::binary_search(times_.begin(), times_.end(), i);
}

std::vector<int> AttackSchedule::clean_times() const {
    std::vector<int> clean;
    clean.reserve(static_cast<std::size_t>(horizon_) - times_.size());
    auto it = times_.begin();
    for (int i = 0; i < horizon_; ++i) {
        if (it != times_.end() && *it == i) {
            ++it;
        } else {
            clean.push_back(i);
        }
    }
    return clean;
}

AttackSchedule AttackSchedule::prefix(int horizon) const {
    if (horizon < 0 || horizon > horizon_) {
        throw DomainError("AttackSchedule::prefix: horizon out of range");
    }
    std::vector<int> kept;
    for (int t : times_) {
        if (t < horizon) kept.push_back(t);
    }
    AttackSchedule out(horizon, std::move(kept));
    out.delta_ = delta_;
    return out;
}

AttackSchedule make_delta_spaced(int horizon, int delta, int first_attack) {
    if (delta < 2) {
        throw DomainError("make_delta_spaced: delta must be at least 2");
    }
    if (first_attack < 0 || first_attack >= delta) {
        throw DomainError("make_delta_spaced: first attack must lie in [0, delta)");
    }
    if (horizon < 0) {
        throw DomainError("make_delta_spaced: negative horizon");
    }
    std::vector<int> times;
    for (int t = first_attack; t < horizon; t += delta) {
        times.push_back(t);
    }
    AttackSchedule out(horizon, std::move(times));
    out.delta_ = delta;
    return out;
}

AttackSchedule make_bernoulli(int horizon, double p, std::uint64_t seed) {
    if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("make_bernoulli: p must lie in [0, 1]");
    }
    if (horizon < 0) {
        throw DomainError("make_bernoulli: negative horizon");
    }
    auto engine = make_engine(seed, Stream::schedule);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<int> times;
    for (int t = 0; t < horizon; ++t) {
        // One draw per step on every path.
        const double draw = unif(engine);
        if (draw < p) times.push_back(t);
    }
    return AttackSchedule(horizon, std::move(times));
}

void StealthAttackConfig::validate(int n) const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw DomainError("attack config: sigma must be positive");
    }
    if (!(history_coupling >= 0.0 && history_coupling < 1.0)) {
        throw DomainError("attack config: history_coupling must lie in [0, 1)");
    }
    for (std::size_t k = 0; k < support.size(); ++k) {
        if (support[k] < 0 || support[k] >= n) {
            throw DomainError("attack config: support coordinate " + std::to_string(support[k]) +
                              " out of range");
        }
        if (k > 0 && support[k] <= support[k - 1]) {
            throw DomainError("attack config: support must be strictly increasing");
        }
    }
}

AttackStreams AttackStreams::from_seed(std::uint64_t seed) {
    return {make_engine(seed, Stream::directions), make_engine(seed, Stream::lengths)};
}

namespace {

std::vector<int> active_coordinates(const StealthAttackConfig& cfg, int n) {
    if (!cfg.support.empty()) return cfg.support;
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
    return all;
}

double draw_length(const StealthAttackConfig& cfg, Engine& engine) {
    switch (cfg.length_law) {
        case LengthLaw::gaussian: {
            std::normal_distribution<double> normal(0.0, cfg.sigma);
            return normal(engine);
        }
        case LengthLaw::uniform_bounded: {
            const double half_width = std::sqrt(3.0) * cfg.sigma;
            std::uniform_real_distribution<double> unif(-half_width, half_width);
            return unif(engine);
        }
        case LengthLaw::rademacher_scaled: {
            std::bernoulli_distribution coin(0.5);
            return coin(engine) ? cfg.sigma : -cfg.sigma;
        }
    }
    throw DomainError("attack config: unknown length law");
}

}  // namespace

Vector sample_stealth_attack(const StealthAttackConfig& cfg, int n, AttackHistory& history,
                             AttackStreams& streams) {
    if (n < 1) {
        throw DomainError("sample_stealth_attack: n must be at least 1");
    }
    cfg.validate(n);
    const auto active = active_coordinates(cfg, n);
    const double beta = cfg.history_coupling;
    const double fresh_weight = std::sqrt(1.0 - beta * beta);
    std::normal_distribution<double> normal(0.0, 1.0);

    Vector d = Vector::Zero(n);
    if (cfg.law == DisturbanceLaw::gaussian) {
        do {
            for (int idx : active) d(idx) = cfg.sigma * normal(streams.lengths);
            if (history.previous_vector && history.previous_vector->size() == n) {
                d = fresh_weight * d + beta * *history.previous_vector;
            }
        } while (d.squaredNorm() == 0.0);
        history.previous_vector = d;
        return d;
    }

    Vector f = Vector::Zero(n);
    do {
        for (int idx : active) f(idx) = normal(streams.directions);
    } while (f.squaredNorm() == 0.0);
    f /= f.norm();

    double length = 0.0;
    do {
        length = fresh_weight * draw_length(cfg, streams.lengths);
        if (history.previous_length) length += beta * *history.previous_length;
    } while (length == 0.0);
    history.previous_length = length;
    d = length * f;
    history.previous_vector = d;
    return d;
}

Trajectory Trajectory::prefix(int horizon) const {
    if (horizon < 0 || horizon > this->horizon()) {
        throw DomainError("Trajectory::prefix: horizon out of range");
    }
    Trajectory out;
    out.states = states.leftCols(horizon + 1);
    out.inputs = inputs.leftCols(horizon);
    out.disturbances = disturbances.leftCols(horizon);
    out.schedule = schedule.prefix(horizon);
    out.seed = seed;
    return out;
}

Matrix Trajectory::regressors() const {
    const int t = horizon();
    Matrix z(n() + m(), t);
    z.topRows(n()) = states.leftCols(t);
    if (m() > 0) z.bottomRows(m()) = inputs;
    return z;
}

Matrix Trajectory::successors() const { return states.rightCols(horizon()); }

Trajectory simulate(const LtiSystem& system, const InputPolicy& policy,
                    const AttackSchedule& schedule, const StealthAttackConfig& attack,
                    std::uint64_t seed) {
    const int n = system.n();
    const int m = system.m();
    const int horizon = schedule.horizon();
    if (horizon < 1) {
        throw DomainError("simulate: horizon must be at least 1");
    }
    if (policy.kind != InputKind::zero && m == 0) {
        throw DomainError("simulate: input policy requires m >= 1");
    }
    if (policy.kind == InputKind::feedback &&
        (policy.feedback_gain.rows() != m || policy.feedback_gain.cols() != n)) {
        throw DomainError("simulate: feedback gain must be m x n");
    }
    if (policy.xi < 0.0) {
        throw DomainError("simulate: input scale xi must be nonnegative");
    }
    attack.validate(n);

    Trajectory traj;
    traj.states = Matrix::Zero(n, horizon + 1);
    traj.inputs = Matrix::Zero(m, horizon);
    traj.disturbances = Matrix::Zero(n, horizon);
    traj.schedule = schedule;
    traj.seed = seed;

    auto input_engine = make_engine(seed, Stream::inputs);
    auto streams = AttackStreams::from_seed(seed);
    AttackHistory history;
    std::normal_distribution<double> normal(0.0, 1.0);
    const double input_scale = m > 0 ? policy.xi / std::sqrt(static_cast<double>(m)) : 0.0;

    for (int i = 0; i < horizon; ++i) {
        if (policy.kind != InputKind::zero) {
            Vector u(m);
            for (int j = 0; j < m; ++j) u(j) = input_scale * normal(input_engine);
            if (policy.kind == InputKind::feedback) u += policy.feedback_gain * traj.states.col(i);
            traj.inputs.col(i) = u;
        }
        if (schedule.attacked(i)) {
            traj.disturbances.col(i) = sample_stealth_attack(attack, n, history, streams);
        }
        traj.states.col(i + 1) = system.a() * traj.states.col(i) + traj.disturbances.col(i);
        if (m > 0) traj.states.col(i + 1) += system.b() * traj.inputs.col(i);
        const double size = traj.states.col(i + 1).cwiseAbs().maxCoeff();
        if (!(size <= kOverflowGuard)) {
            throw DomainError("simulate: state diverged at index " + std::to_string(i + 1));
        }
    }
    return traj;
}

void HovorkaParams::validate() const {
    const std::pair<const char*, double> fields[] = {
        {"ka1", ka1}, {"ka2", ka2}, {"ka3", ka3}, {"kb1", kb1},   {"kb2", kb2},
        {"kb3", kb3}, {"t_max_i", t_max_i},       {"v_i", v_i}, {"ke", ke},
    };
    for (const auto& [name, value] : fields) {
        if (!(value > 0.0) || !std::isfinite(value)) {
            throw DomainError(std::string("hovorka parameter '") + name + "' must be positive");
        }
    }
}

HovorkaParams default_hovorka_params() {
    // Per-minute rates; kb_j = S_j * ka_j with the insulin sensitivities of a
    // typical adult, V_I = 0.12 L/kg at 70 kg.
    HovorkaParams p{};
    p.ka1 = 0.006;
    p.ka2 = 0.06;
    p.ka3 = 0.03;
    p.kb1 = 3.072e-5;
    p.kb2 = 4.92e-5;
    p.kb3 = 1.56e-3;
    p.t_max_i = 55.0;
    p.v_i = 8.4;
    p.ke = 0.138;
    return p;
}

HovorkaParams load_hovorka_params(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open parameter file '" + path + "'");
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse parameter file '" + path + "': " + e.what());
    }
    HovorkaParams p{};
    const std::pair<const char*, double*> fields[] = {
        {"ka1", &p.ka1}, {"ka2", &p.ka2}, {"ka3", &p.ka3}, {"kb1", &p.kb1},   {"kb2", &p.kb2},
        {"kb3", &p.kb3}, {"t_max_i", &p.t_max_i},         {"v_i", &p.v_i}, {"ke", &p.ke},
    };
    for (const auto& [name, dest] : fields) {
        if (!j.contains(name) || !j[name].is_number()) {
            throw DomainError(std::string("hovorka parameter '") + name + "' missing in '" + path +
                              "'");
        }
        *dest = j[name].get<double>();
    }
    p.validate();
    return p;
}

ContinuousModel hovorka_continuous(const HovorkaParams& p) {
    p.validate();
    enum { X1, X2, X3, S1, S2, I };
    Matrix ac = Matrix::Zero(6, 6);
    ac(X1, X1) = -p.ka1;
    ac(X1, I) = -p.kb1;
    ac(X2, X2) = -p.ka2;
    ac(X2, I) = -p.kb2;
    ac(X3, X3) = -p.ka3;
    ac(X3, I) = -p.kb3;
    ac(S1, S1) = -1.0 / p.t_max_i;
    ac(S2, S1) = 1.0 / p.t_max_i;
    ac(S2, S2) = -1.0 / p.t_max_i;
    ac(I, S2) = 1.0 / (p.t_max_i * p.v_i);
    ac(I, I) = -p.ke;
    return {ac, Matrix(6, 0), {"x1", "x2", "x3", "S1", "S2", "I"}};
}

ContinuousModel hovorka_continuous(const std::string& params_path) {
    return hovorka_continuous(load_hovorka_params(params_path));
}

LtiSystem random_stable_system(int n, int m, double rho, std::uint64_t seed) {
    if (n < 1 || m < 0) {
        throw DomainError("random_stable_system: invalid dimensions");
    }
    if (!(rho > 0.0)) {
        throw DomainError("random_stable_system: rho must be positive");
    }
    auto engine = make_engine(seed, Stream::system);
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix a(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) a(i, j) = normal(engine);
    const double current = spectral_radius(a);
    if (current == 0.0) {
        throw DomainError("random_stable_system: degenerate draw");
    }
    a *= rho / current;
    Matrix b(n, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) b(i, j) = normal(engine);
    return LtiSystem(std::move(a), std::move(b));
}

int controllability_rank(const LtiSystem& system, double tol) {
    const int n = system.n();
    const int m = system.m();
    if (m == 0) return 0;
    Matrix ctrb(n, n * m);
    Matrix block = system.b();
    for (int k = 0; k < n; ++k) {
        ctrb.middleCols(k * m, m) = block;
        block = system.a() * block;
    }
    Eigen::JacobiSVD<Matrix> svd(ctrb);
    const auto& s = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < s.size(); ++i) {
        if (s(i) > tol * std::max(1.0, s(0))) ++rank;
    }
    return rank;
}

}  // namespace robustid
