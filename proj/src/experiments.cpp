#include "robustid/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <limits>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "robustid/error.hpp"
#include "robustid/io.hpp"

namespace robustid {

std::vector<int> ExperimentSpec::default_checkpoints() {
    std::vector<int> out;
    for (int k = 0; k < 16; ++k) {
        const int t = static_cast<int>(std::lround(50.0 * std::pow(40.0, k / 15.0)));
        if (out.empty() || t > out.back()) out.push_back(t);
    }
    return out;
}

void ExperimentSpec::validate() const {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("experiment: p must lie in [0, 1]");
    if (!(attack_variance > 0.0) || !std::isfinite(attack_variance)) {
        throw DomainError("experiment: attack_variance must be positive");
    }
    if (checkpoints.empty()) throw DomainError("experiment: no checkpoints");
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        if (checkpoints[k] < 1) throw DomainError("experiment: checkpoints must be positive");
        if (k > 0 && checkpoints[k] <= checkpoints[k - 1]) {
            throw DomainError("experiment: checkpoints must be strictly increasing");
        }
    }
    if (trials < 1) throw DomainError("experiment: trials must be positive");
    if (!(dt > 0.0)) throw DomainError("experiment: dt must be positive");
    if (!(input_xi >= 0.0)) throw DomainError("experiment: input_xi must be nonnegative");
    std::set<EstimatorKind> seen;
    for (auto kind : estimators) {
        if (!seen.insert(kind).second) throw DomainError("experiment: duplicate estimator");
    }
    if ((source == SystemSource::hovorka_file || source == SystemSource::system_file) && path.empty()) {
        throw DomainError("experiment: system source needs a path");
    }
    solver.validate();
}

LtiSystem ExperimentSpec::build_system() const {
    switch (source) {
        case SystemSource::hovorka_default: {
            const auto model = hovorka_continuous(default_hovorka_params());
            return discretize_euler(model.ac, model.bc, dt);
        }
        case SystemSource::hovorka_file: {
            const auto model = hovorka_continuous(path);
            return discretize_euler(model.ac, model.bc, dt);
        }
        case SystemSource::system_file: return system_from_json(read_json_file(path));
        case SystemSource::random_stable: return random_stable_system(random_n, random_m, random_rho, random_seed);
    }
    throw DomainError("experiment: unknown system source");
}

StealthAttackConfig ExperimentSpec::attack_config() const {
    StealthAttackConfig cfg;
    cfg.law = law;
    cfg.sigma = std::sqrt(attack_variance);
    cfg.length_law = length_law;
    cfg.history_coupling = history_coupling;
    cfg.support = sparse_support;
    return cfg;
}

InputPolicy ExperimentSpec::input_policy(const LtiSystem& system) const {
    return system.m() > 0 ? InputPolicy::iid_gaussian(input_xi) : InputPolicy::zero();
}

namespace {

const char* source_name(SystemSource s) {
    switch (s) {
        case SystemSource::hovorka_default: return "hovorka-default";
        case SystemSource::hovorka_file: return "hovorka-file";
        case SystemSource::system_file: return "system-file";
        case SystemSource::random_stable: return "random-stable";
    }
    return "?";
}

SystemSource source_from_name(const std::string& s) {
    if (s == "hovorka-default") return SystemSource::hovorka_default;
    if (s == "hovorka-file") return SystemSource::hovorka_file;
    if (s == "system-file") return SystemSource::system_file;
    if (s == "random-stable") return SystemSource::random_stable;
    throw DomainError("experiment: unknown system_source '" + s + "'");
}

const char* law_name(DisturbanceLaw law) { return law == DisturbanceLaw::gaussian ? "gaussian" : "stealth"; }

const char* length_law_name(LengthLaw law) {
    switch (law) {
        case LengthLaw::gaussian: return "gaussian";
        case LengthLaw::uniform_bounded: return "uniform-bounded";
        case LengthLaw::rademacher_scaled: return "rademacher-scaled";
    }
    return "?";
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw DomainError(std::string("experiment: field '") + key + "' has the wrong type");
    }
}

void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known, const char* where) {
    for (const auto& item : j.items()) {
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return item.key() == k; })) {
            throw DomainError(std::string(where) + ": unknown field '" + item.key() + "'");
        }
    }
}

}  // namespace

DisturbanceLaw disturbance_law_from_string(const std::string& s) {
    if (s == "gaussian") return DisturbanceLaw::gaussian;
    if (s == "stealth") return DisturbanceLaw::stealth;
    throw DomainError("unknown attack law '" + s + "' (expected gaussian or stealth)");
}

LengthLaw length_law_from_string(const std::string& s) {
    if (s == "gaussian") return LengthLaw::gaussian;
    if (s == "uniform-bounded") return LengthLaw::uniform_bounded;
    if (s == "rademacher-scaled") return LengthLaw::rademacher_scaled;
    throw DomainError("unknown length law '" + s + "'");
}

nlohmann::json solver_to_json(const SolverConfig& c) {
    return {{"max_iters", c.max_iters},
            {"eta0", c.eta0},
            {"tol", c.tol},
            {"warm_start", c.warm_start == WarmStart::zero ? "zero" : "ls"},
            {"track", c.track},
            {"log_every", c.log_every},
            {"certify_every", c.certify_every},
            {"polish", c.polish}};
}

SolverConfig solver_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DomainError("solver config must be a JSON object");
    reject_unknown(j, {"max_iters", "eta0", "tol", "warm_start", "track", "log_every", "certify_every", "polish"},
                   "solver config");
    SolverConfig c;
    c.max_iters = get_field(j, "max_iters", c.max_iters);
    c.eta0 = get_field(j, "eta0", c.eta0);
    c.tol = get_field(j, "tol", c.tol);
    const auto warm = get_field<std::string>(j, "warm_start", "ls");
    if (warm == "zero") {
        c.warm_start = WarmStart::zero;
    } else if (warm == "ls") {
        c.warm_start = WarmStart::least_squares;
    } else {
        throw DomainError("solver config: warm_start must be 'zero' or 'ls'");
    }
    c.track = get_field(j, "track", c.track);
    c.log_every = get_field(j, "log_every", c.log_every);
    c.certify_every = get_field(j, "certify_every", c.certify_every);
    c.polish = get_field(j, "polish", c.polish);
    c.validate();
    return c;
}

nlohmann::json spec_to_json(const ExperimentSpec& s) {
    nlohmann::json j;
    j["system_source"] = source_name(s.source);
    j["path"] = s.path;
    j["random"] = {{"n", s.random_n}, {"m", s.random_m}, {"rho", s.random_rho}, {"seed", s.random_seed}};
    j["dt"] = s.dt;
    j["input_xi"] = s.input_xi;
    j["p"] = s.p;
    j["attack_variance"] = s.attack_variance;
    j["law"] = law_name(s.law);
    j["length_law"] = length_law_name(s.length_law);
    j["history_coupling"] = s.history_coupling;
    j["sparse_support"] = s.sparse_support;
    j["checkpoints"] = s.checkpoints;
    nlohmann::json est = nlohmann::json::array();
    for (auto k : s.estimators) est.push_back(to_string(k));
    j["estimators"] = est;
    j["trials"] = s.trials;
    j["seed"] = s.seed;
    j["solver"] = solver_to_json(s.solver);
    return j;
}

ExperimentSpec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw DomainError("experiment spec must be a JSON object");
    reject_unknown(j,
                   {"system_source", "path", "random", "dt", "input_xi", "p", "attack_variance", "law",
                    "length_law", "history_coupling", "sparse_support", "checkpoints", "estimators", "trials",
                    "seed", "solver"},
                   "experiment spec");
    ExperimentSpec s;
    s.source = source_from_name(get_field<std::string>(j, "system_source", source_name(s.source)));
    s.path = get_field<std::string>(j, "path", "");
    if (j.contains("random")) {
        const auto& r = j.at("random");
        reject_unknown(r, {"n", "m", "rho", "seed"}, "experiment spec random");
        s.random_n = get_field(r, "n", s.random_n);
        s.random_m = get_field(r, "m", s.random_m);
        s.random_rho = get_field(r, "rho", s.random_rho);
        s.random_seed = get_field(r, "seed", s.random_seed);
    }
    s.dt = get_field(j, "dt", s.dt);
    s.input_xi = get_field(j, "input_xi", s.input_xi);
    s.p = get_field(j, "p", s.p);
    s.attack_variance = get_field(j, "attack_variance", s.attack_variance);
    s.law = disturbance_law_from_string(get_field<std::string>(j, "law", law_name(s.law)));
    s.length_law = length_law_from_string(get_field<std::string>(j, "length_law", length_law_name(s.length_law)));
    s.history_coupling = get_field(j, "history_coupling", s.history_coupling);
    s.sparse_support = get_field(j, "sparse_support", s.sparse_support);
    s.checkpoints = get_field(j, "checkpoints", s.checkpoints);
    if (j.contains("estimators")) {
        s.estimators.clear();
        for (const auto& name : j.at("estimators")) {
            if (!name.is_string()) throw DomainError("experiment: estimators must be strings");
            s.estimators.push_back(estimator_kind_from_string(name.get<std::string>()));
        }
    }
    s.trials = get_field(j, "trials", s.trials);
    s.seed = get_field(j, "seed", s.seed);
    if (j.contains("solver")) s.solver = solver_from_json(j.at("solver"));
    s.validate();
    return s;
}

const EstimatorSeries& ExperimentResult::get(EstimatorKind kind) const {
    for (const auto& s : series) {
        if (s.kind == kind) return s;
    }
    throw DomainError("experiment result has no series for estimator '" + to_string(kind) + "'");
}

std::vector<double> ExperimentResult::final_errors(EstimatorKind kind) const {
    const auto& s = get(kind);
    std::vector<double> out;
    for (const auto& row : s.errors) out.push_back(row.back());
    return out;
}

Trajectory experiment_trajectory(const ExperimentSpec& spec, const LtiSystem& system, int trial) {
    const std::uint64_t trial_seed = derive_seed(spec.seed, Stream::trial, static_cast<std::uint64_t>(trial));
    const int horizon = spec.checkpoints.back();
    const auto schedule = make_bernoulli(horizon, spec.p, trial_seed);
    return simulate(system, spec.input_policy(system), schedule, spec.attack_config(), trial_seed);
}

ExperimentResult run_experiment(const ExperimentSpec& spec, int threads) {
    spec.validate();
    const LtiSystem system = spec.build_system();
    spec.attack_config().validate(system.n());

    ExperimentResult result;
    result.spec = spec;
    result.a_true = system.a();
    const std::size_t cells = spec.checkpoints.size();
    const std::size_t kinds = spec.estimators.size();
    for (auto kind : spec.estimators) {
        EstimatorSeries s;
        s.kind = kind;
        s.errors.assign(static_cast<std::size_t>(spec.trials), std::vector<double>(cells, 0.0));
        result.series.push_back(std::move(s));
    }

    auto run_trial = [&](int trial) {
        const Trajectory full = experiment_trajectory(spec, system, trial);
        for (std::size_t e = 0; e < kinds; ++e) {
            const EstimatorKind kind = spec.estimators[e];
            std::optional<Estimate> previous;
            for (std::size_t k = 0; k < cells; ++k) {
                double error = std::numeric_limits<double>::quiet_NaN();
                try {
                    const Trajectory traj = full.prefix(spec.checkpoints[k]);
                    const auto res = estimate(traj, kind, spec.solver, previous ? &*previous : nullptr);
                    error = estimation_error(res.a_hat, system.a());
                    previous = res.estimate();
                } catch (const DomainError&) {
                    // Recorded as NaN and counted as a failed cell.
                }
                result.series[e].errors[static_cast<std::size_t>(trial)][k] = error;
            }
        }
    };

    const int workers = std::max(1, std::min(threads, spec.trials));
    if (workers == 1) {
        for (int j = 0; j < spec.trials; ++j) run_trial(j);
    } else {
        std::atomic<int> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                while (true) {
                    const int j = next.fetch_add(1);
                    if (j >= spec.trials) return;
                    try {
                        run_trial(j);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next.store(spec.trials);
                        return;
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (auto& s : result.series) {
        for (std::size_t k = 0; k < cells; ++k) {
            ErrorRow row;
            row.horizon = spec.checkpoints[k];
            double sum = 0.0;
            row.min_error = std::numeric_limits<double>::infinity();
            row.max_error = -std::numeric_limits<double>::infinity();
            for (const auto& trial_errors : s.errors) {
                const double v = trial_errors[k];
                if (std::isnan(v)) {
                    ++s.failures;
                    continue;
                }
                sum += v;
                row.min_error = std::min(row.min_error, v);
                row.max_error = std::max(row.max_error, v);
                ++row.trials;
            }
            if (row.trials > 0) {
                row.mean_error = sum / row.trials;
            } else {
                row.mean_error = row.min_error = row.max_error = std::numeric_limits<double>::quiet_NaN();
            }
            s.rows.push_back(row);
        }
    }
    return result;
}

std::string error_rows_csv(const std::vector<ErrorRow>& rows) {
    std::ostringstream out;
    out << "T,mean_error,min_error,max_error,trials\n";
    for (const auto& r : rows) {
        out << r.horizon << ',' << format_double(r.mean_error) << ',' << format_double(r.min_error) << ','
            << format_double(r.max_error) << ',' << r.trials << '\n';
    }
    return out.str();
}

std::vector<ErrorRow> parse_error_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "T,mean_error,min_error,max_error,trials") {
        throw IoError("error csv: unexpected header");
    }
    std::vector<ErrorRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 5) throw IoError("error csv: expected 5 fields in '" + line + "'");
        ErrorRow r;
        try {
            r.horizon = std::stoi(fields[0]);
            r.mean_error = std::stod(fields[1]);
            r.min_error = std::stod(fields[2]);
            r.max_error = std::stod(fields[3]);
            r.trials = std::stoi(fields[4]);
        } catch (const std::exception&) {
            throw IoError("error csv: bad number in '" + line + "'");
        }
        rows.push_back(r);
    }
    return rows;
}

std::vector<ErrorRow> read_error_csv(const std::string& path) { return parse_error_csv(read_text_file(path)); }

std::vector<std::string> emit_plot_data(const ExperimentResult& result, const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
    std::vector<std::string> written;
    nlohmann::json files = nlohmann::json::array();
    for (const auto& s : result.series) {
        const std::string name = "errors_" + to_string(s.kind) + ".csv";
        const std::string path = (std::filesystem::path(dir) / name).string();
        write_text_file(path, error_rows_csv(s.rows));
        written.push_back(path);
        files.push_back({{"estimator", to_string(s.kind)}, {"file", name}, {"failed_cells", s.failures}});
    }
    nlohmann::json manifest;
    manifest["spec"] = spec_to_json(result.spec);
    manifest["seed"] = result.spec.seed;
    manifest["A_true"] = matrix_to_json(result.a_true);
    manifest["outputs"] = files;
    const std::string path = (std::filesystem::path(dir) / "manifest.json").string();
    write_text_file(path, dump_json(manifest));
    written.push_back(path);
    return written;
}

}  // namespace robustid
