#include "robustid/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "robustid/certificates.hpp"
#include "robustid/complexity.hpp"
#include "robustid/digest.hpp"
#include "robustid/error.hpp"
#include "robustid/estimators.hpp"
#include "robustid/experiments.hpp"
#include "robustid/io.hpp"
#include "robustid/lti.hpp"

namespace robustid {

namespace {

using nlohmann::json;

/// Everything a run records about itself for later replay.
struct RunContext {
    std::vector<std::string> args;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int threads = 1;
    std::string manifest_path;
    std::string subcommand;
    json config = json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    /// Manifest location used when --manifest is absent; empty means none.
    std::string default_manifest;
};

json digest_list(const std::vector<std::string>& paths) {
    json list = json::array();
    for (const auto& p : paths) list.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    return list;
}

void emit(const std::string& text, const std::string& path, RunContext& ctx, std::string& stdout_buf) {
    if (path.empty()) {
        stdout_buf += text;
    } else {
        write_text_file(path, text);
        ctx.outputs.push_back(path);
    }
}

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
    std::string system_path;
    bool hovorka = false;
    std::string params_path;
    int random_n = 0;
    int random_m = 0;
    double random_rho = 0.8;
    std::uint64_t system_seed = 1;
    double dt = 0.5;
    int horizon = 0;
    std::optional<double> p;
    std::optional<int> spacing;
    int first_attack = 0;
    std::string law = "stealth";
    double sigma = 1.0;
    std::string length_law = "gaussian";
    double coupling = 0.0;
    std::vector<int> support;
    std::string input = "zero";
    double xi = 1.0;
    std::string gain_path;
    std::string out;
    std::string system_out;
};

void run_simulate(const SimulateOptions& o, RunContext& ctx, std::string& stdout_buf) {
    const int sources = (!o.system_path.empty() ? 1 : 0) + (o.hovorka ? 1 : 0) + (o.random_n > 0 ? 1 : 0);
    if (sources != 1) throw DomainError("simulate: choose exactly one of --system, --hovorka, --random-n");
    if (o.horizon < 1) throw DomainError("simulate: --horizon must be at least 1");
    if (o.p.has_value() == o.spacing.has_value()) throw DomainError("simulate: choose exactly one of --p, --spacing");

    json cfg;
    std::optional<LtiSystem> system;
    if (!o.system_path.empty()) {
        system = system_from_json(read_json_file(o.system_path));
        ctx.inputs.push_back(o.system_path);
        cfg["system"] = {{"source", "file"}, {"path", o.system_path}};
    } else if (o.hovorka) {
        HovorkaParams params = default_hovorka_params();
        if (!o.params_path.empty()) {
            params = load_hovorka_params(o.params_path);
            ctx.inputs.push_back(o.params_path);
        }
        const auto model = hovorka_continuous(params);
        system = discretize_euler(model.ac, model.bc, o.dt);
        cfg["system"] = {{"source", "hovorka"}, {"params", o.params_path}, {"dt", o.dt}};
    } else {
        system = random_stable_system(o.random_n, o.random_m, o.random_rho, o.system_seed);
        cfg["system"] = {{"source", "random-stable"}, {"n", o.random_n}, {"m", o.random_m},
                         {"rho", o.random_rho}, {"seed", o.system_seed}};
    }

    StealthAttackConfig attack;
    attack.law = disturbance_law_from_string(o.law);
    attack.sigma = o.sigma;
    attack.length_law = length_law_from_string(o.length_law);
    attack.history_coupling = o.coupling;
    attack.support = o.support;

    InputPolicy policy;
    if (o.input == "zero") {
        policy = InputPolicy::zero();
    } else if (o.input == "gaussian") {
        policy = InputPolicy::iid_gaussian(o.xi);
    } else if (o.input == "feedback") {
        if (o.gain_path.empty()) throw DomainError("simulate: --input feedback needs --gain");
        policy = InputPolicy::feedback(matrix_from_json(read_json_file(o.gain_path), system->m(), system->n()), o.xi);
        ctx.inputs.push_back(o.gain_path);
    } else {
        throw DomainError("simulate: --input must be zero, gaussian or feedback");
    }

    const AttackSchedule schedule = o.p ? make_bernoulli(o.horizon, *o.p, ctx.seed)
                                        : make_delta_spaced(o.horizon, *o.spacing, o.first_attack);
    const Trajectory traj = simulate(*system, policy, schedule, attack, ctx.seed);

    cfg["horizon"] = o.horizon;
    if (o.p) {
        cfg["schedule"] = {{"kind", "bernoulli"}, {"p", *o.p}};
    } else {
        cfg["schedule"] = {{"kind", "delta-spaced"}, {"spacing", *o.spacing}, {"first_attack", o.first_attack}};
    }
    cfg["attack"] = {{"law", o.law}, {"sigma", o.sigma}, {"length_law", o.length_law},
                     {"history_coupling", o.coupling}, {"support", o.support}};
    cfg["input"] = {{"kind", o.input}, {"xi", o.xi}};
    ctx.config = cfg;

    std::ostringstream csv;
    write_trajectory_csv(csv, traj);
    emit(csv.str(), o.out, ctx, stdout_buf);
    if (!o.system_out.empty()) {
        write_text_file(o.system_out, dump_json(system_to_json(*system)));
        ctx.outputs.push_back(o.system_out);
    }
    if (!o.out.empty()) ctx.default_manifest = o.out + ".manifest.json";
}

// ---------------------------------------------------------------- estimate

struct SolverFlags {
    int max_iters = SolverConfig{}.max_iters;
    double tol = SolverConfig{}.tol;
    double eta0 = 0.0;
    std::string warm_start = "ls";
    int certify_every = SolverConfig{}.certify_every;
    bool no_polish = false;

    SolverConfig build() const {
        SolverConfig c;
        c.max_iters = max_iters;
        c.tol = tol;
        c.eta0 = eta0;
        if (warm_start == "zero") {
            c.warm_start = WarmStart::zero;
        } else if (warm_start == "ls") {
            c.warm_start = WarmStart::least_squares;
        } else {
            throw DomainError("--warm-start must be zero or ls");
        }
        c.certify_every = certify_every;
        c.polish = !no_polish;
        c.validate();
        return c;
    }
};

void add_solver_flags(CLI::App* cmd, SolverFlags& s) {
    cmd->add_option("--max-iters", s.max_iters, "Subgradient iteration cap");
    cmd->add_option("--tol", s.tol, "Certificate tolerance");
    cmd->add_option("--eta0", s.eta0, "Initial step (0 = automatic)");
    cmd->add_option("--warm-start", s.warm_start, "zero or ls");
    cmd->add_option("--certify-every", s.certify_every, "Iterations between certificate checks (0 = never)");
    cmd->add_flag("--no-polish", s.no_polish, "Disable least-squares refits on the near-zero residual set");
}

struct EstimateOptions {
    std::string traj;
    std::string norm = "l2";
    SolverFlags solver;
    std::string truth;
    bool trace = false;
    std::string out;
};

void run_estimate(const EstimateOptions& o, RunContext& ctx, std::string& stdout_buf) {
    const Trajectory traj = read_trajectory_csv(o.traj);
    ctx.inputs.push_back(o.traj);
    const EstimatorKind kind = estimator_kind_from_string(o.norm);
    const SolverConfig config = o.solver.build();
    const auto res = estimate(traj, kind, config);

    json j;
    j["estimator"] = to_string(kind);
    j["n"] = traj.n();
    j["m"] = traj.m();
    j["A_hat"] = matrix_to_json(res.a_hat);
    j["B_hat"] = matrix_to_json(res.b_hat);
    j["objective"] = res.objective;
    j["iterations"] = res.iterations_used;
    j["certified"] = res.certified;
    j["stop_reason"] = res.stop_reason;
    if (!o.truth.empty()) {
        const LtiSystem truth = system_from_json(read_json_file(o.truth));
        ctx.inputs.push_back(o.truth);
        j["error_vs_truth"] = estimation_error(res.estimate(), truth);
    }
    if (o.trace) j["trace"] = res.trace;

    ctx.config = {{"traj", o.traj}, {"norm", to_string(kind)}, {"solver", solver_to_json(config)},
                  {"truth", o.truth}, {"trace", o.trace}};
    emit(dump_json(j), o.out, ctx, stdout_buf);
    if (!o.out.empty()) ctx.default_manifest = o.out + ".manifest.json";
}

// ---------------------------------------------------------------- certify

struct CertifyOptions {
    std::string traj;
    std::string estimate;
    std::string truth;
    std::string norm = "l2";
    double tol = 1e-8;
    double support_tol = -1.0;
    std::string out;
};

json certificate_json(const Certificate& c) {
    json j;
    j["verdict"] = to_string(c.verdict);
    j["margin"] = c.margin;
    j["residual"] = c.residual;
    j["iterations"] = c.iterations;
    if (c.verdict == Verdict::not_optimal) {
        j["z"] = matrix_to_json(c.z);
    } else {
        j["w"] = matrix_to_json(c.w);
    }
    return j;
}

void run_certify(const CertifyOptions& o, RunContext& ctx, std::string& stdout_buf) {
    if (o.estimate.empty() == o.truth.empty()) {
        throw DomainError("certify: choose exactly one of --estimate, --truth");
    }
    const Trajectory traj = read_trajectory_csv(o.traj);
    ctx.inputs.push_back(o.traj);
    Matrix a;
    Matrix b;
    if (!o.estimate.empty()) {
        const json est = read_json_file(o.estimate);
        ctx.inputs.push_back(o.estimate);
        if (!est.contains("A_hat")) throw DomainError("certify: estimate JSON lacks A_hat");
        a = matrix_from_json(est.at("A_hat"), traj.n(), traj.n());
        b = traj.m() > 0 ? matrix_from_json(est.at("B_hat"), traj.n(), traj.m()) : Matrix(traj.n(), 0);
    } else {
        const LtiSystem truth = system_from_json(read_json_file(o.truth));
        ctx.inputs.push_back(o.truth);
        a = truth.a();
        b = truth.m() > 0 ? truth.b() : Matrix(traj.n(), 0);
    }
    const EstimatorKind kind = estimator_kind_from_string(o.norm);
    KktOptions opts;
    opts.tol = o.tol;
    opts.support_tol = o.support_tol;
    const KktReport report = kkt_certificate(traj, a, b, kind, opts);

    json j;
    j["estimator"] = to_string(kind);
    j["verdict"] = to_string(report.verdict);
    j["margin"] = report.margin;
    j["support"] = report.support;
    j["support_tol"] = report.support_info.tol;
    j["support_ambiguous"] = report.support_info.ambiguous;
    json coords = json::array();
    for (const auto& c : report.coordinates) coords.push_back(certificate_json(c));
    j["coordinates"] = coords;
    if (report.group) j["group"] = certificate_json(*report.group);
    if (traj.n() == 1) {
        const auto l2 = lemma2_condition(traj);
        j["scalar_condition"] = {{"holds", l2.holds}, {"clean_mass", l2.lhs}, {"attacked_mass", l2.rhs}};
    }
    ctx.config = {{"traj", o.traj}, {"estimate", o.estimate}, {"truth", o.truth}, {"norm", to_string(kind)},
                  {"tol", o.tol}, {"support_tol", o.support_tol}};
    emit(dump_json(j), o.out, ctx, stdout_buf);
    if (!o.out.empty()) ctx.default_manifest = o.out + ".manifest.json";
}

// ---------------------------------------------------------------- bound

struct BoundOptions {
    std::vector<int> cnk;
    int cnk_grid = 0;
    bool eigen_condition = false;
    std::vector<std::string> eigs;
    int spacing = 0;
    int theorem = 0;
    int n = 1;
    int m = 0;
    double p = 0.5;
    double rho = 0.5;
    double c = 1.0;
    double kappa = 0.0;
    double delta = 0.05;
    double multiplier = 1.0;
    std::string format = "json";
    std::string out;
};

std::complex<double> parse_eigenvalue(const std::string& token) {
    const auto colon = token.find(':');
    try {
        std::size_t used = 0;
        if (colon == std::string::npos) {
            const double re = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
            return {re, 0.0};
        }
        const std::string re_s = token.substr(0, colon);
        const std::string im_s = token.substr(colon + 1);
        const double re = std::stod(re_s, &used);
        if (used != re_s.size()) throw std::invalid_argument(token);
        const double im = std::stod(im_s, &used);
        if (used != im_s.size()) throw std::invalid_argument(token);
        return {re, im};
    } catch (const std::exception&) {
        throw DomainError("bound: cannot parse eigenvalue '" + token + "' (use re or re:im)");
    }
}

void run_bound(const BoundOptions& o, RunContext& ctx, std::string& stdout_buf) {
    const int modes = (!o.cnk.empty() ? 1 : 0) + (o.cnk_grid > 0 ? 1 : 0) + (o.eigen_condition ? 1 : 0) +
                      (o.theorem != 0 ? 1 : 0);
    if (modes != 1) {
        throw DomainError("bound: choose exactly one of --cnk, --cnk-grid, --eigen-condition, --theorem");
    }
    if (o.format != "json" && o.format != "csv") throw DomainError("bound: --format must be json or csv");
    std::string text;
    if (!o.cnk.empty()) {
        if (o.cnk.size() != 2) throw DomainError("bound: --cnk takes two integers n k");
        text = format_double(cnk_bound(o.cnk[0], o.cnk[1])) + "\n";
        ctx.config = {{"mode", "cnk"}, {"n", o.cnk[0]}, {"k", o.cnk[1]}};
    } else if (o.cnk_grid > 0) {
        std::ostringstream csv;
        csv << "n,k,C\n";
        for (int n = 1; n <= o.cnk_grid; ++n) {
            for (int k = 1; k <= o.cnk_grid; ++k) csv << n << ',' << k << ',' << format_double(cnk_bound(n, k)) << '\n';
        }
        text = csv.str();
        ctx.config = {{"mode", "cnk-grid"}, {"max", o.cnk_grid}};
    } else if (o.eigen_condition) {
        std::vector<std::complex<double>> eigs;
        for (const auto& t : o.eigs) eigs.push_back(parse_eigenvalue(t));
        const auto r = eigen_condition(eigs, o.spacing);
        if (o.format == "csv") {
            text = "holds,boundary,lhs,rhs,log_lhs,log_rhs\n" + std::to_string(r.holds ? 1 : 0) + "," +
                   std::to_string(r.boundary ? 1 : 0) + "," + format_double(r.lhs) + "," + format_double(r.rhs) +
                   "," + format_double(r.log_lhs) + "," + format_double(r.log_rhs) + "\n";
        } else {
            json j = {{"holds", r.holds}, {"boundary", r.boundary}, {"lhs", r.lhs}, {"rhs", r.rhs},
                      {"log_lhs", r.log_lhs}, {"log_rhs", r.log_rhs}};
            text = dump_json(j);
        }
        ctx.config = {{"mode", "eigen-condition"}, {"eigs", o.eigs}, {"spacing", o.spacing}};
    } else {
        ComplexityInputs in;
        in.n = o.n;
        in.m = o.m;
        in.p = o.p;
        in.rho = o.rho;
        in.c = o.c;
        in.kappa = o.kappa;
        in.delta = o.delta;
        in.multiplier = o.multiplier;
        json j;
        j["theorem"] = o.theorem;
        j["label"] = "order prediction";
        switch (o.theorem) {
            case 2:
                j["R"] = r_autonomous(in);
                j["T_sample"] = t_sample_auto_l2(in);
                break;
            case 3:
                j["R"] = r_autonomous(in);
                j["T_sample"] = t_sample_auto_l1(in);
                break;
            case 5:
            case 6: {
                const auto r = t_sample_input(in, o.theorem == 6);
                j["R1"] = r.r1;
                j["R2"] = r.r2;
                j["T1"] = r.t1;
                j["T2"] = r.t2;
                j["T_sample"] = r.t;
                break;
            }
            default: throw DomainError("bound: --theorem must be 2, 3, 5 or 6");
        }
        if (o.format == "csv") {
            std::string header;
            std::string row;
            for (const auto& item : j.items()) {
                header += (header.empty() ? "" : ",") + item.key();
                const auto& v = item.value();
                const std::string cell = v.is_string() ? v.get<std::string>()
                                         : v.is_number_integer() ? std::to_string(v.get<long long>())
                                                                 : format_double(v.get<double>());
                row += (row.empty() ? "" : ",") + cell;
            }
            text = header + "\n" + row + "\n";
        } else {
            text = dump_json(j);
        }
        ctx.config = {{"mode", "theorem"}, {"theorem", o.theorem}, {"n", o.n},         {"m", o.m},
                      {"p", o.p},          {"rho", o.rho},         {"c", o.c},         {"kappa", o.kappa},
                      {"delta", o.delta},  {"multiplier", o.multiplier}};
    }
    ctx.config["format"] = o.format;
    emit(text, o.out, ctx, stdout_buf);
    if (!o.out.empty()) ctx.default_manifest = o.out + ".manifest.json";
}

// ---------------------------------------------------------------- phase

struct PhaseOptions {
    std::string config;
    std::optional<double> p;
    std::optional<int> trials;
    std::string estimator;
    std::string out;
};

std::vector<int> default_phase_grid() { return {8, 16, 32, 64, 128, 256, 512}; }

struct PhaseJob {
    PhaseScenario scenario;
    std::vector<int> grid = default_phase_grid();
    int trials = 50;
    std::uint64_t seed = 0;
    json resolved;
};

PhaseJob phase_job_from_json(const json& j) {
    if (!j.is_object()) throw DomainError("phase config must be a JSON object");
    static const std::vector<std::string> known = {"system", "random", "p", "spacing", "first_attack", "attack",
                                                   "input", "estimator", "solver", "recovery_tol", "target",
                                                   "T_grid", "trials", "seed", "scalar_exact"};
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw DomainError("phase config: unknown field '" + item.key() + "'");
        }
    }
    PhaseJob job;
    json random = {{"n", 3}, {"m", 0}, {"rho", 0.8}, {"seed", 1}};
    try {
        if (j.contains("system")) {
            job.scenario.system = system_from_json(j.at("system"));
            job.resolved["system"] = system_to_json(job.scenario.system);
        } else {
            if (j.contains("random")) random.update(j.at("random"));
            job.scenario.system = random_stable_system(random.at("n").get<int>(), random.at("m").get<int>(),
                                                       random.at("rho").get<double>(),
                                                       random.at("seed").get<std::uint64_t>());
            job.resolved["random"] = random;
        }
        auto& sc = job.scenario;
        sc.p = j.value("p", sc.p);
        if (j.contains("spacing")) sc.spacing = j.at("spacing").get<int>();
        sc.first_attack = j.value("first_attack", sc.first_attack);
        if (j.contains("attack")) {
            const auto& a = j.at("attack");
            sc.attack.law = disturbance_law_from_string(a.value("law", std::string("stealth")));
            sc.attack.sigma = a.value("sigma", sc.attack.sigma);
            sc.attack.length_law = length_law_from_string(a.value("length_law", std::string("gaussian")));
            sc.attack.history_coupling = a.value("history_coupling", sc.attack.history_coupling);
            sc.attack.support = a.value("support", sc.attack.support);
        }
        if (j.contains("input")) {
            const auto& in = j.at("input");
            const std::string kind = in.value("kind", std::string("zero"));
            const double xi = in.value("xi", 1.0);
            if (kind == "zero") {
                sc.policy = InputPolicy::zero();
            } else if (kind == "gaussian") {
                sc.policy = InputPolicy::iid_gaussian(xi);
            } else {
                throw DomainError("phase config: input kind must be zero or gaussian");
            }
        } else if (sc.system.m() > 0) {
            sc.policy = InputPolicy::iid_gaussian(1.0);
        }
        sc.estimator = estimator_kind_from_string(j.value("estimator", std::string("l2")));
        if (j.contains("solver")) sc.solver = solver_from_json(j.at("solver"));
        sc.recovery_tol = j.value("recovery_tol", sc.recovery_tol);
        sc.target = j.value("target", sc.target);
        sc.scalar_exact = j.value("scalar_exact", sc.scalar_exact);
        job.grid = j.value("T_grid", job.grid);
        job.trials = j.value("trials", job.trials);
        job.seed = j.value("seed", job.seed);
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(std::string("phase config: ") + e.what());
    }
    return job;
}

json phase_resolved(const PhaseJob& job) {
    const auto& sc = job.scenario;
    json r = job.resolved;
    r["p"] = sc.p;
    if (sc.spacing) {
        r["spacing"] = *sc.spacing;
        r["first_attack"] = sc.first_attack;
    }
    r["attack"] = {{"law", sc.attack.law == DisturbanceLaw::gaussian ? "gaussian" : "stealth"},
                   {"sigma", sc.attack.sigma},
                   {"history_coupling", sc.attack.history_coupling},
                   {"support", sc.attack.support}};
    r["estimator"] = to_string(sc.estimator);
    r["solver"] = solver_to_json(sc.solver);
    r["recovery_tol"] = default_recovery_tol(sc);
    r["target"] = sc.target;
    r["scalar_exact"] = sc.scalar_exact;
    r["T_grid"] = job.grid;
    r["trials"] = job.trials;
    r["seed"] = job.seed;
    return r;
}

void run_phase(const PhaseOptions& o, RunContext& ctx, std::string& stdout_buf) {
    json cfg = json::object();
    if (!o.config.empty()) {
        cfg = read_json_file(o.config);
        ctx.inputs.push_back(o.config);
    }
    PhaseJob job = phase_job_from_json(cfg);
    if (o.p) {
        job.scenario.p = *o.p;
        job.scenario.spacing.reset();
    }
    if (o.trials) job.trials = *o.trials;
    if (!o.estimator.empty()) job.scenario.estimator = estimator_kind_from_string(o.estimator);
    if (ctx.seed_given) job.seed = ctx.seed;

    const PhaseCurve curve = phase_transition(job.scenario, job.grid, job.trials, job.seed, ctx.threads);
    std::ostringstream csv;
    csv << "T,success_rate,trials,threshold_flag\n";
    for (const auto& pt : curve.points) {
        const bool flag = curve.threshold && *curve.threshold == pt.horizon;
        csv << pt.horizon << ',' << format_double(pt.success_rate()) << ',' << pt.trials << ',' << (flag ? 1 : 0)
            << '\n';
    }
    ctx.config = phase_resolved(job);
    emit(csv.str(), o.out, ctx, stdout_buf);
    if (!o.out.empty()) ctx.default_manifest = o.out + ".manifest.json";
}

// ---------------------------------------------------------------- experiment

struct ExperimentOptions {
    std::string config;
    std::optional<double> p;
    bool sparse = false;
    std::optional<int> trials;
    std::vector<std::string> estimators;
    std::string out_dir;
};

void run_experiment_cmd(const ExperimentOptions& o, RunContext& ctx, std::string&) {
    if (o.out_dir.empty()) throw DomainError("experiment: --out-dir is required");
    ExperimentSpec spec;
    if (!o.config.empty()) {
        spec = spec_from_json(read_json_file(o.config));
        ctx.inputs.push_back(o.config);
    }
    if (o.p) spec.p = *o.p;
    // Sparse variant: only d4 and d6 carry attacks.
    if (o.sparse) spec.sparse_support = {3, 5};
    if (o.trials) spec.trials = *o.trials;
    if (!o.estimators.empty()) {
        spec.estimators.clear();
        for (const auto& e : o.estimators) spec.estimators.push_back(estimator_kind_from_string(e));
    }
    if (ctx.seed_given) spec.seed = ctx.seed;
    if (!spec.path.empty()) ctx.inputs.push_back(spec.path);
    spec.validate();

    const ExperimentResult result = run_experiment(spec, ctx.threads);
    for (const auto& path : emit_plot_data(result, o.out_dir)) ctx.outputs.push_back(path);
    ctx.config = spec_to_json(spec);
    ctx.default_manifest = (std::filesystem::path(o.out_dir) / "run_manifest.json").string();
}

// ---------------------------------------------------------------- replay

int run_replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
    const json manifest = read_json_file(manifest_path);
    const std::string original = read_text_file(manifest_path);
    if (!manifest.contains("argv") || !manifest.at("argv").is_array()) {
        throw DomainError("replay: manifest lacks argv");
    }
    const auto args = manifest.at("argv").get<std::vector<std::string>>();
    if (!args.empty() && args.front() == "replay") throw DomainError("replay: manifest records a replay");

    const auto cwd = std::filesystem::current_path();
    const std::string recorded_cwd = manifest.value("cwd", std::string());
    if (!recorded_cwd.empty()) std::filesystem::current_path(recorded_cwd);

    std::ostringstream captured_out;
    std::ostringstream captured_err;
    int code = 0;
    try {
        code = dispatch(args, captured_out, captured_err);
    } catch (...) {
        std::filesystem::current_path(cwd);
        throw;
    }

    json report;
    report["manifest"] = manifest_path;
    report["exit_code"] = code;
    bool match = code == 0;
    json files = json::array();
    for (const auto& entry : manifest.value("outputs", json::array())) {
        const std::string path = entry.at("path").get<std::string>();
        const std::string now = std::filesystem::exists(path) ? sha256_file(path) : std::string("missing");
        const bool same = now == entry.at("sha256").get<std::string>();
        match = match && same;
        files.push_back({{"path", path}, {"match", same}});
    }
    if (manifest.contains("stdout_sha256")) {
        const bool same = sha256_hex(captured_out.str()) == manifest.at("stdout_sha256").get<std::string>();
        match = match && same;
        report["stdout_match"] = same;
    }
    const bool manifest_same = read_text_file(manifest_path) == original;
    if (!manifest_same) {
        // Restore the original record.
        write_text_file(manifest_path, original);
    }
    report["manifest_match"] = manifest_same;
    match = match && manifest_same;
    report["outputs"] = files;
    report["match"] = match;
    std::filesystem::current_path(cwd);

    out << dump_json(report);
    if (!match) {
        err << "replay: outputs differ from the manifest\n" << captured_err.str();
        return 1;
    }
    return 0;
}

void write_manifest(const RunContext& ctx, const std::string& stdout_text) {
    const std::string path = ctx.manifest_path.empty() ? ctx.default_manifest : ctx.manifest_path;
    if (path.empty()) return;
    json m;
    m["tool"] = "robustid";
    m["version"] = kVersion;
    m["subcommand"] = ctx.subcommand;
    m["argv"] = ctx.args;
    m["cwd"] = std::filesystem::current_path().string();
    m["seed"] = ctx.seed;
    m["threads"] = ctx.threads;
    m["config"] = ctx.config;
    m["inputs"] = digest_list(ctx.inputs);
    m["outputs"] = digest_list(ctx.outputs);
    if (!stdout_text.empty()) m["stdout_sha256"] = sha256_hex(stdout_text);
    write_text_file(path, dump_json(m));
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust identification of linear systems from attacked trajectories", "robustid"};
    app.set_version_flag("--version", std::string("robustid ") + kVersion);
    app.require_subcommand(1);
    app.fallthrough();

    RunContext ctx;
    ctx.args = args;
    app.add_option("--seed", ctx.seed, "Master 64-bit seed for all randomness");
    app.add_option("--threads", ctx.threads, "Worker threads for trial-parallel commands")->check(CLI::PositiveNumber);
    app.add_option("--manifest", ctx.manifest_path, "Where to write the run manifest");

    SimulateOptions sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate an attacked trajectory and write it as CSV");
    c_sim->add_option("--system", sim.system_path, "System JSON {n, m, A, B}");
    c_sim->add_flag("--hovorka", sim.hovorka, "Use the six-state insulin model");
    c_sim->add_option("--params", sim.params_path, "Insulin model parameter JSON (default values otherwise)");
    c_sim->add_option("--random-n", sim.random_n, "Random stable system of this order");
    c_sim->add_option("--random-m", sim.random_m, "Input dimension of the random system");
    c_sim->add_option("--random-rho", sim.random_rho, "Spectral radius of the random system");
    c_sim->add_option("--system-seed", sim.system_seed, "Seed of the random system");
    c_sim->add_option("--dt", sim.dt, "Euler step for continuous models");
    c_sim->add_option("-T,--horizon", sim.horizon, "Number of transitions")->required();
    c_sim->add_option("--p", sim.p, "Bernoulli attack probability");
    c_sim->add_option("--spacing", sim.spacing, "Attack spacing for periodic attacks");
    c_sim->add_option("--first", sim.first_attack, "First attack time for periodic attacks");
    c_sim->add_option("--law", sim.law, "stealth or gaussian");
    c_sim->add_option("--sigma", sim.sigma, "Attack scale");
    c_sim->add_option("--length-law", sim.length_law, "gaussian, uniform-bounded or rademacher-scaled");
    c_sim->add_option("--coupling", sim.coupling, "History coupling in [0, 1)");
    c_sim->add_option("--support", sim.support, "Active attack coordinates")->delimiter(',');
    c_sim->add_option("--input", sim.input, "zero, gaussian or feedback");
    c_sim->add_option("--xi", sim.xi, "Input scale");
    c_sim->add_option("--gain", sim.gain_path, "Feedback gain JSON matrix (m x n)");
    c_sim->add_option("--out", sim.out, "Trajectory CSV (stdout otherwise)");
    c_sim->add_option("--system-out", sim.system_out, "Write the simulated system as JSON");

    EstimateOptions est;
    auto* c_est = app.add_subcommand("estimate", "Fit (A, B) to a trajectory");
    c_est->add_option("--traj", est.traj, "Trajectory CSV")->required();
    c_est->add_option("--norm", est.norm, "l1, l2 or ls");
    add_solver_flags(c_est, est.solver);
    c_est->add_option("--truth", est.truth, "System JSON for error_vs_truth");
    c_est->add_flag("--trace", est.trace, "Include the best-objective trace");
    c_est->add_option("--out", est.out, "Result JSON (stdout otherwise)");

    CertifyOptions cert;
    auto* c_cert = app.add_subcommand("certify", "Check optimality of an estimate");
    c_cert->add_option("--traj", cert.traj, "Trajectory CSV")->required();
    c_cert->add_option("--estimate", cert.estimate, "Estimate JSON with A_hat, B_hat");
    c_cert->add_option("--truth", cert.truth, "System JSON to certify instead");
    c_cert->add_option("--norm", cert.norm, "l1, l2 or ls");
    c_cert->add_option("--tol", cert.tol, "Feasibility tolerance");
    c_cert->add_option("--support-tol", cert.support_tol, "Residual support threshold (negative = automatic)");
    c_cert->add_option("--out", cert.out, "Certificate JSON (stdout otherwise)");

    BoundOptions bnd;
    auto* c_bnd = app.add_subcommand("bound", "Eigenvalue bounds and sample-complexity order predictions");
    c_bnd->add_option("--cnk", bnd.cnk, "C_{n,k} for the given n k")->expected(2);
    c_bnd->add_option("--cnk-grid", bnd.cnk_grid, "Table of C_{n,k} for n, k up to this value");
    c_bnd->add_flag("--eigen-condition", bnd.eigen_condition, "Evaluate the eigenvalue condition");
    c_bnd->add_option("--eigs", bnd.eigs, "Eigenvalues as re or re:im")->delimiter(',');
    c_bnd->add_option("--spacing", bnd.spacing, "Attack spacing for --eigen-condition");
    c_bnd->add_option("--theorem", bnd.theorem, "2, 3 (autonomous) or 5, 6 (with inputs)");
    c_bnd->add_option("--n", bnd.n, "State dimension");
    c_bnd->add_option("--m", bnd.m, "Input dimension");
    c_bnd->add_option("--p", bnd.p, "Attack probability");
    c_bnd->add_option("--rho", bnd.rho, "Spectral radius");
    c_bnd->add_option("--c", bnd.c, "Variance-ratio constant in (0, 1]");
    c_bnd->add_option("--kappa", bnd.kappa, "kappa (0 = 1/(1 - rho))");
    c_bnd->add_option("--delta", bnd.delta, "Failure probability");
    c_bnd->add_option("--multiplier", bnd.multiplier, "Constant in front of the order prediction");
    c_bnd->add_option("--format", bnd.format, "json or csv");
    c_bnd->add_option("--out", bnd.out, "Output file (stdout otherwise)");

    PhaseOptions ph;
    auto* c_ph = app.add_subcommand("phase", "Empirical recovery rate versus horizon");
    c_ph->add_option("--config", ph.config, "Scenario JSON");
    c_ph->add_option("--p", ph.p, "Override the attack probability");
    c_ph->add_option("--trials", ph.trials, "Override the trial count");
    c_ph->add_option("--estimator", ph.estimator, "Override the estimator (l1, l2, ls)");
    c_ph->add_option("--out", ph.out, "CSV output (stdout otherwise)");

    ExperimentOptions ex;
    auto* c_ex = app.add_subcommand("experiment", "Error curves on the insulin model or a configured system");
    c_ex->add_option("--config", ex.config, "Experiment spec JSON");
    c_ex->add_option("--p", ex.p, "Override the attack probability");
    c_ex->add_flag("--sparse", ex.sparse, "Attack only coordinates 4 and 6");
    c_ex->add_option("--trials", ex.trials, "Override the trial count");
    c_ex->add_option("--estimators", ex.estimators, "Subset of ls,l2,l1")->delimiter(',');
    c_ex->add_option("--out-dir", ex.out_dir, "Directory for CSV files and manifests")->required();

    std::string replay_path;
    auto* c_rep = app.add_subcommand("replay", "Rerun a recorded command and compare output digests");
    c_rep->add_option("manifest,--manifest-file", replay_path, "Run manifest to replay")->required();

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.push_back("robustid");
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion& e) {
        out << e.what() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }
    ctx.seed_given = app.count("--seed") > 0;

    std::string stdout_buf;
    try {
        if (c_rep->parsed()) return run_replay(replay_path, out, err);
        if (c_sim->parsed()) {
            ctx.subcommand = "simulate";
            run_simulate(sim, ctx, stdout_buf);
        } else if (c_est->parsed()) {
            ctx.subcommand = "estimate";
            run_estimate(est, ctx, stdout_buf);
        } else if (c_cert->parsed()) {
            ctx.subcommand = "certify";
            run_certify(cert, ctx, stdout_buf);
        } else if (c_bnd->parsed()) {
            ctx.subcommand = "bound";
            run_bound(bnd, ctx, stdout_buf);
        } else if (c_ph->parsed()) {
            ctx.subcommand = "phase";
            run_phase(ph, ctx, stdout_buf);
        } else if (c_ex->parsed()) {
            ctx.subcommand = "experiment";
            run_experiment_cmd(ex, ctx, stdout_buf);
        }
        write_manifest(ctx, stdout_buf);
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "io error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    out << stdout_buf;
    return 0;
}

int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(args, std::cout, std::cerr);
}

}  // namespace robustid
