#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "robustid/estimators.hpp"
#include "robustid/lti.hpp"

namespace robustid {

enum class SystemSource { hovorka_default, hovorka_file, system_file, random_stable };

/**
 * One error-versus-sample-size study on a single trajectory per trial.
 *
 * The default instance is the six-state insulin model discretized with
 * dt = 0.5, dense Gaussian attacks of variance 10 with probability 0.2, and
 * 16 log-spaced checkpoints in [50, 2000].
 */
struct ExperimentSpec {
    SystemSource source = SystemSource::hovorka_default;
    /// Parameter file (hovorka_file) or system JSON (system_file).
    std::string path;
    int random_n = 3;
    int random_m = 0;
    double random_rho = 0.8;
    std::uint64_t random_seed = 1;
    double dt = 0.5;
    /// Input scale for systems with m > 0 (iid Gaussian inputs).
    double input_xi = 1.0;

    double p = 0.2;
    double attack_variance = 10.0;
    DisturbanceLaw law = DisturbanceLaw::gaussian;
    LengthLaw length_law = LengthLaw::gaussian;
    double history_coupling = 0.0;
    /// Active attack coordinates; empty means dense.
    std::vector<int> sparse_support;

    std::vector<int> checkpoints = default_checkpoints();
    std::vector<EstimatorKind> estimators = {EstimatorKind::least_squares, EstimatorKind::group_l2,
                                             EstimatorKind::entry_l1};
    int trials = 5;
    std::uint64_t seed = 0;
    SolverConfig solver;

    static std::vector<int> default_checkpoints();
    void validate() const;
    LtiSystem build_system() const;
    StealthAttackConfig attack_config() const;
    InputPolicy input_policy(const LtiSystem& system) const;
};

DisturbanceLaw disturbance_law_from_string(const std::string& name);
/// Accepts gaussian, uniform-bounded and rademacher-scaled.
LengthLaw length_law_from_string(const std::string& name);

nlohmann::json solver_to_json(const SolverConfig& config);
SolverConfig solver_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const ExperimentSpec& spec);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentSpec spec_from_json(const nlohmann::json& j);

struct ErrorRow {
    int horizon = 0;
    double mean_error = 0.0;
    double min_error = 0.0;
    double max_error = 0.0;
    int trials = 0;
};

struct EstimatorSeries {
    EstimatorKind kind = EstimatorKind::least_squares;
    std::vector<ErrorRow> rows;
    /// errors[trial][checkpoint]; NaN marks a failed solve.
    std::vector<std::vector<double>> errors;
    int failures = 0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    Matrix a_true;
    std::vector<EstimatorSeries> series;

    const EstimatorSeries& get(EstimatorKind kind) const;
    /// errors at the last checkpoint, one per trial.
    std::vector<double> final_errors(EstimatorKind kind) const;
};

/// Runs every trial (in parallel over `threads` workers). Output does not
/// depend on the thread count.
ExperimentResult run_experiment(const ExperimentSpec& spec, int threads = 1);

/// Regenerates the trajectory of one trial, as run_experiment simulates it.
Trajectory experiment_trajectory(const ExperimentSpec& spec, const LtiSystem& system, int trial);

/// Writes errors_<est>.csv per estimator and manifest.json into `dir`.
/// Returns the written file paths (manifest last).
std::vector<std::string> emit_plot_data(const ExperimentResult& result, const std::string& dir);

/// CSV with header `T,mean_error,min_error,max_error,trials`.
std::string error_rows_csv(const std::vector<ErrorRow>& rows);
std::vector<ErrorRow> read_error_csv(const std::string& path);
std::vector<ErrorRow> parse_error_csv(const std::string& text);

}  // namespace robustid
