#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "robustid/lti.hpp"

namespace robustid::testing {

/// Scalar autonomous trajectory with the given states; `attacks` marks the
/// steps whose disturbance is the part of x_{i+1} not explained by `a`.
inline Trajectory scalar_trajectory(const std::vector<double>& x, double a, const std::vector<int>& attacks) {
    const int horizon = static_cast<int>(x.size()) - 1;
    Trajectory t;
    t.states = Matrix(1, horizon + 1);
    for (int i = 0; i <= horizon; ++i) t.states(0, i) = x[i];
    t.inputs = Matrix(0, horizon);
    t.disturbances = Matrix::Zero(1, horizon);
    for (int i : attacks) t.disturbances(0, i) = x[i + 1] - a * x[i];
    t.schedule = AttackSchedule(horizon, attacks);
    return t;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("robustid_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace robustid::testing
