#pragma once

#include <iosfwd>
#include <string>
#include <string_view>

#include <json.hpp>

#include "robustid/lti.hpp"

namespace robustid {

/// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

/// CSV with header `t,x_0..x_{n-1},u_0..u_{m-1},d_0..d_{n-1},attacked`.
/// Row T carries x_T only; its input and disturbance fields are empty.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(std::istream& in);
Trajectory read_trajectory_csv(const std::string& path);

nlohmann::json matrix_to_json(const Matrix& m);
/// Parses a row-major nested array; `rows`/`cols` are checked when nonnegative.
Matrix matrix_from_json(const nlohmann::json& j, int rows = -1, int cols = -1);

/// Flat JSON: {"n", "m", "A": [[..]], "B": [[..]]}.
nlohmann::json system_to_json(const LtiSystem& system);
LtiSystem system_from_json(const nlohmann::json& j);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);
std::string read_text_file(const std::string& path);

/// JSON dump with fixed two-space indentation and trailing newline.
std::string dump_json(const nlohmann::json& j);

}  // namespace robustid
