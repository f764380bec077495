#include "robustid/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

#include "robustid/error.hpp"

namespace robustid {

std::string format_double(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

namespace {

double parse_double(std::string_view field, int line) {
    double value = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
    if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
        throw IoError("trajectory csv line " + std::to_string(line) + ": bad number '" +
                      std::string(field) + "'");
    }
    return value;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

int count_prefix(const std::vector<std::string_view>& header, std::string_view prefix,
                 std::size_t from) {
    int count = 0;
    for (std::size_t k = from; k < header.size(); ++k) {
        if (header[k] != std::string(prefix) + std::to_string(count)) break;
        ++count;
    }
    return count;
}

}  // namespace

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
    const int n = traj.n();
    const int m = traj.m();
    const int horizon = traj.horizon();
    out << "t";
    for (int i = 0; i < n; ++i) out << ",x_" << i;
    for (int i = 0; i < m; ++i) out << ",u_" << i;
    for (int i = 0; i < n; ++i) out << ",d_" << i;
    out << ",attacked\n";
    for (int t = 0; t <= horizon; ++t) {
        out << t;
        for (int i = 0; i < n; ++i) out << ',' << format_double(traj.states(i, t));
        if (t < horizon) {
            for (int i = 0; i < m; ++i) out << ',' << format_double(traj.inputs(i, t));
            for (int i = 0; i < n; ++i) out << ',' << format_double(traj.disturbances(i, t));
            out << ',' << (traj.schedule.attacked(t) ? 1 : 0) << '\n';
        } else {
            for (int i = 0; i < m + n; ++i) out << ',';
            out << ",\n";
        }
    }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
    std::ostringstream buf;
    write_trajectory_csv(buf, traj);
    write_text_file(path, buf.str());
}

Trajectory read_trajectory_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError("trajectory csv: empty input");
    }
    const auto header = split_commas(line);
    if (header.empty() || header[0] != "t") {
        throw IoError("trajectory csv: header must start with 't'");
    }
    const int n = count_prefix(header, "x_", 1);
    const int m = count_prefix(header, "u_", 1 + static_cast<std::size_t>(n));
    const int nd = count_prefix(header, "d_", 1 + static_cast<std::size_t>(n + m));
    const std::size_t width = 1 + static_cast<std::size_t>(n + m + nd) + 1;
    if (n < 1 || nd != n || header.size() != width || header.back() != "attacked") {
        throw IoError("trajectory csv: malformed header");
    }

    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> dists;
    std::vector<int> attacked;
    bool terminal_seen = false;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (terminal_seen) {
            throw IoError("trajectory csv: rows after the terminal state row");
        }
        const auto fields = split_commas(line);
        if (fields.size() != width) {
            throw IoError("trajectory csv line " + std::to_string(line_no) + ": expected " +
                          std::to_string(width) + " fields");
        }
        const int t = static_cast<int>(parse_double(fields[0], line_no));
        if (t != static_cast<int>(states.size())) {
            throw IoError("trajectory csv line " + std::to_string(line_no) + ": t out of order");
        }
        std::vector<double> x(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) x[static_cast<std::size_t>(i)] = parse_double(fields[1 + i], line_no);
        states.push_back(std::move(x));
        if (fields.back().empty()) {
            terminal_seen = true;
            continue;
        }
        std::vector<double> u(static_cast<std::size_t>(m));
        std::vector<double> d(static_cast<std::size_t>(n));
        for (int i = 0; i < m; ++i) u[static_cast<std::size_t>(i)] = parse_double(fields[1 + n + i], line_no);
        for (int i = 0; i < n; ++i) d[static_cast<std::size_t>(i)] = parse_double(fields[1 + n + m + i], line_no);
        inputs.push_back(std::move(u));
        dists.push_back(std::move(d));
        const auto flag = fields.back();
        if (flag != "0" && flag != "1") {
            throw IoError("trajectory csv line " + std::to_string(line_no) + ": attacked must be 0/1");
        }
        attacked.push_back(flag == "1" ? 1 : 0);
    }
    if (!terminal_seen || inputs.empty()) {
        throw IoError("trajectory csv: missing terminal state row");
    }

    const int horizon = static_cast<int>(inputs.size());
    Trajectory traj;
    traj.states.resize(n, horizon + 1);
    traj.inputs.resize(m, horizon);
    traj.disturbances.resize(n, horizon);
    std::vector<int> times;
    for (int t = 0; t <= horizon; ++t) {
        for (int i = 0; i < n; ++i) traj.states(i, t) = states[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
        if (t == horizon) break;
        for (int i = 0; i < m; ++i) traj.inputs(i, t) = inputs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i) traj.disturbances(i, t) = dists[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
        if (attacked[static_cast<std::size_t>(t)]) times.push_back(t);
    }
    traj.schedule = AttackSchedule(horizon, std::move(times));
    return traj;
}

Trajectory read_trajectory_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open trajectory file '" + path + "'");
    }
    return read_trajectory_csv(in);
}

nlohmann::json matrix_to_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const nlohmann::json& j, int rows, int cols) {
    if (!j.is_array()) {
        throw DomainError("matrix must be a JSON array of rows");
    }
    const int r = static_cast<int>(j.size());
    int c = cols;
    if (r > 0) {
        if (!j[0].is_array()) throw DomainError("matrix rows must be arrays");
        c = static_cast<int>(j[0].size());
    } else if (c < 0) {
        c = 0;
    }
    if (rows >= 0 && r != rows && !(r == 0 && cols == 0)) {
        throw DomainError("matrix has " + std::to_string(r) + " rows, expected " +
                          std::to_string(rows));
    }
    if (cols >= 0 && c != cols) {
        throw DomainError("matrix has " + std::to_string(c) + " columns, expected " +
                          std::to_string(cols));
    }
    Matrix m(rows >= 0 ? rows : r, c);
    for (int i = 0; i < r; ++i) {
        if (!j[i].is_array() || static_cast<int>(j[i].size()) != c) {
            throw DomainError("matrix rows must have equal length");
        }
        for (int k = 0; k < c; ++k) {
            if (!j[i][k].is_number()) throw DomainError("matrix entries must be numbers");
            m(i, k) = j[i][k].get<double>();
        }
    }
    return m;
}

nlohmann::json system_to_json(const LtiSystem& system) {
    nlohmann::json j;
    j["n"] = system.n();
    j["m"] = system.m();
    j["A"] = matrix_to_json(system.a());
    j["B"] = matrix_to_json(system.b());
    return j;
}

LtiSystem system_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("n") || !j.contains("A")) {
        throw DomainError("system JSON needs fields 'n' and 'A'");
    }
    const int n = j.at("n").get<int>();
    const int m = j.value("m", 0);
    if (n < 1 || m < 0) {
        throw DomainError("system JSON: invalid dimensions");
    }
    Matrix a = matrix_from_json(j.at("A"), n, n);
    Matrix b = m > 0 ? matrix_from_json(j.at("B"), n, m) : Matrix(n, 0);
    return LtiSystem(std::move(a), std::move(b));
}

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse '" + path + "': " + e.what());
    }
}

void write_text_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write '" + path + "'");
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) {
        throw IoError("write failed for '" + path + "'");
    }
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace robustid
