#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace robustid {

inline constexpr const char* kVersion = "1.0.0";

/**
 * Runs one command line (arguments after the program name).
 *
 * Returns 0 on success, 1 on usage or domain errors and 2 on I/O errors.
 * Data goes to `out` or to files; diagnostics go to `err`.
 */
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Entry point for main(): forwards argv[1..] to the overload above.
int dispatch(int argc, char** argv);

}  // namespace robustid
