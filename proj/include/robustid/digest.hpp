#pragma once

#include <string>
#include <string_view>

namespace robustid {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

/// SHA-256 of a file's contents; throws IoError if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace robustid
