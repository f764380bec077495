#pragma once

#include <stdexcept>
#include <string>

namespace robustid {

/// Invalid arguments, violated preconditions, or numerical failure.
class DomainError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// File could not be read, written, or parsed.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace robustid
