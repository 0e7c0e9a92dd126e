#pragma once

#include <stdexcept>
#include <string>

namespace cluegain {

// Bad dimension lists, bad strategy parameters, malformed schemas.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Caller handed us data that violates an operation's preconditions
// (shape mismatch, non-finite input, incomplete source table).
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

// CSV / schema / serialization file problems.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// A contract inside the library broke (stale forward cache, diverged loss).
class InternalError : public std::runtime_error {
public:
    explicit InternalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cluegain
