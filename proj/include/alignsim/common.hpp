#pragma once

#include <stdexcept>
#include <string>

namespace alignsim {

// Error taxonomy mirrors the CLI exit codes: config/usage -> 1,
// numerical contract violations -> 2, I/O failures -> 3.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr const char* kVersion = "0.1.0";

}  // namespace alignsim
