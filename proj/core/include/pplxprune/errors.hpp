#pragma once

#include <stdexcept>
#include <string>

namespace pplxprune {

// Process exit codes used by the CLI.
enum class ExitCode : int {
    ok = 0,
    config_error = 1,   // bad flags, bad config file, precondition violations
    data_error = 2,     // malformed or inconsistent input data / artifacts
    internal_error = 3, // bugs; anything not mapped above
};

// Invalid configuration or usage (exit code 1).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid or inconsistent data encountered while processing (exit code 2).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace pplxprune
