#pragma once

#include <stdexcept>
#include <string>

namespace chanpred {

// Error categories map one-to-one onto CLI exit codes.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when training diverges (non-finite loss or gradient).
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace chanpred
