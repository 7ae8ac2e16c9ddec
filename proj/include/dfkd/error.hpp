#pragma once

#include <stdexcept>
#include <string>

namespace dfkd {

// Shape mismatch between operands (broadcast failure, dim mismatch, ...).
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerically invalid input to an op (log of non-positive, div by zero, ...).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// API contract violation (non-scalar loss, misaligned mask, ...).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid configuration (bad hyperparameter, non-composing layer stack, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid data fed to a model (label out of range, ...).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed file content (bad magic, truncation, wrong record length, ...).
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dfkd
