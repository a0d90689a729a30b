#pragma once

#include <stdexcept>
#include <string>

namespace gridsage {

// Error taxonomy. Every library failure is one of these; the CLI maps them
// to exit codes (config -> 2, io/data -> 3, divergence -> 4).

struct InvalidInputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ShapeError : InvalidInputError {
    using InvalidInputError::InvalidInputError;
};

// Internal consistency violation: corrupted trace chains, non-finite values,
// broken invariants. Indicates a bug or tampered data, not bad user input.
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptionError : IoError {
    using IoError::IoError;
};

struct UnsupportedVersionError : IoError {
    using IoError::IoError;
};

struct DivergedError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct StratificationError : InvalidInputError {
    using InvalidInputError::InvalidInputError;
};

}  // namespace gridsage
