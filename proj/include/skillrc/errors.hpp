#pragma once

#include <stdexcept>
#include <string>

namespace skillrc {

// Base for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DimensionError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

// Malformed input file (bad column counts, bad JSON, ...).
struct FormatError : Error {
    using Error::Error;
};

// Well-formed input with invalid content (unknown label, empty field, ...).
struct DataError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

// Caller violated a documented precondition.
struct ContractError : Error {
    using Error::Error;
};

// Object not in the state required for the operation.
struct StateError : Error {
    using Error::Error;
};

// NaN/Inf surfaced in a computation.
struct NumericError : Error {
    using Error::Error;
};

struct GenerationError : Error {
    using Error::Error;
};

}  // namespace skillrc
