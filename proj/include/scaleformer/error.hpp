#pragma once

#include <stdexcept>
#include <string>

namespace scaleformer {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad option values, inconsistent settings, unknown names.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or insufficient input data (ingestion, ordering, empty window sets).
class DataError : public Error {
public:
    using Error::Error;
};

// Operand shapes that cannot be combined.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Arguments outside a function's mathematical domain.
class DomainError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

}  // namespace scaleformer
