#pragma once

#include <stdexcept>
#include <string>

namespace emseg {

/// Base of every error raised by the library. Each subclass corresponds to one
/// failure family so callers can map them onto exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes, lengths or layer wiring that do not fit together.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or a diverging computation.
class NumericError : public Error {
public:
    using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Input data that cannot support the requested computation (e.g. an empty class).
class DataError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class PipelineError : public Error {
public:
    using Error::Error;
};

} // namespace emseg
