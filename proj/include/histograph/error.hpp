#pragma once

#include <stdexcept>
#include <string>

namespace histograph {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller-supplied value violates an operation's precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Raster file decoding failure. Each failure mode has its own kind so
/// callers can tell a bad header from a short file.
class ParseError : public Error {
public:
    enum class Kind { MalformedHeader, Truncated, UnsupportedMaxval, Io };

    ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// A JSON/CSV document does not match the expected schema. `key()` names
/// the offending field.
class SchemaError : public Error {
public:
    SchemaError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Non-finite values appeared during an optimization.
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace histograph
