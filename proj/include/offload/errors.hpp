#pragma once

#include <stdexcept>
#include <string>

namespace offload {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration; `field()` names the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error("invalid configuration field '" + field + "': " + what), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

class InvalidActionError : public Error {
public:
    InvalidActionError(int action, int num_servers)
        : Error("action " + std::to_string(action) + " out of range [0, " +
                std::to_string(num_servers) + "]"),
          action_(action) {}
    int action() const noexcept { return action_; }

private:
    int action_;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// A decision string could not be interpreted; `raw()` holds the offending text.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw) : Error(what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

/// A parsed decision names a server that does not exist in the current topology.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Transport-level failure that survived every retry.
class RemoteError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace offload
