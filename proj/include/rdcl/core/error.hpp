#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rdcl {

/// Base for every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller broke a documented precondition (shape mismatch, bad sizes).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of a function.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration (unknown kinds, sizes a rule cannot satisfy).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Registry lookup of an unknown name.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Unusable input data (unreadable images, empty datasets).
class DataError : public Error {
public:
    using Error::Error;
};

/// A symbol could not be represented by the entropy coder.
class EncodeError : public Error {
public:
    using Error::Error;
};

/// Training diverged or was fed non-finite values.
class TrainingError : public Error {
public:
    using Error::Error;
};

/// Failure while parsing or entropy-decoding a compressed stream.
class DecodeError : public Error {
public:
    enum class Kind { BadMagic, BadVersion, ModelMismatch, Truncated, Corrupt };

    DecodeError(Kind kind, const std::string& what, std::size_t position = 0)
        : Error(what), kind_(kind), position_(position) {}

    Kind kind() const noexcept { return kind_; }
    /// Byte offset at which the problem was detected.
    std::size_t position() const noexcept { return position_; }

private:
    Kind kind_;
    std::size_t position_;
};

}  // namespace rdcl
