#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace duality {

enum class ErrorKind {
    parse,
    domain,
    convergence,
    infeasible,
    bracket,
    ambiguity,
    monotonicity,
    no_path,
    no_oracle,
    param,
    not_found,
    usage,
};

inline std::string_view kind_name(ErrorKind k) {
    switch (k) {
    case ErrorKind::parse: return "ParseError";
    case ErrorKind::domain: return "DomainError";
    case ErrorKind::convergence: return "ConvergenceError";
    case ErrorKind::infeasible: return "InfeasibleError";
    case ErrorKind::bracket: return "BracketError";
    case ErrorKind::ambiguity: return "AmbiguityError";
    case ErrorKind::monotonicity: return "MonotonicityError";
    case ErrorKind::no_path: return "NoPathError";
    case ErrorKind::no_oracle: return "NoOracleError";
    case ErrorKind::param: return "ParamError";
    case ErrorKind::not_found: return "NotFoundError";
    case ErrorKind::usage: return "UsageError";
    }
    return "Error";
}

/// Base of every error raised by the library. `kind()` mirrors the
/// taxonomy used in the JSON error envelope.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    virtual std::optional<std::size_t> position() const noexcept { return std::nullopt; }

private:
    ErrorKind kind_;
};

template <ErrorKind K>
class KindedError : public Error {
public:
    explicit KindedError(const std::string& message) : Error(K, message) {}
};

using DomainError = KindedError<ErrorKind::domain>;
using ConvergenceError = KindedError<ErrorKind::convergence>;
using InfeasibleError = KindedError<ErrorKind::infeasible>;
using BracketError = KindedError<ErrorKind::bracket>;
using AmbiguityError = KindedError<ErrorKind::ambiguity>;
using MonotonicityError = KindedError<ErrorKind::monotonicity>;
using NoPathError = KindedError<ErrorKind::no_path>;
using NoOracleError = KindedError<ErrorKind::no_oracle>;
using ParamError = KindedError<ErrorKind::param>;
using NotFoundError = KindedError<ErrorKind::not_found>;

class ParseError : public Error {
public:
    ParseError(std::size_t position, const std::string& message)
        : Error(ErrorKind::parse, message + " at offset " + std::to_string(position)),
          position_(position) {}
    /// For structured input (JSON payloads, CLI lists) where no offset applies.
    explicit ParseError(const std::string& message) : Error(ErrorKind::parse, message) {}

    std::optional<std::size_t> position() const noexcept override { return position_; }

private:
    std::optional<std::size_t> position_;
};

} // namespace duality

namespace duality {

/// Plain-data copy of an Error, for traces and reports.
struct ErrorInfo {
    ErrorKind kind = ErrorKind::domain;
    std::string message;
    std::optional<std::size_t> position;

    static ErrorInfo from(const Error& e) { return {e.kind(), e.what(), e.position()}; }
};

} // namespace duality
