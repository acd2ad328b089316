#pragma once

#include <stdexcept>
#include <string>

namespace spinphase {

/// Category of a library failure. The CLI maps every category except the
/// configuration/usage/io ones onto the "numerical failure" exit status.
enum class ErrorKind {
    Domain,
    DegenerateField,
    StepSizeUnderflow,
    OverlapLoss,
    BranchJump,
    PoleSingularity,
    GridTooCoarse,
    ArcTooLong,
    LoopNotClosed,
    SelfIntersection,
    PerturbativeRegimeViolation,
    Normalization,
    Config,
    Usage,
    Io,
};

inline const char* to_string(ErrorKind k) {
    switch (k) {
    case ErrorKind::Domain: return "DomainError";
    case ErrorKind::DegenerateField: return "DegenerateField";
    case ErrorKind::StepSizeUnderflow: return "StepSizeUnderflow";
    case ErrorKind::OverlapLoss: return "OverlapLoss";
    case ErrorKind::BranchJump: return "BranchJump";
    case ErrorKind::PoleSingularity: return "PoleSingularity";
    case ErrorKind::GridTooCoarse: return "GridTooCoarse";
    case ErrorKind::ArcTooLong: return "ArcTooLong";
    case ErrorKind::LoopNotClosed: return "LoopNotClosed";
    case ErrorKind::SelfIntersection: return "SelfIntersection";
    case ErrorKind::PerturbativeRegimeViolation: return "PerturbativeRegimeViolation";
    case ErrorKind::Normalization: return "NormalizationError";
    case ErrorKind::Config: return "ConfigError";
    case ErrorKind::Usage: return "UsageError";
    case ErrorKind::Io: return "IoError";
    }
    return "Error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

template <ErrorKind K>
class TypedError : public Error {
public:
    explicit TypedError(const std::string& what) : Error(K, what) {}
};

using DomainError = TypedError<ErrorKind::Domain>;
using DegenerateField = TypedError<ErrorKind::DegenerateField>;
using StepSizeUnderflow = TypedError<ErrorKind::StepSizeUnderflow>;
using OverlapLoss = TypedError<ErrorKind::OverlapLoss>;
using BranchJump = TypedError<ErrorKind::BranchJump>;
using PoleSingularity = TypedError<ErrorKind::PoleSingularity>;
using GridTooCoarse = TypedError<ErrorKind::GridTooCoarse>;
using ArcTooLong = TypedError<ErrorKind::ArcTooLong>;
using LoopNotClosed = TypedError<ErrorKind::LoopNotClosed>;
using SelfIntersection = TypedError<ErrorKind::SelfIntersection>;
using PerturbativeRegimeViolation = TypedError<ErrorKind::PerturbativeRegimeViolation>;
using NormalizationError = TypedError<ErrorKind::Normalization>;
using ConfigError = TypedError<ErrorKind::Config>;
using UsageError = TypedError<ErrorKind::Usage>;
using IoError = TypedError<ErrorKind::Io>;

} // namespace spinphase
