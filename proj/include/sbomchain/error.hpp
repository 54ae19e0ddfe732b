#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sbomchain {

enum class ErrorKind {
    // input problems (CLI exit code 3)
    MalformedDocument,
    UnsupportedSpecVersion,
    MalformedSnapshot,
    MalformedList,
    MalformedChainFile,
    DuplicateChainId,
    ChainTooShort,
    UnknownRelation,
    UnknownFormat,
    UnknownStrategy,
    IncompatibleVersion,
    IncompatibleCheckpoint,
    CorruptCheckpoint,
    FeatureSpecMismatch,
    InvalidArgument,
    Io,
    // runtime problems (CLI exit code 4)
    NetworkError,
    RateLimited,
    ShapeMismatch,
    NonFiniteValue,
    NonFiniteGradient,
    EmptyTrainingSet,
    EmptySplit,
    SingleClassValidation,
    SingleClass,
    LengthMismatch,
    InsufficientNegativeSpace,
    DegenerateSplit,
    GradientCheckFailed,
};

std::string_view to_string(ErrorKind kind);

/// True for kinds caused by bad user input rather than a failed computation.
bool is_input_error(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace sbomchain
