#include "sbomchain/error.hpp"

namespace sbomchain {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::MalformedDocument: return "MalformedDocument";
    case ErrorKind::UnsupportedSpecVersion: return "UnsupportedSpecVersion";
    case ErrorKind::MalformedSnapshot: return "MalformedSnapshot";
    case ErrorKind::MalformedList: return "MalformedList";
    case ErrorKind::MalformedChainFile: return "MalformedChainFile";
    case ErrorKind::DuplicateChainId: return "DuplicateChainId";
    case ErrorKind::ChainTooShort: return "ChainTooShort";
    case ErrorKind::UnknownRelation: return "UnknownRelation";
    case ErrorKind::UnknownFormat: return "UnknownFormat";
    case ErrorKind::UnknownStrategy: return "UnknownStrategy";
    case ErrorKind::IncompatibleVersion: return "IncompatibleVersion";
    case ErrorKind::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::FeatureSpecMismatch: return "FeatureSpecMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::NetworkError: return "NetworkError";
    case ErrorKind::RateLimited: return "RateLimited";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::SingleClassValidation: return "SingleClassValidation";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InsufficientNegativeSpace: return "InsufficientNegativeSpace";
    case ErrorKind::DegenerateSplit: return "DegenerateSplit";
    case ErrorKind::GradientCheckFailed: return "GradientCheckFailed";
    }
    return "Unknown";
}

bool is_input_error(ErrorKind kind) {
    return static_cast<int>(kind) <= static_cast<int>(ErrorKind::Io);
}

} // namespace sbomchain
