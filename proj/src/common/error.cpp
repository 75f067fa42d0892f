#include "xrchat/error.hpp"

namespace xrchat {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidEncoding: return "InvalidEncoding";
        case ErrorCode::EmptyDocument: return "EmptyDocument";
        case ErrorCode::OversizeSection: return "OversizeSection";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::DuplicateChunk: return "DuplicateChunk";
        case ErrorCode::UnknownDocument: return "UnknownDocument";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::AgentUnavailable: return "AgentUnavailable";
        case ErrorCode::BadPayload: return "BadPayload";
        case ErrorCode::OracleUnavailable: return "OracleUnavailable";
        case ErrorCode::EmptyGroundTruth: return "EmptyGroundTruth";
        case ErrorCode::Io: return "Io";
    }
    return "Unknown";
}

}  // namespace xrchat
