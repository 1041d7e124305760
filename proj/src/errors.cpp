#include "riskmap/errors.hpp"

namespace riskmap {

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::SelfLoop: return "SelfLoop";
    case ErrorCode::DegenerateSpec: return "DegenerateSpec";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyPopulation: return "EmptyPopulation";
    case ErrorCode::RejectionExhausted: return "RejectionExhausted";
    case ErrorCode::AllRestartsFailed: return "AllRestartsFailed";
    case ErrorCode::Parse: return "Parse";
    }
    return "Unknown";
}

} // namespace riskmap
