#pragma once

#include <stdexcept>
#include <string>

namespace riskmap {

enum class ErrorCode {
    InvalidArgument,
    SelfLoop,
    DegenerateSpec,
    TooLarge,
    NonFinite,
    EmptyPopulation,
    RejectionExhausted,
    AllRestartsFailed,
    Parse,
};

const char* to_string(ErrorCode code);

/// Single exception type for the library; the code tells callers (and the
/// CLI exit-code mapping) what went wrong.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace riskmap
