#pragma once

#include <stdexcept>
#include <string>

namespace resin {

enum class ErrorCode {
    UnsupportedFormat,
    CorruptHeader,
    IoError,
    EmptySignal,
    InvalidRange,
    InvalidArgument,
    LengthMismatch,
    SilentReference,
    NonFiniteParams,
    TooFewSamples,
    BadMagic,
    VersionMismatch,
    DimensionMismatch,
    InputTooShort,
    InvalidBreakFrequency,
    EmptyDataset,
    UnreadableFile,
    DegenerateSignal,
    NonFiniteLoss,
    CheckpointIoError,
    UnknownPreset,
};

const char* error_code_name(ErrorCode code);

// Single exception type for the whole library; the code identifies the
// contract violation, the message carries context.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void raise(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace resin
