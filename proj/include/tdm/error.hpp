#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tdm {

enum class ErrorCode {
    InvalidConfig,
    InvalidTopology,
    InfeasibleTiming,
    NegativeParameter,
    MixedProgramKinds,
    ChannelCountMismatch,
    SampleRateMismatch,
    InsufficientSamples,
    TopologyEncodingUnsupported,
    InvalidOneHot,
    InvalidSelectWord,
    InvalidSlotState,
    ZoneOutOfRange,
    NumericalBlowup,
    AmplitudeExceedsFullScale,
    InvalidWaveform,
    ZeroDrive,
    FormatError,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a stable error code alongside the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace tdm
