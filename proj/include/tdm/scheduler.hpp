#pragma once

// Compiles voltage programs into TDM frames: one DAC code and one demux
// select word per slot. Two-stage trees use the two-step sequence (charge
// every first-stage node of a group, then share into the second stage);
// one-stage trees deliver each channel directly.

#include "tdm/model.hpp"
#include "tdm/waveforms.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tdm {

enum class SlotPurpose : std::uint8_t {
    Stage1Charge = 0,
    Stage2Deliver = 1,
    DirectDeliver = 2,
    Idle = 3,
};

[[nodiscard]] std::string_view to_string(SlotPurpose purpose);

/// Conducting output per stage, or nullopt when that stage is off.
using SwitchStates = std::vector<std::optional<int>>;

struct SelectWord {
    std::uint32_t bits = 0;
    int width = 0;

    /// MSB-first rendering, `width` characters.
    [[nodiscard]] std::string to_binary() const;

    friend bool operator==(const SelectWord&, const SelectWord&) = default;
};

struct Slot {
    int index = 0;                        ///< position within the frame
    std::int32_t dac_code = 0;
    double dac_target_v = 0.0;
    SelectWord select_word;
    SwitchStates stage_states;
    SlotPurpose purpose = SlotPurpose::Idle;
    std::optional<int> source_channel;    ///< channel whose value the DAC outputs
    std::vector<int> delivered_channels;  ///< channels whose output node is refreshed by this slot

    friend bool operator==(const Slot&, const Slot&) = default;
};

struct Frame {
    std::vector<Slot> slots;
    int slots_per_refresh = 0;
    std::vector<int> channels_covered;    ///< sorted

    friend bool operator==(const Frame&, const Frame&) = default;
};

using FrameStream = std::vector<Frame>;

/// Single frame holding DC programs (one per demux channel).
/// Throws MixedProgramKinds, ChannelCountMismatch.
[[nodiscard]] Frame compile_static_frame(const SystemConfig& cfg, const std::vector<VoltageProgram>& programs);

/// One frame per per-channel sample period over `horizon_s`; frame r carries sample r of every channel.
/// DC programs are accepted and repeat their level. Throws SampleRateMismatch, InsufficientSamples.
[[nodiscard]] FrameStream compile_dynamic_stream(const SystemConfig& cfg, const std::vector<VoltageProgram>& programs,
                                                 double horizon_s);

/// Frame for explicit per-channel values (index = channel id).
[[nodiscard]] Frame compile_frame(const SystemConfig& cfg, std::span<const double> values);

/// Stream in which only `active_channel` is refreshed after the first frame; every other slot idles.
/// `values_per_frame[r]` holds the active channel's value for frame r; the first frame sets every
/// other channel to `hold_v`.
[[nodiscard]] FrameStream compile_single_channel_stream(const SystemConfig& cfg, int active_channel,
                                                        std::span<const double> values_per_frame,
                                                        double hold_v = 0.0);

/// Width of the select word for the config's topology.
[[nodiscard]] int select_width(const SystemConfig& cfg);

[[nodiscard]] SelectWord encode_select(const SystemConfig& cfg, const Slot& slot);
[[nodiscard]] SwitchStates decode_select(const SystemConfig& cfg, const SelectWord& word);

struct ElectrodeLink {
    int electrode = 0;
    std::optional<int> demux_output;      ///< nullopt: disconnected, holding
};

struct RoutingState {
    int zone = 0;
    std::vector<ElectrodeLink> links;

    [[nodiscard]] int addressable() const { return static_cast<int>(links.size()); }
};

/// 1:M network state connecting each demux output k to electrode zone*K + k.
[[nodiscard]] RoutingState route_dynamic(const SystemConfig& cfg, int zone);

enum class ViolationKind {
    DacSettle,         ///< slot shorter than the DAC settle reserve
    RcSettle,          ///< RC path cannot settle within epsilon in the remaining time
    ChargeStarvation,  ///< charge sharing needs more refreshes than the budget allows
    VoltageDivision,   ///< shared stage-2 address connects stale first-stage nodes to outputs
};

[[nodiscard]] std::string_view to_string(ViolationKind kind);

struct TimingViolation {
    int slot = 0;
    ViolationKind kind = ViolationKind::RcSettle;
    double required_s = 0.0;     ///< time (or refreshes, for ChargeStarvation) needed
    double available_s = 0.0;    ///< time (or refresh budget) available
    std::string message;
};

/// Per-slot feasibility at settling precision `epsilon_v`; empty iff every slot is feasible.
[[nodiscard]] std::vector<TimingViolation> check_timing(const SystemConfig& cfg, const Frame& frame,
                                                        double epsilon_v = 1e-3);

struct RateReport {
    Rational effective_hz;
    Rational nominal_hz;
};

[[nodiscard]] RateReport effective_update_rate(const SystemConfig& cfg, const Frame& frame);

}  // namespace tdm
