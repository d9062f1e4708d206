#pragma once

// Substep simulation of the analog chain executing a compiled frame stream.
//
// Node layout: electrodes occupy [0, N); a two-stage tree adds its first-stage
// nodes at [N, N + S1). The DAC output is a separate state probed as "dac".

#include "tdm/scheduler.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace tdm {

struct SimOptions {
    int oversampling = 16;               ///< substeps per slot, >= 4
    std::vector<std::string> probe;      ///< node ids to record; empty records every node
    std::uint64_t seed = 0;
    double noise_rms_v = 0.0;            ///< white noise added to the DAC target per substep; off by default
    std::vector<double> initial_voltages;   ///< one per circuit node, or empty for all zero
};

enum class EventKind : std::uint8_t { SlotStart = 0, SwitchOn = 1, SwitchOff = 2 };

[[nodiscard]] std::string_view to_string(EventKind kind);

struct TraceEvent {
    Tick tick = 0;
    EventKind kind = EventKind::SlotStart;
    std::int64_t slot = 0;               ///< global slot index
    int stage = -1;                      ///< switching stage, -1 for slot markers
    int output = -1;                     ///< switch output, -1 for slot markers

    friend bool operator==(const TraceEvent&, const TraceEvent&) = default;
};

struct TraceSet {
    Rational tick_seconds{0};
    int oversampling = 0;
    std::vector<Tick> ticks;             ///< 0 .. total ticks inclusive
    std::vector<std::string> node_ids;
    std::vector<std::vector<double>> series;   ///< series[k][t] for node_ids[k]
    std::vector<TraceEvent> events;
    std::vector<std::vector<double>> slot_end; ///< electrode voltages at the end of every slot

    [[nodiscard]] double time_s(std::size_t index) const { return to_double(Rational(ticks[index]) * tick_seconds); }
    /// Series of a probed node; throws InvalidConfig when the node was not probed.
    [[nodiscard]] const std::vector<double>& series_for(std::string_view node_id) const;

    friend bool operator==(const TraceSet&, const TraceSet&) = default;
};

/// Names of every circuit node, in node-index order.
[[nodiscard]] std::vector<std::string> node_names(const SystemConfig& cfg);

/// Electrode driven by demux channel `channel` (zone offset applied with routing).
[[nodiscard]] int electrode_of_channel(const SystemConfig& cfg, int channel);

/// Throws NumericalBlowup when a node leaves the +/-(full scale + 1 V) guard band.
[[nodiscard]] TraceSet run(const SystemConfig& cfg, const FrameStream& stream, const SimOptions& opts = {});

/// Trace of one channel's electrode with the sample indices at the end of its delivery slots.
[[nodiscard]] ElectrodeTrace electrode_trace(const SystemConfig& cfg, const FrameStream& stream,
                                             const TraceSet& trace, int channel);

}  // namespace tdm
