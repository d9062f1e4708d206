#pragma once

// Figures of merit computed from configs, frames and traces.

#include "tdm/simulator.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace tdm {

/// 20 log10(induced / drive); -infinity when induced is 0. Throws ZeroDrive if drive <= 0.
[[nodiscard]] double crosstalk_db(double drive_amplitude_v, double induced_amplitude_v);

struct CrosstalkMeasurement {
    int aggressor_electrode = 0;
    double drive_amplitude_v = 0.0;          ///< measured on the aggressor electrode
    std::vector<double> induced_amplitude_v;  ///< per electrode
    std::vector<double> db;                  ///< per electrode; 0 for the aggressor itself
};

/// Drives `aggressor_channel` with `drive` (sampled at the per-channel rate) while every other
/// channel is set to 0 V once and then held. Amplitudes are half the peak-to-peak excursion over
/// the last whole number of drive periods (sine) or over everything after the first frame.
[[nodiscard]] CrosstalkMeasurement measure_crosstalk(const SystemConfig& cfg, int aggressor_channel,
                                                     const WaveformSpec& drive, int oversampling = 4);

/// |droop rate| x refresh period at the reference voltage; the period is 1 / per-channel rate.
[[nodiscard]] double droop_per_refresh(const SystemConfig& cfg);
[[nodiscard]] double droop_per_refresh(const LeakageSpec& leak, double refresh_period_s);
/// Peak-to-trough of a probed node over samples [begin, end).
[[nodiscard]] double droop_per_refresh(const TraceSet& trace, std::string_view node_id, std::size_t begin,
                                       std::size_t end);

struct Resources {
    int feedthroughs_tdm = 0;
    int feedthroughs_conventional = 0;
    int dac_channels_tdm = 0;
    int dac_channels_conventional = 0;

    friend bool operator==(const Resources&, const Resources&) = default;
};

/// TDM: one analog line plus the select lines (plus zone-select lines with routing), one DAC.
/// Conventional: one line and one DAC per electrode.
[[nodiscard]] Resources resource_comparison(const SystemConfig& cfg);

struct SettleReport {
    /// errors[c][r]: largest |slot-end voltage - target| of channel c from the end of its r-th
    /// delivery slot up to (not including) its next delivery
    std::vector<std::vector<double>> errors;
    /// delivery_errors[c][r]: the same at the end of the delivery slot only
    std::vector<std::vector<double>> delivery_errors;
    std::vector<double> max_v;
    std::vector<double> mean_v;
    std::vector<double> first_v;
    std::vector<double> last_v;

    [[nodiscard]] double worst() const;
    [[nodiscard]] double worst_last() const;
};

/// Targets are the values the stream charged for each channel; errors are read from slot ends,
/// so disturbances arriving while a channel holds count against its refresh.
[[nodiscard]] SettleReport settle_error(const SystemConfig& cfg, const FrameStream& stream, const TraceSet& trace);

struct MetricsReport {
    std::string name;
    Rational effective_rate_hz;
    Rational nominal_rate_hz;
    int slots_per_refresh = 0;
    std::optional<SettleReport> settle;
    double droop_per_refresh_v = 0.0;
    std::vector<std::vector<double>> crosstalk_db_matrix;   ///< configured couplings, victim row
    Resources resources;
    std::vector<TimingViolation> violations;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] static std::vector<std::string> csv_header();
    [[nodiscard]] std::vector<std::string> csv_row() const;
};

/// Everything computable from the config and a compiled frame; settle error when a trace is given.
[[nodiscard]] MetricsReport make_report(const SystemConfig& cfg, const FrameStream& stream,
                                        const TraceSet* trace = nullptr, double epsilon_v = 1e-3);

}  // namespace tdm
