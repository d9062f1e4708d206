#pragma once

// Target voltage programs: DC levels, sinusoids and piecewise-linear ramps,
// sampled at the per-channel rate, plus zero-order-hold references used to
// score simulated electrode traces.

#include "tdm/error.hpp"
#include "tdm/timing.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <span>
#include <utility>
#include <variant>
#include <vector>

namespace tdm {

struct DcShape {
    double value_v = 0.0;
};

struct SineShape {
    double amplitude_v = 0.0;
    double frequency_hz = 0.0;
    double phase_rad = 0.0;
    double offset_v = 0.0;
};

struct PwlShape {
    std::vector<std::pair<double, double>> breakpoints;   ///< (time s, volts), strictly increasing time
};

struct WaveformSpec {
    std::variant<DcShape, SineShape, PwlShape> shape;
    double duration_s = 0.0;

    [[nodiscard]] double value_at(double t) const;
    /// Largest |value| the waveform reaches anywhere in time.
    [[nodiscard]] double peak_abs() const;
};

struct DcLevel {
    double volts = 0.0;
};

struct SampledWaveform {
    std::vector<double> samples;
};

/// Target for one demux channel: a held DC value or samples at `rate_hz`.
struct VoltageProgram {
    int channel_id = 0;
    std::variant<DcLevel, SampledWaveform> kind;
    Rational rate_hz{1};

    [[nodiscard]] bool is_dc() const { return std::holds_alternative<DcLevel>(kind); }
    [[nodiscard]] std::size_t sample_count() const;
    /// Value for refresh `index`; DC programs return their level for every index.
    [[nodiscard]] double value(std::size_t index) const;
};

/// Samples `spec` at t = k / rate for k in [0, duration * rate).
/// Throws AmplitudeExceedsFullScale or InvalidWaveform.
[[nodiscard]] VoltageProgram sample(const WaveformSpec& spec, Rational rate_hz, double full_scale_v,
                                    int channel_id = 0);

/// Piecewise-constant reconstruction of a program: value(t) = sample[floor((t - latency) * rate)].
/// Before the first update the reference reports `initial_v`; past the end it holds the last sample.
class ZohReference {
public:
    ZohReference(VoltageProgram program, double latency_s = 0.0, double initial_v = 0.0);

    [[nodiscard]] double operator()(double t) const;
    [[nodiscard]] const VoltageProgram& program() const { return program_; }

private:
    VoltageProgram program_;
    double rate_ = 1.0;
    double latency_ = 0.0;
    double initial_ = 0.0;
};

[[nodiscard]] ZohReference zoh_reference(const VoltageProgram& program, double latency_s = 0.0,
                                         double initial_v = 0.0);

/// Electrode trace: sample times, voltages and the indices of the samples
/// taken at the end of each delivery slot for this electrode.
struct ElectrodeTrace {
    std::vector<double> time_s;
    std::vector<double> volts;
    std::vector<std::size_t> boundary_indices;
};

struct ReconstructionError {
    double rms_boundary_v = 0.0;
    double max_abs_boundary_v = 0.0;
    double rms_full_v = 0.0;
    double max_abs_full_v = 0.0;
};

[[nodiscard]] ReconstructionError reconstruction_error(const ElectrodeTrace& trace, const ZohReference& ref);

// Structured-text and CSV program inputs.
[[nodiscard]] WaveformSpec waveform_from_json(const nlohmann::json& j);
[[nodiscard]] nlohmann::json waveform_to_json(const WaveformSpec& spec);

/// CSV with header `channel,sample_index,voltage_V`; rows in any order, samples dense per channel.
[[nodiscard]] std::vector<VoltageProgram> programs_from_csv(const std::filesystem::path& path, Rational rate_hz);

}  // namespace tdm
