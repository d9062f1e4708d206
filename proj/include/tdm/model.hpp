#pragma once

// Hardware description of one TDM voltage-distribution chain: a DAC feeding
// a one- or two-stage analog demultiplexer tree with holding capacitors,
// plus the parasitic and leakage parameters the simulator needs.

#include "tdm/error.hpp"
#include "tdm/timing.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tdm {

struct DacSpec {
    Rational update_rate_hz{1};
    int resolution_bits = 16;
    double full_scale_v = 10.0;            ///< symmetric output range +/- full_scale_v
    double settle_time_constant_s = 0.0;   ///< first-order DAC + amplifier settling

    /// Codes span [-max_code(), max_code()] so that 0 V and +/-full scale are exact.
    [[nodiscard]] std::int32_t max_code() const { return (std::int32_t{1} << (resolution_bits - 1)) - 1; }
    [[nodiscard]] double lsb_v() const { return full_scale_v / max_code(); }
    [[nodiscard]] std::int32_t quantize(double volts) const;
    [[nodiscard]] double dequantize(std::int32_t code) const { return code * lsb_v(); }

    friend bool operator==(const DacSpec&, const DacSpec&) = default;
};

struct SwitchSpec {
    double r_on_ohm = 0.0;
    double c_on_f = 0.0;                   ///< lumped on the switch's common (input) node
    double injected_charge_c = 0.0;        ///< per OFF->ON transition, onto the output-side node
    std::optional<double> off_leak_resistance_ohm;

    friend bool operator==(const SwitchSpec&, const SwitchSpec&) = default;
};

struct DemuxStage {
    int fanout = 1;
    int outputs_used = 1;
    SwitchSpec sw;
    double hold_capacitance_f = 0.0;
    bool has_decoder = false;

    /// Address lines of a decoder-addressed switch (ceil(log2(fanout))).
    [[nodiscard]] int address_bits() const;

    friend bool operator==(const DemuxStage&, const DemuxStage&) = default;
};

enum class ChargingMode {
    TwoStep,     ///< charge first-stage nodes one by one, then share into the second stage
    SingleStep,  ///< one slot per channel with both stages conducting
};

struct DemuxTopology {
    std::vector<DemuxStage> stages;
    ChargingMode charging = ChargingMode::TwoStep;

    [[nodiscard]] int total_channels() const;
    [[nodiscard]] bool two_stage() const { return stages.size() == 2; }
    /// Slots needed to refresh every channel once.
    [[nodiscard]] int slots_per_refresh() const;

    friend bool operator==(const DemuxTopology&, const DemuxTopology&) = default;
};

/// 1:M switch network behind each of the K demux outputs.
struct DynamicRouting {
    int k_demux_outputs = 1;
    int m_switch_fanout = 1;
    int active_group = 0;

    [[nodiscard]] int electrode_count() const { return k_demux_outputs * m_switch_fanout; }

    friend bool operator==(const DynamicRouting&, const DynamicRouting&) = default;
};

/// Linear hold droop, proportional to the held voltage.
struct LeakageSpec {
    double droop_rate_v_per_s = 0.0;
    double reference_voltage_v = 10.0;

    friend bool operator==(const LeakageSpec&, const LeakageSpec&) = default;
};

/// Dense N x N coupling of committed voltage steps: victim row, aggressor column.
/// Stored column-major so one aggressor's couplings are contiguous.
class CrosstalkMatrix {
public:
    CrosstalkMatrix() = default;
    explicit CrosstalkMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {}

    [[nodiscard]] std::size_t size() const { return n_; }
    [[nodiscard]] double at(std::size_t victim, std::size_t aggressor) const { return data_[aggressor * n_ + victim]; }
    void set(std::size_t victim, std::size_t aggressor, double value) { data_[aggressor * n_ + victim] = value; }
    [[nodiscard]] std::span<const double> column(std::size_t aggressor) const {
        return {data_.data() + aggressor * n_, n_};
    }
    [[nodiscard]] bool is_zero() const;

    friend bool operator==(const CrosstalkMatrix&, const CrosstalkMatrix&) = default;

private:
    std::size_t n_ = 0;
    std::vector<double> data_;
};

struct SystemConfig {
    std::string name;
    DacSpec dac;
    DemuxTopology topology;
    std::optional<DynamicRouting> routing;
    LeakageSpec leakage;
    CrosstalkMatrix crosstalk;
    Rational per_channel_rate_hz{1};
    int electrode_count = 0;
    int k_settle = 5;                  ///< DAC settle time constants reserved per slot
    int settle_refresh_budget = 8;     ///< refreshes a charge-shared node may take to settle

    /// Channels addressed by the demux tree (K when routing is present).
    [[nodiscard]] int demux_channels() const { return topology.total_channels(); }
    /// DAC slots in one per-channel period: dac rate / per-channel rate.
    [[nodiscard]] std::int64_t slots_per_period() const;
    [[nodiscard]] TickClock clock(int oversampling) const { return {dac.update_rate_hz, oversampling}; }

    friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

struct ConfigIssue {
    ErrorCode code;
    std::string message;
};

struct ValidationResult {
    std::optional<SystemConfig> config;   ///< set iff issues is empty
    std::vector<ConfigIssue> issues;

    [[nodiscard]] bool ok() const { return issues.empty(); }
};

/// Checks every type invariant and the frame timing; collects all problems.
[[nodiscard]] ValidationResult validate_config(const SystemConfig& cfg);

/// validate_config, throwing the first issue (message lists all of them).
const SystemConfig& require_valid(const SystemConfig& cfg);

struct NodeTau {
    std::string step;        ///< charging step this time constant belongs to
    double tau_s = 0.0;
    double settle_fraction = 0.0;   ///< exp(-charge_time / tau)
};

struct TimingBudget {
    Rational slot_duration_s;
    double dac_settle_reserve_s = 0.0;
    double charge_time_s = 0.0;
    std::vector<NodeTau> per_node_tau;
};

/// Slot duration, RC time constants of every charging step and the residual
/// fraction each leaves after the time remaining once the DAC has settled.
[[nodiscard]] TimingBudget derive_timing(const SystemConfig& cfg);

/// Capacitance stored on a first-stage node (C1 plus the second-stage on-capacitance).
[[nodiscard]] double first_stage_storage_f(const DemuxTopology& topology);

/// Slowest time constant of source -r1- node(c1) -r2- node(c2); c1 may be zero.
[[nodiscard]] double ladder_tau(double r1, double c1, double r2, double c2);

/// Number of settle time constants needed to bring a full-swing step within epsilon.
[[nodiscard]] double n_tau_for(double full_swing_v, double epsilon_v);

}  // namespace tdm
