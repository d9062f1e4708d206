#include "tdm/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tdm {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidConfig: return "InvalidConfig";
        case ErrorCode::InvalidTopology: return "InvalidTopology";
        case ErrorCode::InfeasibleTiming: return "InfeasibleTiming";
        case ErrorCode::NegativeParameter: return "NegativeParameter";
        case ErrorCode::MixedProgramKinds: return "MixedProgramKinds";
        case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
        case ErrorCode::SampleRateMismatch: return "SampleRateMismatch";
        case ErrorCode::InsufficientSamples: return "InsufficientSamples";
        case ErrorCode::TopologyEncodingUnsupported: return "TopologyEncodingUnsupported";
        case ErrorCode::InvalidOneHot: return "InvalidOneHot";
        case ErrorCode::InvalidSelectWord: return "InvalidSelectWord";
        case ErrorCode::InvalidSlotState: return "InvalidSlotState";
        case ErrorCode::ZoneOutOfRange: return "ZoneOutOfRange";
        case ErrorCode::NumericalBlowup: return "NumericalBlowup";
        case ErrorCode::AmplitudeExceedsFullScale: return "AmplitudeExceedsFullScale";
        case ErrorCode::InvalidWaveform: return "InvalidWaveform";
        case ErrorCode::ZeroDrive: return "ZeroDrive";
        case ErrorCode::FormatError: return "FormatError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

Rational rational_from_double(double value) {
    if (!std::isfinite(value)) {
        throw Error(ErrorCode::InvalidConfig, "non-finite rate or duration");
    }
    const double scaled = value * 1000.0;
    const double rounded = std::round(scaled);
    if (std::abs(rounded) > 9.0e15 ||
        std::abs(scaled - rounded) > 1e-9 * std::max(1.0, std::abs(scaled))) {
        std::ostringstream os;
        os << "value " << value << " is not representable at 1e-3 resolution";
        throw Error(ErrorCode::InvalidConfig, os.str());
    }
    return Rational(static_cast<std::int64_t>(rounded), 1000);
}

std::int64_t require_integral(double value, const char* what, double rel_tol) {
    const double rounded = std::round(value);
    if (!std::isfinite(value) || std::abs(value - rounded) > rel_tol * std::max(1.0, std::abs(value))) {
        std::ostringstream os;
        os << what << " must be an integer, got " << value;
        throw Error(ErrorCode::InvalidConfig, os.str());
    }
    return static_cast<std::int64_t>(rounded);
}

std::int32_t DacSpec::quantize(double volts) const {
    const double code = std::round(volts / lsb_v());
    const double limit = max_code();
    return static_cast<std::int32_t>(std::clamp(code, -limit, limit));
}

int DemuxStage::address_bits() const {
    int bits = 0;
    while ((1 << bits) < fanout) {
        ++bits;
    }
    return bits;
}

int DemuxTopology::total_channels() const {
    int n = 1;
    for (const auto& s : stages) {
        n *= s.outputs_used;
    }
    return stages.empty() ? 0 : n;
}

int DemuxTopology::slots_per_refresh() const {
    if (stages.size() == 2 && charging == ChargingMode::TwoStep) {
        return (stages[0].outputs_used + 1) * stages[1].outputs_used;
    }
    return total_channels();
}

bool CrosstalkMatrix::is_zero() const {
    return std::all_of(data_.begin(), data_.end(), [](double c) { return c == 0.0; });
}

std::int64_t SystemConfig::slots_per_period() const {
    const Rational ratio = dac.update_rate_hz / per_channel_rate_hz;
    return ratio.denominator() == 1 ? ratio.numerator() : -1;
}

double first_stage_storage_f(const DemuxTopology& topology) {
    if (!topology.two_stage()) {
        return 0.0;
    }
    return topology.stages[0].hold_capacitance_f + topology.stages[1].sw.c_on_f;
}

double ladder_tau(double r1, double c1, double r2, double c2) {
    if (c1 <= 0.0) {
        return (r1 + r2) * c2;
    }
    const double g1 = 1.0 / r1;
    const double g2 = 1.0 / r2;
    const double trace = (g1 + g2) / c1 + g2 / c2;
    const double det = g1 * g2 / (c1 * c2);
    const double disc = std::sqrt(std::max(0.0, trace * trace - 4.0 * det));
    const double lambda_min = 2.0 * det / (trace + disc);
    return 1.0 / lambda_min;
}

double n_tau_for(double full_swing_v, double epsilon_v) {
    return std::log(full_swing_v / epsilon_v);
}

namespace {

class IssueCollector {
public:
    void add(ErrorCode code, std::string message) { issues_.push_back({code, std::move(message)}); }
    template <typename... Parts>
    void addf(ErrorCode code, const Parts&... parts) {
        std::ostringstream os;
        (os << ... << parts);
        add(code, os.str());
    }
    std::vector<ConfigIssue> take() { return std::move(issues_); }
    [[nodiscard]] bool empty() const { return issues_.empty(); }

private:
    std::vector<ConfigIssue> issues_;
};

void check_stage(const DemuxStage& s, std::size_t index, IssueCollector& out) {
    if (s.fanout < 1 || s.outputs_used < 1 || s.outputs_used > s.fanout) {
        out.addf(ErrorCode::InvalidTopology, "stage ", index, ": outputs_used ", s.outputs_used,
                 " must lie in [1, fanout=", s.fanout, "]");
    }
    if (s.hold_capacitance_f < 0.0) {
        out.addf(ErrorCode::NegativeParameter, "stage ", index, ": hold_capacitance_f < 0");
    }
    if (!(s.sw.r_on_ohm > 0.0)) {
        out.addf(ErrorCode::NegativeParameter, "stage ", index, ": switch r_on_ohm must be > 0");
    }
    if (s.sw.c_on_f < 0.0) {
        out.addf(ErrorCode::NegativeParameter, "stage ", index, ": switch c_on_f < 0");
    }
    if (s.sw.off_leak_resistance_ohm && !(*s.sw.off_leak_resistance_ohm > 0.0)) {
        out.addf(ErrorCode::NegativeParameter, "stage ", index, ": off_leak_resistance_ohm must be > 0");
    }
}

void check_timing_feasibility(const SystemConfig& cfg, IssueCollector& out) {
    if (cfg.dac.update_rate_hz <= 0 || cfg.per_channel_rate_hz <= 0) {
        return;  // reported elsewhere
    }
    const int slots = cfg.topology.slots_per_refresh();
    const Rational ratio = cfg.dac.update_rate_hz / cfg.per_channel_rate_hz;
    if (ratio.denominator() != 1) {
        out.addf(ErrorCode::InfeasibleTiming, "dac rate / per-channel rate = ", to_double(ratio),
                 " is not an integer number of slots");
    } else if (ratio.numerator() < slots) {
        out.addf(ErrorCode::InfeasibleTiming, "per-channel rate ", to_double(cfg.per_channel_rate_hz),
                 " Hz needs ", slots, " slots per refresh but the DAC provides only ", ratio.numerator());
    }
    const double slot_s = to_double(Rational(1) / cfg.dac.update_rate_hz);
    const double reserve = cfg.k_settle * cfg.dac.settle_time_constant_s;
    if (slot_s - reserve <= 0.0) {
        out.addf(ErrorCode::InfeasibleTiming, "slot of ", slot_s, " s leaves no charge time after ",
                 cfg.k_settle, " DAC settle time constants (", reserve, " s)");
    }
}

}  // namespace

ValidationResult validate_config(const SystemConfig& cfg) {
    IssueCollector out;

    const auto& dac = cfg.dac;
    if (dac.update_rate_hz <= 0) {
        out.add(ErrorCode::NegativeParameter, "dac update_rate_hz must be > 0");
    }
    if (dac.resolution_bits < 8 || dac.resolution_bits > 20) {
        out.addf(ErrorCode::InvalidConfig, "dac resolution_bits ", dac.resolution_bits, " outside [8, 20]");
    }
    if (!(dac.full_scale_v > 0.0)) {
        out.add(ErrorCode::NegativeParameter, "dac full_scale_v must be > 0");
    }
    if (dac.settle_time_constant_s < 0.0) {
        out.add(ErrorCode::NegativeParameter, "dac settle_time_constant_s < 0");
    }
    if (cfg.k_settle < 0) {
        out.add(ErrorCode::NegativeParameter, "k_settle < 0");
    }
    if (cfg.settle_refresh_budget < 1) {
        out.add(ErrorCode::InvalidConfig, "settle_refresh_budget must be >= 1");
    }

    const auto& topo = cfg.topology;
    if (topo.stages.empty() || topo.stages.size() > 2) {
        out.addf(ErrorCode::InvalidTopology, "stage count ", topo.stages.size(), " not in {1, 2}");
    }
    for (std::size_t i = 0; i < topo.stages.size(); ++i) {
        check_stage(topo.stages[i], i, out);
    }
    if (!topo.stages.empty() && !(topo.stages.back().hold_capacitance_f > 0.0)) {
        out.add(ErrorCode::InvalidTopology, "output stage needs a holding capacitance > 0");
    }
    if (topo.two_stage() && topo.charging == ChargingMode::TwoStep && !(first_stage_storage_f(topo) > 0.0)) {
        out.add(ErrorCode::InvalidTopology,
                "two-step charging needs first-stage storage (C1 + stage-2 c_on) > 0");
    }

    int expected_n = topo.total_channels();
    if (cfg.routing) {
        const auto& r = *cfg.routing;
        if (r.k_demux_outputs < 1 || r.m_switch_fanout < 1) {
            out.add(ErrorCode::InvalidTopology, "routing K and M must be >= 1");
        } else if (r.active_group < 0 || r.active_group >= r.m_switch_fanout) {
            out.addf(ErrorCode::InvalidTopology, "routing active_group ", r.active_group, " outside [0, ",
                     r.m_switch_fanout, ")");
        }
        if (r.k_demux_outputs != topo.total_channels()) {
            out.addf(ErrorCode::InvalidTopology, "routing K=", r.k_demux_outputs,
                     " must equal the demux channel count ", topo.total_channels());
        }
        expected_n = r.electrode_count();
    }
    if (cfg.electrode_count != expected_n) {
        out.addf(ErrorCode::InvalidTopology, "electrode_count ", cfg.electrode_count, " != ", expected_n,
                 " implied by the topology");
    }

    if (cfg.leakage.droop_rate_v_per_s != 0.0) {
        if (cfg.leakage.reference_voltage_v == 0.0) {
            out.add(ErrorCode::InvalidConfig, "leakage reference_voltage_v must be nonzero with a droop rate");
        }
        for (const auto& s : topo.stages) {
            if (s.sw.off_leak_resistance_ohm) {
                out.add(ErrorCode::InvalidConfig,
                        "droop_rate and off_leak_resistance_ohm are mutually exclusive leakage models");
                break;
            }
        }
    }

    const auto n = static_cast<std::size_t>(std::max(cfg.electrode_count, 0));
    if (cfg.crosstalk.size() != n) {
        out.addf(ErrorCode::InvalidConfig, "crosstalk matrix is ", cfg.crosstalk.size(), "x",
                 cfg.crosstalk.size(), ", expected ", n, "x", n);
    } else {
        for (std::size_t v = 0; v < n; ++v) {
            for (std::size_t a = 0; a < n; ++a) {
                const double c = cfg.crosstalk.at(v, a);
                if (v == a && c != 0.0) {
                    out.addf(ErrorCode::InvalidConfig, "crosstalk diagonal entry ", v, " must be 0");
                } else if (!(std::abs(c) < 1.0)) {
                    out.addf(ErrorCode::InvalidConfig, "crosstalk coefficient [", v, "][", a, "] = ", c,
                             " must satisfy |c| < 1");
                }
            }
        }
    }

    if (cfg.per_channel_rate_hz <= 0) {
        out.add(ErrorCode::NegativeParameter, "per_channel_rate_hz must be > 0");
    }
    if (topo.stages.size() == 1 || topo.stages.size() == 2) {
        check_timing_feasibility(cfg, out);
    }

    ValidationResult result;
    result.issues = out.take();
    if (result.issues.empty()) {
        result.config = cfg;
    }
    return result;
}

const SystemConfig& require_valid(const SystemConfig& cfg) {
    auto result = validate_config(cfg);
    if (!result.ok()) {
        std::ostringstream os;
        for (std::size_t i = 0; i < result.issues.size(); ++i) {
            os << (i ? "; " : "") << to_string(result.issues[i].code) << ": " << result.issues[i].message;
        }
        throw Error(result.issues.front().code, os.str());
    }
    return cfg;
}

TimingBudget derive_timing(const SystemConfig& cfg) {
    TimingBudget budget;
    budget.slot_duration_s = Rational(1) / cfg.dac.update_rate_hz;
    budget.dac_settle_reserve_s = cfg.k_settle * cfg.dac.settle_time_constant_s;
    budget.charge_time_s = to_double(budget.slot_duration_s) - budget.dac_settle_reserve_s;
    if (budget.charge_time_s <= 0.0) {
        throw Error(ErrorCode::InfeasibleTiming, "no charge time left after DAC settling");
    }

    auto push = [&](std::string step, double tau) {
        budget.per_node_tau.push_back({std::move(step), tau, std::exp(-budget.charge_time_s / tau)});
    };

    const auto& stages = cfg.topology.stages;
    if (stages.size() == 1) {
        push("direct", stages[0].sw.r_on_ohm * stages[0].hold_capacitance_f);
    } else {
        const double r1 = stages[0].sw.r_on_ohm;
        const double r2 = stages[1].sw.r_on_ohm;
        const double c_store = first_stage_storage_f(cfg.topology);
        const double c_out = stages[1].hold_capacitance_f;
        if (cfg.topology.charging == ChargingMode::TwoStep) {
            push("stage1_charge", r1 * c_store);
            push("stage2_share", r2 * c_store * c_out / (c_store + c_out));
            push("stage2_held", ladder_tau(r1, c_store, r2, c_out));
        } else {
            push("direct_ladder", ladder_tau(r1, c_store, r2, c_out));
        }
    }
    return budget;
}

}  // namespace tdm
