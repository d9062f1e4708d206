#include "tdm/scheduler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <set>
#include <sstream>

namespace tdm {

std::string_view to_string(SlotPurpose purpose) {
    switch (purpose) {
        case SlotPurpose::Stage1Charge: return "Stage1Charge";
        case SlotPurpose::Stage2Deliver: return "Stage2Deliver";
        case SlotPurpose::DirectDeliver: return "DirectDeliver";
        case SlotPurpose::Idle: return "Idle";
    }
    return "Unknown";
}

std::string_view to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::DacSettle: return "DacSettle";
        case ViolationKind::RcSettle: return "RcSettle";
        case ViolationKind::ChargeStarvation: return "ChargeStarvation";
        case ViolationKind::VoltageDivision: return "VoltageDivision";
    }
    return "Unknown";
}

std::string SelectWord::to_binary() const {
    std::string s(static_cast<std::size_t>(width), '0');
    for (int b = 0; b < width; ++b) {
        if ((bits >> b) & 1u) {
            s[static_cast<std::size_t>(width - 1 - b)] = '1';
        }
    }
    return s;
}

namespace {

void check_stage_index(const DemuxStage& stage, const std::optional<int>& state, std::size_t index) {
    if (state && (*state < 0 || *state >= stage.outputs_used)) {
        throw Error(ErrorCode::InvalidSlotState,
                    "stage " + std::to_string(index) + " output " + std::to_string(*state) + " not in use");
    }
}

class FrameBuilder {
public:
    explicit FrameBuilder(const SystemConfig& cfg) : cfg_(cfg) {}

    void charge(int stage1, double volts, int channel) {
        push(SlotPurpose::Stage1Charge, {stage1, std::nullopt}, volts, channel, {});
    }
    void deliver(int stage1, int stage2, double volts, int source, std::vector<int> delivered) {
        push(SlotPurpose::Stage2Deliver, {stage1, stage2}, volts, source, std::move(delivered));
    }
    void direct(SwitchStates states, double volts, int channel) {
        push(SlotPurpose::DirectDeliver, std::move(states), volts, channel, {channel});
    }
    void idle() {
        SwitchStates states;
        if (cfg_.topology.two_stage()) {
            // Stage-1 enable is tied high: it stays parked on its last address.
            states = {last_stage1_.value_or(0), std::nullopt};
        } else {
            states = {std::nullopt};
        }
        push(SlotPurpose::Idle, std::move(states), last_dac_, std::nullopt, {});
    }

    void pad_to(std::int64_t total) {
        while (static_cast<std::int64_t>(frame_.slots.size()) < total) {
            idle();
        }
    }

    Frame finish() {
        std::set<int> covered;
        for (std::size_t i = 0; i < frame_.slots.size(); ++i) {
            auto& slot = frame_.slots[i];
            slot.index = static_cast<int>(i);
            slot.dac_code = cfg_.dac.quantize(slot.dac_target_v);
            slot.select_word = encode_select(cfg_, slot);
            covered.insert(slot.delivered_channels.begin(), slot.delivered_channels.end());
        }
        frame_.slots_per_refresh = static_cast<int>(frame_.slots.size());
        frame_.channels_covered.assign(covered.begin(), covered.end());
        Frame out = std::move(frame_);
        frame_ = Frame{};
        return out;
    }

    // Carry DAC and stage-1 state across frames.
    [[nodiscard]] double last_dac() const { return last_dac_; }

private:
    void push(SlotPurpose purpose, SwitchStates states, double volts, std::optional<int> source,
              std::vector<int> delivered) {
        Slot slot;
        slot.purpose = purpose;
        slot.dac_target_v = volts;
        slot.source_channel = source;
        slot.delivered_channels = std::move(delivered);
        if (cfg_.topology.two_stage() && states.front()) {
            last_stage1_ = states.front();
        }
        slot.stage_states = std::move(states);
        last_dac_ = volts;
        frame_.slots.push_back(std::move(slot));
    }

    const SystemConfig& cfg_;
    Frame frame_;
    double last_dac_ = 0.0;
    std::optional<int> last_stage1_;
};

void check_values(const SystemConfig& cfg, std::span<const double> values) {
    if (static_cast<int>(values.size()) != cfg.demux_channels()) {
        throw Error(ErrorCode::ChannelCountMismatch, "expected " + std::to_string(cfg.demux_channels()) +
                                                         " channel values, got " + std::to_string(values.size()));
    }
    for (std::size_t c = 0; c < values.size(); ++c) {
        if (!(std::abs(values[c]) <= cfg.dac.full_scale_v)) {
            std::ostringstream os;
            os << "channel " << c << " target " << values[c] << " V outside +/-" << cfg.dac.full_scale_v << " V";
            throw Error(ErrorCode::AmplitudeExceedsFullScale, os.str());
        }
    }
}

void emit_refresh(const SystemConfig& cfg, std::span<const double> values, FrameBuilder& b) {
    const auto& stages = cfg.topology.stages;
    if (stages.size() == 1) {
        for (int c = 0; c < stages[0].outputs_used; ++c) {
            b.direct({c}, values[static_cast<std::size_t>(c)], c);
        }
        return;
    }
    const int s1 = stages[0].outputs_used;
    const int s2 = stages[1].outputs_used;
    auto channel = [s2](int i, int j) { return i * s2 + j; };
    if (cfg.topology.charging == ChargingMode::SingleStep) {
        for (int c = 0; c < s1 * s2; ++c) {
            b.direct({c / s2, c % s2}, values[static_cast<std::size_t>(c)], c);
        }
        return;
    }
    for (int j = 0; j < s2; ++j) {
        std::vector<int> group;
        for (int i = 0; i < s1; ++i) {
            b.charge(i, values[static_cast<std::size_t>(channel(i, j))], channel(i, j));
            group.push_back(channel(i, j));
        }
        const int held = channel(s1 - 1, j);
        b.deliver(s1 - 1, j, values[static_cast<std::size_t>(held)], held, std::move(group));
    }
}

Frame build_frame(const SystemConfig& cfg, std::span<const double> values, FrameBuilder& b) {
    emit_refresh(cfg, values, b);
    b.pad_to(cfg.slots_per_period());
    return b.finish();
}

std::vector<double> dc_values(const SystemConfig& cfg, const std::vector<VoltageProgram>& programs,
                              bool require_dc) {
    const int n = cfg.demux_channels();
    if (static_cast<int>(programs.size()) != n) {
        throw Error(ErrorCode::ChannelCountMismatch,
                    "expected " + std::to_string(n) + " programs, got " + std::to_string(programs.size()));
    }
    std::vector<double> values(static_cast<std::size_t>(n), 0.0);
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    for (const auto& p : programs) {
        if (p.channel_id < 0 || p.channel_id >= n || seen[static_cast<std::size_t>(p.channel_id)]) {
            throw Error(ErrorCode::ChannelCountMismatch,
                        "program channel ids must cover 0.." + std::to_string(n - 1) + " exactly once");
        }
        seen[static_cast<std::size_t>(p.channel_id)] = true;
        if (require_dc && !p.is_dc()) {
            throw Error(ErrorCode::MixedProgramKinds, "static frames accept DC programs only (channel " +
                                                          std::to_string(p.channel_id) + ")");
        }
        values[static_cast<std::size_t>(p.channel_id)] = p.is_dc() ? p.value(0) : 0.0;
    }
    return values;
}

}  // namespace

Frame compile_frame(const SystemConfig& cfg, std::span<const double> values) {
    require_valid(cfg);
    check_values(cfg, values);
    FrameBuilder b(cfg);
    return build_frame(cfg, values, b);
}

Frame compile_static_frame(const SystemConfig& cfg, const std::vector<VoltageProgram>& programs) {
    require_valid(cfg);
    const auto values = dc_values(cfg, programs, true);
    check_values(cfg, values);
    FrameBuilder b(cfg);
    return build_frame(cfg, values, b);
}

FrameStream compile_dynamic_stream(const SystemConfig& cfg, const std::vector<VoltageProgram>& programs,
                                   double horizon_s) {
    require_valid(cfg);
    (void)dc_values(cfg, programs, false);  // coverage check

    const double frames_exact = horizon_s * to_double(cfg.per_channel_rate_hz);
    const double frames_rounded = std::round(frames_exact);
    if (!(frames_rounded >= 1.0) || std::abs(frames_exact - frames_rounded) > 1e-6 * frames_rounded) {
        std::ostringstream os;
        os << "horizon " << horizon_s << " s is not a positive multiple of the per-channel period";
        throw Error(ErrorCode::SampleRateMismatch, os.str());
    }
    const auto frames = static_cast<std::size_t>(frames_rounded);

    std::vector<const VoltageProgram*> by_channel(programs.size());
    for (const auto& p : programs) {
        if (!p.is_dc()) {
            if (p.rate_hz != cfg.per_channel_rate_hz) {
                throw Error(ErrorCode::SampleRateMismatch,
                            "channel " + std::to_string(p.channel_id) + " sampled at " +
                                std::to_string(to_double(p.rate_hz)) + " Hz, config per-channel rate is " +
                                std::to_string(to_double(cfg.per_channel_rate_hz)) + " Hz");
            }
            if (p.sample_count() < frames) {
                throw Error(ErrorCode::InsufficientSamples,
                            "channel " + std::to_string(p.channel_id) + " has " + std::to_string(p.sample_count()) +
                                " samples, horizon needs " + std::to_string(frames));
            }
        }
        by_channel[static_cast<std::size_t>(p.channel_id)] = &p;
    }

    FrameStream stream;
    stream.reserve(frames);
    FrameBuilder b(cfg);
    std::vector<double> values(by_channel.size());
    for (std::size_t r = 0; r < frames; ++r) {
        for (std::size_t c = 0; c < by_channel.size(); ++c) {
            values[c] = by_channel[c]->value(by_channel[c]->is_dc() ? 0 : r);
        }
        check_values(cfg, values);
        stream.push_back(build_frame(cfg, values, b));
    }
    return stream;
}

FrameStream compile_single_channel_stream(const SystemConfig& cfg, int active_channel,
                                          std::span<const double> values_per_frame, double hold_v) {
    require_valid(cfg);
    const int n = cfg.demux_channels();
    if (active_channel < 0 || active_channel >= n) {
        throw Error(ErrorCode::ChannelCountMismatch, "active channel out of range");
    }
    FrameStream stream;
    FrameBuilder b(cfg);
    std::vector<double> values(static_cast<std::size_t>(n), hold_v);
    const bool two_stage = cfg.topology.two_stage();
    const int s2 = two_stage ? cfg.topology.stages[1].outputs_used : 1;

    for (std::size_t r = 0; r < values_per_frame.size(); ++r) {
        values[static_cast<std::size_t>(active_channel)] = values_per_frame[r];
        check_values(cfg, values);
        if (r == 0) {
            stream.push_back(build_frame(cfg, values, b));
            continue;
        }
        // Reuse the regular slot pattern but idle every slot that does not serve the active channel.
        FrameBuilder pattern(cfg);
        emit_refresh(cfg, values, pattern);
        pattern.pad_to(cfg.slots_per_period());
        const Frame reference = pattern.finish();
        for (const auto& slot : reference.slots) {
            const bool sources = slot.source_channel == active_channel;
            const bool delivers = std::find(slot.delivered_channels.begin(), slot.delivered_channels.end(),
                                            active_channel) != slot.delivered_channels.end();
            const double v = values_per_frame[r];
            if (slot.purpose == SlotPurpose::Stage2Deliver && delivers) {
                b.deliver(active_channel / s2, active_channel % s2, v, active_channel, slot.delivered_channels);
            } else if (slot.purpose == SlotPurpose::Stage1Charge && sources) {
                b.charge(active_channel / s2, v, active_channel);
            } else if (slot.purpose == SlotPurpose::DirectDeliver && sources) {
                b.direct(slot.stage_states, v, active_channel);
            } else {
                b.idle();
            }
        }
        stream.push_back(b.finish());
    }
    return stream;
}

int select_width(const SystemConfig& cfg) {
    const auto& stages = cfg.topology.stages;
    if (stages.size() == 1) {
        return stages[0].has_decoder ? stages[0].address_bits() + 1 : stages[0].outputs_used;
    }
    if (stages.size() == 2 && stages[0].has_decoder && stages[1].has_decoder) {
        return stages[0].address_bits() + stages[1].address_bits() + 1;
    }
    throw Error(ErrorCode::TopologyEncodingUnsupported,
                "select encoding needs decoder-addressed switches on both stages of a two-stage tree");
}

SelectWord encode_select(const SystemConfig& cfg, const Slot& slot) {
    const auto& stages = cfg.topology.stages;
    const int width = select_width(cfg);
    if (slot.stage_states.size() != stages.size()) {
        throw Error(ErrorCode::InvalidSlotState, "slot has switch states for " +
                                                     std::to_string(slot.stage_states.size()) + " stages");
    }
    for (std::size_t s = 0; s < stages.size(); ++s) {
        check_stage_index(stages[s], slot.stage_states[s], s);
    }
    SelectWord word{0, width};
    if (stages.size() == 1) {
        const auto& st = slot.stage_states[0];
        if (!st) {
            return word;
        }
        word.bits = stages[0].has_decoder
                        ? static_cast<std::uint32_t>(*st) | (1u << stages[0].address_bits())
                        : (1u << *st);
        return word;
    }
    const auto& s1 = slot.stage_states[0];
    const auto& s2 = slot.stage_states[1];
    if (!s1) {
        throw Error(ErrorCode::InvalidSlotState, "two-stage slots always address a first-stage output");
    }
    const int a1 = stages[0].address_bits();
    const int a2 = stages[1].address_bits();
    word.bits = static_cast<std::uint32_t>(*s1);
    if (s2) {
        word.bits |= static_cast<std::uint32_t>(*s2) << a1;
        word.bits |= 1u << (a1 + a2);
    }
    return word;
}

SwitchStates decode_select(const SystemConfig& cfg, const SelectWord& word) {
    const auto& stages = cfg.topology.stages;
    const int width = select_width(cfg);
    if (word.width != width || (width < 32 && (word.bits >> width) != 0)) {
        throw Error(ErrorCode::InvalidSelectWord, "select word does not match the " + std::to_string(width) +
                                                      "-line topology");
    }
    auto in_use = [](const DemuxStage& stage, std::uint32_t out) {
        if (out >= static_cast<std::uint32_t>(stage.outputs_used)) {
            throw Error(ErrorCode::InvalidSelectWord, "addressed output " + std::to_string(out) + " not in use");
        }
        return static_cast<int>(out);
    };
    if (stages.size() == 1) {
        const auto& st = stages[0];
        if (!st.has_decoder) {
            const int ones = std::popcount(word.bits);
            if (ones == 0) {
                return {std::nullopt};
            }
            if (ones > 1) {
                throw Error(ErrorCode::InvalidOneHot, "decoderless select word " + word.to_binary() +
                                                          " has more than one line asserted");
            }
            return {std::countr_zero(word.bits)};
        }
        const int a = st.address_bits();
        if (((word.bits >> a) & 1u) == 0) {
            return {std::nullopt};
        }
        return {in_use(st, word.bits & ((1u << a) - 1u))};
    }
    const int a1 = stages[0].address_bits();
    const int a2 = stages[1].address_bits();
    const int s1 = in_use(stages[0], word.bits & ((1u << a1) - 1u));
    if (((word.bits >> (a1 + a2)) & 1u) == 0) {
        return {s1, std::nullopt};
    }
    return {s1, in_use(stages[1], (word.bits >> a1) & ((1u << a2) - 1u))};
}

RoutingState route_dynamic(const SystemConfig& cfg, int zone) {
    if (!cfg.routing) {
        throw Error(ErrorCode::InvalidTopology, "config has no dynamic routing network");
    }
    const auto& r = *cfg.routing;
    if (zone < 0 || zone >= r.m_switch_fanout) {
        throw Error(ErrorCode::ZoneOutOfRange,
                    "zone " + std::to_string(zone) + " outside [0, " + std::to_string(r.m_switch_fanout) + ")");
    }
    RoutingState state;
    state.zone = zone;
    const int k = r.k_demux_outputs;
    for (int e = 0; e < r.electrode_count(); ++e) {
        state.links.push_back({e, e / k == zone ? std::optional<int>(e % k) : std::nullopt});
    }
    return state;
}

std::vector<TimingViolation> check_timing(const SystemConfig& cfg, const Frame& frame, double epsilon_v) {
    std::vector<TimingViolation> out;
    const double slot_s = to_double(Rational(1) / cfg.dac.update_rate_hz);
    const double reserve = cfg.k_settle * cfg.dac.settle_time_constant_s;
    const double swing = 2.0 * cfg.dac.full_scale_v;
    const double n_tau = n_tau_for(swing, epsilon_v);
    const auto& stages = cfg.topology.stages;

    auto rc_check = [&](int slot, double tau, const char* path) {
        const double required = reserve + n_tau * tau;
        if (required > slot_s) {
            std::ostringstream os;
            os << path << " tau " << tau << " s needs " << required << " s to settle within " << epsilon_v
               << " V, slot is " << slot_s << " s";
            out.push_back({slot, ViolationKind::RcSettle, required, slot_s, os.str()});
        }
    };

    for (const auto& slot : frame.slots) {
        if (slot_s <= reserve) {
            std::ostringstream os;
            os << "slot " << slot_s << " s shorter than DAC settle reserve " << reserve << " s";
            out.push_back({slot.index, ViolationKind::DacSettle, reserve, slot_s, os.str()});
            continue;
        }
        if (slot.purpose == SlotPurpose::Idle) {
            continue;
        }
        if (stages.size() == 1) {
            rc_check(slot.index, stages[0].sw.r_on_ohm * stages[0].hold_capacitance_f, "direct");
            continue;
        }
        const double r1 = stages[0].sw.r_on_ohm;
        const double r2 = stages[1].sw.r_on_ohm;
        const double c_store = first_stage_storage_f(cfg.topology);
        const double c_out = stages[1].hold_capacitance_f;
        const int s1 = stages[0].outputs_used;
        switch (slot.purpose) {
            case SlotPurpose::Stage1Charge:
                rc_check(slot.index, r1 * c_store, "stage-1 charge");
                break;
            case SlotPurpose::Stage2Deliver: {
                rc_check(slot.index, ladder_tau(r1, c_store, r2, c_out), "held stage-1/stage-2 ladder");
                if (s1 > 1) {
                    rc_check(slot.index, r2 * c_store * c_out / (c_store + c_out), "stage-2 charge share");
                    // Each shared transfer keeps a fraction c_out / (c_store + c_out) of the old error.
                    const double retained = c_out / (c_store + c_out);
                    const double refreshes = std::ceil(n_tau / -std::log(retained));
                    if (refreshes > cfg.settle_refresh_budget) {
                        std::ostringstream os;
                        os << "charge sharing " << c_store << " F -> " << c_out << " F transfers "
                           << (1.0 - retained) * 100.0 << "% per refresh; " << refreshes
                           << " refreshes to settle within " << epsilon_v << " V exceeds budget "
                           << cfg.settle_refresh_budget;
                        out.push_back({slot.index, ViolationKind::ChargeStarvation, refreshes,
                                       static_cast<double>(cfg.settle_refresh_budget), os.str()});
                    }
                }
                break;
            }
            case SlotPurpose::DirectDeliver:
                rc_check(slot.index, ladder_tau(r1, c_store, r2, c_out), "single-step ladder");
                if (s1 > 1 && c_store > 0.0) {
                    std::ostringstream os;
                    os << "stage-2 address is shared: " << s1 - 1
                       << " first-stage nodes holding stale charge divide into their outputs";
                    out.push_back({slot.index, ViolationKind::VoltageDivision, 0.0, 0.0, os.str()});
                }
                break;
            case SlotPurpose::Idle:
                break;
        }
    }
    return out;
}

RateReport effective_update_rate(const SystemConfig& cfg, const Frame& frame) {
    if (frame.slots.empty()) {
        throw Error(ErrorCode::InvalidSlotState, "empty frame");
    }
    return {cfg.dac.update_rate_hz / Rational(static_cast<std::int64_t>(frame.slots.size())),
            cfg.dac.update_rate_hz / Rational(cfg.demux_channels())};
}

}  // namespace tdm
