#pragma once

#include "tdm/config_io.hpp"
#include "tdm/rc.hpp"
#include "tdm/scheduler.hpp"
#include "tdm/simulator.hpp"

#include <cmath>

#include <filesystem>
#include <random>
#include <string>

namespace tdm::test {

inline std::filesystem::path paper_config_path(const std::string& name) {
    return std::filesystem::path(TDM_PAPER_CONFIGS) / name;
}

inline SystemConfig paper_static() { return load_config(paper_config_path("static_32ch.json")); }
inline SystemConfig paper_dynamic() { return load_config(paper_config_path("dynamic_4ch.json")); }

/// Targets of the static golden programs: 32 levels evenly spaced over -10..+10 V.
inline std::vector<double> static_levels() {
    std::vector<double> v;
    for (int c = 0; c < 32; ++c) {
        v.push_back(-10.0 + 20.0 * c / 31.0);
    }
    return v;
}

/// Dynamic board stripped to an ideal chain: negligible switch resistance, instant DAC,
/// no leakage and no crosstalk.
inline SystemConfig ideal_dynamic() {
    auto cfg = paper_dynamic();
    cfg.topology.stages[0].sw.r_on_ohm = 1e-6;
    cfg.dac.settle_time_constant_s = 0.0;
    cfg.leakage = {};
    cfg.crosstalk = CrosstalkMatrix(4);
    return cfg;
}

inline std::vector<VoltageProgram> dc_programs(const SystemConfig& cfg, const std::vector<double>& volts) {
    std::vector<VoltageProgram> out;
    for (std::size_t c = 0; c < volts.size(); ++c) {
        out.push_back({static_cast<int>(c), DcLevel{volts[c]}, cfg.per_channel_rate_hz});
    }
    return out;
}

/// Random valid configuration: one- or two-stage tree, decoder or one-hot addressing,
/// optional routing, two-step or single-step charging. Rates are chosen so that the
/// frame fits exactly and every RC step settles well inside a slot.
inline SystemConfig random_config(std::mt19937_64& rng) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    SystemConfig cfg;
    cfg.name = "random";
    cfg.dac.resolution_bits = pick(10, 18);
    cfg.dac.full_scale_v = uni(1.0, 10.0);
    cfg.dac.settle_time_constant_s = uni(0.0, 20e-9);
    const bool two = pick(0, 1) == 1;
    auto stage = [&](bool decoder, bool output) {
        DemuxStage s;
        s.fanout = decoder ? 1 << pick(1, 3) : pick(1, 6);
        s.outputs_used = pick(1, s.fanout);
        s.has_decoder = decoder;
        s.hold_capacitance_f = output ? uni(100e-12, 1e-9) : uni(1e-9, 5e-9);
        s.sw.r_on_ohm = uni(1.0, 20.0);
        s.sw.c_on_f = uni(0.0, 200e-12);
        return s;
    };
    if (two) {
        cfg.topology.stages = {stage(true, false), stage(true, true)};
        cfg.topology.charging = pick(0, 3) == 0 ? ChargingMode::SingleStep : ChargingMode::TwoStep;
    } else {
        cfg.topology.stages = {stage(pick(0, 1) == 1, true)};
        cfg.topology.charging = ChargingMode::SingleStep;
    }
    const int k = cfg.topology.total_channels();
    if (pick(0, 3) == 0) {
        cfg.routing = DynamicRouting{k, pick(1, 4), 0};
        cfg.routing->active_group = pick(0, cfg.routing->m_switch_fanout - 1);
    }
    cfg.electrode_count = cfg.routing ? cfg.routing->electrode_count() : k;
    cfg.crosstalk = CrosstalkMatrix(static_cast<std::size_t>(cfg.electrode_count));
    const int slots = cfg.topology.slots_per_refresh() + pick(0, 3);
    cfg.per_channel_rate_hz = Rational(pick(1, 50) * 1000);
    cfg.dac.update_rate_hz = cfg.per_channel_rate_hz * slots;
    return cfg;
}

inline std::vector<double> random_values(const SystemConfig& cfg, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> v(-cfg.dac.full_scale_v, cfg.dac.full_scale_v);
    std::vector<double> out(static_cast<std::size_t>(cfg.demux_channels()));
    for (auto& x : out) {
        x = v(rng);
    }
    return out;
}

struct OraclePair {
    double simulated_v = 0.0;
    double oracle_v = 0.0;
};

/// One randomized slot run through the simulator and the matching closed-form event:
/// a direct delivery or first-stage charge (drive_charge) or a second-stage share
/// (charge_share on every first-stage/electrode pair). Slot length spans 0.2..8 RC.
inline std::vector<OraclePair> single_slot_case(std::mt19937_64& rng, int oversampling = 16) {
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
    auto uni = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    SystemConfig cfg;
    cfg.name = "oracle";
    cfg.dac.resolution_bits = 16;
    cfg.dac.full_scale_v = 10.0;
    cfg.dac.settle_time_constant_s = 0.0;
    const int kind = pick(0, 2);
    auto stage = [&](int fanout, double hold) {
        DemuxStage s;
        s.fanout = fanout;
        s.outputs_used = pick(1, fanout);
        s.has_decoder = true;
        s.hold_capacitance_f = hold;
        s.sw.r_on_ohm = uni(1.0, 200.0);
        s.sw.c_on_f = uni(0.0, 200e-12);
        return s;
    };
    if (kind == 0) {
        cfg.topology.stages = {stage(1 << pick(1, 3), uni(50e-12, 5e-9))};
        cfg.topology.charging = ChargingMode::SingleStep;
    } else {
        cfg.topology.stages = {stage(1 << pick(1, 3), uni(0.0, 5e-9)), stage(1 << pick(1, 3), uni(50e-12, 5e-9))};
        cfg.topology.charging = ChargingMode::TwoStep;
    }
    cfg.electrode_count = cfg.topology.total_channels();
    cfg.crosstalk = CrosstalkMatrix(static_cast<std::size_t>(cfg.electrode_count));

    const auto& out_stage = cfg.topology.stages.back();
    const double c1 = first_stage_storage_f(cfg.topology);
    double tau = 0.0;
    if (kind == 0) {
        tau = out_stage.sw.r_on_ohm * out_stage.hold_capacitance_f;
    } else if (kind == 1) {
        tau = cfg.topology.stages[0].sw.r_on_ohm * c1;
    } else {
        const double cs = c1 * out_stage.hold_capacitance_f / (c1 + out_stage.hold_capacitance_f);
        tau = out_stage.sw.r_on_ohm * cs;
    }
    const auto rate = static_cast<std::int64_t>(std::llround(1.0 / (tau * uni(0.2, 8.0))));
    cfg.dac.update_rate_hz = Rational(std::max<std::int64_t>(rate, 1));
    cfg.per_channel_rate_hz = cfg.dac.update_rate_hz / cfg.topology.slots_per_refresh();
    const double dt = 1.0 / to_double(cfg.dac.update_rate_hz);

    const auto names = node_names(cfg);
    const int nodes = static_cast<int>(names.size()) - 1;
    SimOptions opts;
    opts.oversampling = oversampling;
    opts.initial_voltages.resize(static_cast<std::size_t>(nodes));
    for (auto& v : opts.initial_voltages) {
        v = uni(-10.0, 10.0);
    }

    Slot slot;
    slot.dac_code = static_cast<std::int32_t>(pick(-cfg.dac.max_code(), cfg.dac.max_code()));
    slot.dac_target_v = cfg.dac.dequantize(slot.dac_code);
    const double target = slot.dac_target_v;
    std::vector<std::pair<int, double>> expect;   // node, oracle voltage
    const auto& init = opts.initial_voltages;
    const int n = cfg.electrode_count;
    if (kind == 0) {
        const int ch = pick(0, out_stage.outputs_used - 1);
        slot.stage_states = {ch};
        slot.purpose = SlotPurpose::DirectDeliver;
        expect.emplace_back(ch, drive_charge(NodeState{ch, out_stage.hold_capacitance_f,
                                                       init[static_cast<std::size_t>(ch)], {}},
                                             target, out_stage.sw.r_on_ohm, dt));
    } else if (kind == 1) {
        const int i = pick(0, cfg.topology.stages[0].outputs_used - 1);
        slot.stage_states = {i, std::nullopt};
        slot.purpose = SlotPurpose::Stage1Charge;
        expect.emplace_back(n + i, drive_charge(NodeState{n + i, c1, init[static_cast<std::size_t>(n + i)], {}},
                                                target, cfg.topology.stages[0].sw.r_on_ohm, dt));
    } else {
        const int j = pick(0, out_stage.outputs_used - 1);
        slot.stage_states = {std::nullopt, j};
        slot.purpose = SlotPurpose::Stage2Deliver;
        for (int i = 0; i < cfg.topology.stages[0].outputs_used; ++i) {
            const int e = i * out_stage.outputs_used + j;
            const auto [a, b] = charge_share(NodeState{n + i, c1, init[static_cast<std::size_t>(n + i)], {}},
                                             NodeState{e, out_stage.hold_capacitance_f,
                                                       init[static_cast<std::size_t>(e)], {}},
                                             out_stage.sw.r_on_ohm, dt);
            expect.emplace_back(n + i, a);
            expect.emplace_back(e, b);
        }
    }
    Frame frame;
    frame.slots = {slot};
    frame.slots_per_refresh = 1;
    const auto trace = run(cfg, FrameStream{frame}, opts);
    std::vector<OraclePair> pairs;
    for (const auto& [node, v] : expect) {
        pairs.push_back({trace.series[static_cast<std::size_t>(node)].back(), v});
    }
    return pairs;
}

}  // namespace tdm::test
