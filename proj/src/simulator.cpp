#include "tdm/simulator.hpp"

#include "tdm/kernels.hpp"
#include "tdm/network.hpp"
#include "tdm/rc.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace tdm {

namespace {

struct Circuit {
    int electrodes = 0;
    int stage1_nodes = 0;
    std::vector<double> capacitance;
    std::vector<std::optional<double>> leak_resistance;

    [[nodiscard]] int size() const { return electrodes + stage1_nodes; }
};

Circuit build_circuit(const SystemConfig& cfg) {
    Circuit c;
    const auto& stages = cfg.topology.stages;
    const auto& out = stages.back();
    c.electrodes = cfg.electrode_count;
    c.capacitance.assign(static_cast<std::size_t>(c.electrodes), out.hold_capacitance_f);
    c.leak_resistance.assign(static_cast<std::size_t>(c.electrodes), out.sw.off_leak_resistance_ohm);
    if (cfg.topology.two_stage()) {
        c.stage1_nodes = stages[0].outputs_used;
        for (int i = 0; i < c.stage1_nodes; ++i) {
            c.capacitance.push_back(first_stage_storage_f(cfg.topology));
            c.leak_resistance.push_back(stages[0].sw.off_leak_resistance_ohm);
        }
    }
    return c;
}

struct SlotCircuit {
    RcPropagator propagator;
    std::vector<double> droop;   // per node; 1 on connected nodes
};

class Simulator {
public:
    Simulator(const SystemConfig& cfg, const SimOptions& opts)
        : cfg_(cfg), opts_(opts), circuit_(build_circuit(cfg)), clock_(cfg.clock(opts.oversampling)),
          dt_(to_double(clock_.tick_seconds())), rng_(opts.seed) {}

    TraceSet run(const FrameStream& stream);

private:
    std::vector<Branch> branches(const SwitchStates& states) const {
        std::vector<Branch> out;
        const auto& stages = cfg_.topology.stages;
        if (!cfg_.topology.two_stage()) {
            if (states.at(0)) {
                out.push_back({electrode_of_channel(cfg_, *states[0]), kSourceNode, 1.0 / stages[0].sw.r_on_ohm});
            }
            return out;
        }
        const int n = circuit_.electrodes;
        const int s2 = stages[1].outputs_used;
        if (states.at(0)) {
            out.push_back({n + *states[0], kSourceNode, 1.0 / stages[0].sw.r_on_ohm});
        }
        if (states.at(1)) {
            // The stage-2 address is shared by every second-stage switch.
            for (int i = 0; i < circuit_.stage1_nodes; ++i) {
                out.push_back({n + i, electrode_of_channel(cfg_, i * s2 + *states[1]), 1.0 / stages[1].sw.r_on_ohm});
            }
        }
        return out;
    }

    const SlotCircuit& slot_circuit(const SwitchStates& states) {
        auto it = cache_.find(states);
        if (it != cache_.end()) {
            return it->second;
        }
        const auto br = branches(states);
        RcPropagator prop(circuit_.capacitance, br, cfg_.dac.settle_time_constant_s, dt_);
        std::vector<double> droop(static_cast<std::size_t>(circuit_.size()), 1.0);
        for (std::size_t k = 0; k < droop.size(); ++k) {
            if (!prop.connected()[k]) {
                droop[k] = droop_gain(cfg_.leakage, dt_, circuit_.capacitance[k], circuit_.leak_resistance[k]);
            }
        }
        return cache_.emplace(states, SlotCircuit{std::move(prop), std::move(droop)}).first->second;
    }

    // OFF->ON transitions between consecutive slots: charge injection and event markers.
    void switch_events(const SwitchStates& prev, const SwitchStates& cur, std::int64_t slot, Tick tick,
                       std::vector<TraceEvent>& events) {
        const auto& stages = cfg_.topology.stages;
        const int n = circuit_.electrodes;
        for (std::size_t s = 0; s < cur.size(); ++s) {
            if (prev[s] == cur[s]) {
                continue;
            }
            const int st = static_cast<int>(s);
            if (prev[s]) {
                events.push_back({tick, EventKind::SwitchOff, slot, st, *prev[s]});
            }
            if (!cur[s]) {
                continue;
            }
            events.push_back({tick, EventKind::SwitchOn, slot, st, *cur[s]});
            std::vector<int> targets;
            if (!cfg_.topology.two_stage()) {
                targets.push_back(electrode_of_channel(cfg_, *cur[s]));
            } else if (s == 0) {
                targets.push_back(n + *cur[s]);
            } else {
                for (int i = 0; i < circuit_.stage1_nodes; ++i) {
                    targets.push_back(electrode_of_channel(cfg_, i * stages[1].outputs_used + *cur[s]));
                }
            }
            for (const int node : targets) {
                const NodeState ns{node, circuit_.capacitance[static_cast<std::size_t>(node)],
                                   volts_[static_cast<std::size_t>(node)], {}};
                const double v = apply_charge_injection(ns, stages[s].sw);
                if (node < n) {
                    step_dv_[static_cast<std::size_t>(node)] += v - volts_[static_cast<std::size_t>(node)];
                }
                volts_[static_cast<std::size_t>(node)] = v;
            }
        }
    }

    void guard(Tick tick) const {
        const double limit = cfg_.dac.full_scale_v + 1.0;
        const double peak = kernels::max_abs(volts_);
        if (!(peak <= limit)) {
            std::ostringstream os;
            os << "node voltage " << peak << " V outside guard band +/-" << limit << " V at tick " << tick;
            throw Error(ErrorCode::NumericalBlowup, os.str());
        }
    }

    const SystemConfig& cfg_;
    const SimOptions& opts_;
    Circuit circuit_;
    TickClock clock_;
    double dt_;
    std::mt19937_64 rng_;
    std::map<SwitchStates, SlotCircuit> cache_;
    std::vector<double> volts_;
    std::vector<double> step_dv_;
};

TraceSet Simulator::run(const FrameStream& stream) {
    const auto names = node_names(cfg_);
    const int total = circuit_.size();
    volts_.assign(static_cast<std::size_t>(total), 0.0);
    if (!opts_.initial_voltages.empty()) {
        if (static_cast<int>(opts_.initial_voltages.size()) != total) {
            throw Error(ErrorCode::InvalidConfig, "initial_voltages needs one value per circuit node (" +
                                                      std::to_string(total) + ")");
        }
        volts_ = opts_.initial_voltages;
    }
    step_dv_.assign(static_cast<std::size_t>(circuit_.electrodes), 0.0);

    // Probe index k < total is a circuit node; k == total is the DAC state.
    std::vector<int> probes;
    TraceSet trace;
    trace.tick_seconds = clock_.tick_seconds();
    trace.oversampling = opts_.oversampling;
    if (opts_.probe.empty()) {
        for (int k = 0; k <= total; ++k) {
            probes.push_back(k);
        }
    } else {
        for (const auto& p : opts_.probe) {
            const auto it = std::find(names.begin(), names.end(), p);
            if (it == names.end()) {
                throw Error(ErrorCode::InvalidConfig, "unknown probe node '" + p + "'");
            }
            probes.push_back(static_cast<int>(it - names.begin()));
        }
    }
    for (const int k : probes) {
        trace.node_ids.push_back(names[static_cast<std::size_t>(k)]);
    }
    trace.series.resize(probes.size());

    double dac = 0.0;
    auto record = [&](Tick tick) {
        trace.ticks.push_back(tick);
        for (std::size_t p = 0; p < probes.size(); ++p) {
            const int k = probes[p];
            trace.series[p].push_back(k == total ? dac : volts_[static_cast<std::size_t>(k)]);
        }
    };

    guard(0);
    record(0);
    std::normal_distribution<double> noise(0.0, 1.0);
    SwitchStates prev(cfg_.topology.stages.size(), std::nullopt);
    Tick tick = 0;
    std::int64_t global_slot = 0;
    std::vector<double> before(static_cast<std::size_t>(circuit_.electrodes));
    for (const auto& frame : stream) {
        for (const auto& slot : frame.slots) {
            if (slot.stage_states.size() != prev.size()) {
                throw Error(ErrorCode::InvalidSlotState, "slot switch states do not match the topology");
            }
            trace.events.push_back({tick, EventKind::SlotStart, global_slot, -1, -1});
            std::fill(step_dv_.begin(), step_dv_.end(), 0.0);
            switch_events(prev, slot.stage_states, global_slot, tick, trace.events);
            prev = slot.stage_states;
            guard(tick);

            const auto& sc = slot_circuit(slot.stage_states);
            const double target = cfg_.dac.dequantize(slot.dac_code);
            for (int sub = 0; sub < opts_.oversampling; ++sub) {
                std::copy_n(volts_.begin(), circuit_.electrodes, before.begin());
                const double drive = opts_.noise_rms_v > 0.0 ? target + opts_.noise_rms_v * noise(rng_) : target;
                sc.propagator.step(volts_, dac, drive);
                kernels::scale(volts_, sc.droop);
                for (std::size_t e = 0; e < before.size(); ++e) {
                    step_dv_[e] += volts_[e] - before[e];
                }
                apply_crosstalk(std::span<double>(volts_.data(), before.size()), step_dv_, cfg_.crosstalk);
                std::fill(step_dv_.begin(), step_dv_.end(), 0.0);
                ++tick;
                guard(tick);
                record(tick);
            }
            trace.slot_end.emplace_back(volts_.begin(), volts_.begin() + circuit_.electrodes);
            ++global_slot;
        }
    }
    return trace;
}

}  // namespace

std::string_view to_string(EventKind kind) {
    switch (kind) {
        case EventKind::SlotStart: return "SlotStart";
        case EventKind::SwitchOn: return "SwitchOn";
        case EventKind::SwitchOff: return "SwitchOff";
    }
    return "Unknown";
}

const std::vector<double>& TraceSet::series_for(std::string_view node_id) const {
    const auto it = std::find(node_ids.begin(), node_ids.end(), node_id);
    if (it == node_ids.end()) {
        throw Error(ErrorCode::InvalidConfig, "node '" + std::string(node_id) + "' was not probed");
    }
    return series[static_cast<std::size_t>(it - node_ids.begin())];
}

std::vector<std::string> node_names(const SystemConfig& cfg) {
    std::vector<std::string> names;
    for (int e = 0; e < cfg.electrode_count; ++e) {
        names.push_back("e" + std::to_string(e));
    }
    if (cfg.topology.two_stage()) {
        for (int i = 0; i < cfg.topology.stages[0].outputs_used; ++i) {
            names.push_back("s1_" + std::to_string(i));
        }
    }
    names.emplace_back("dac");
    return names;
}

int electrode_of_channel(const SystemConfig& cfg, int channel) {
    if (!cfg.routing) {
        return channel;
    }
    return cfg.routing->active_group * cfg.routing->k_demux_outputs + channel;
}

TraceSet run(const SystemConfig& cfg, const FrameStream& stream, const SimOptions& opts) {
    require_valid(cfg);
    if (opts.oversampling < 4) {
        throw Error(ErrorCode::InvalidConfig, "oversampling must be >= 4");
    }
    if (opts.noise_rms_v < 0.0) {
        throw Error(ErrorCode::NegativeParameter, "noise_rms_v must be >= 0");
    }
    Simulator sim(cfg, opts);
    return sim.run(stream);
}

ElectrodeTrace electrode_trace(const SystemConfig& cfg, const FrameStream& stream, const TraceSet& trace,
                               int channel) {
    ElectrodeTrace out;
    const auto& series = trace.series_for("e" + std::to_string(electrode_of_channel(cfg, channel)));
    out.volts = series;
    out.time_s.reserve(series.size());
    for (std::size_t i = 0; i < series.size(); ++i) {
        out.time_s.push_back(trace.time_s(i));
    }
    std::int64_t global_slot = 0;
    for (const auto& frame : stream) {
        for (const auto& slot : frame.slots) {
            ++global_slot;
            if (std::find(slot.delivered_channels.begin(), slot.delivered_channels.end(), channel) !=
                slot.delivered_channels.end()) {
                out.boundary_indices.push_back(static_cast<std::size_t>(global_slot * trace.oversampling));
            }
        }
    }
    return out;
}

}  // namespace tdm
