#include "support.hpp"
#include "tdm/metrics.hpp"
#include "tdm/simulator.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

using namespace tdm;
using namespace tdm::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

FrameStream repeat(const Frame& f, int n) { return FrameStream(static_cast<std::size_t>(n), f); }

Frame idle_frame(const SystemConfig& cfg, int slots) {
    Frame f;
    for (int i = 0; i < slots; ++i) {
        Slot s;
        s.index = i;
        s.stage_states.assign(cfg.topology.stages.size(), std::nullopt);
        s.purpose = SlotPurpose::Idle;
        f.slots.push_back(s);
    }
    f.slots_per_refresh = slots;
    return f;
}

}  // namespace

TEST_CASE("all-zero programs give all-zero traces") {
    const auto cfg = paper_static();
    const auto frame = compile_static_frame(cfg, dc_programs(cfg, std::vector<double>(32, 0.0)));
    const auto trace = run(cfg, repeat(frame, 2), {.oversampling = 4});
    REQUIRE(trace.node_ids.size() == 32 + 4 + 1);
    REQUIRE(trace.ticks.size() == 2 * 40 * 4 + 1);
    for (const auto& s : trace.series) {
        CHECK(std::all_of(s.begin(), s.end(), [](double v) { return v == 0.0; }));
    }
}

TEST_CASE("node naming and probes") {
    const auto cfg = paper_static();
    const auto names = node_names(cfg);
    CHECK(names.front() == "e0");
    CHECK(names[32] == "s1_0");
    CHECK(names.back() == "dac");
    const auto frame = compile_static_frame(cfg, dc_programs(cfg, static_levels()));
    SimOptions opts{.oversampling = 4, .probe = {"e5", "dac"}};
    const auto trace = run(cfg, {frame}, opts);
    CHECK(trace.node_ids == std::vector<std::string>{"e5", "dac"});
    CHECK_THROWS_AS(trace.series_for("e6"), Error);
    opts.probe = {"nope"};
    CHECK_THROWS_AS(run(cfg, {frame}, opts), Error);
}

TEST_CASE("oversampling below 4 is rejected") {
    const auto cfg = paper_dynamic();
    const auto frame = compile_frame(cfg, std::vector<double>{0, 0, 0, 0});
    CHECK_THROWS_AS(run(cfg, {frame}, {.oversampling = 3}), Error);
    SimOptions bad{.oversampling = 4};
    bad.noise_rms_v = -1.0;
    CHECK_THROWS_AS(run(cfg, {frame}, bad), Error);
}

TEST_CASE("static board settles 32 distinct levels within 1 mV") {
    const auto cfg = paper_static();
    const auto levels = static_levels();
    const auto stream = repeat(compile_static_frame(cfg, dc_programs(cfg, levels)), 8);
    const auto trace = run(cfg, stream);
    const auto report = settle_error(cfg, stream, trace);
    CHECK(report.worst_last() <= 1e-3);
    std::set<long> distinct;
    for (int c = 0; c < 32; ++c) {
        const double v = trace.slot_end.back()[static_cast<std::size_t>(c)];
        CHECK_THAT(v, WithinAbs(levels[static_cast<std::size_t>(c)], 1e-3));
        distinct.insert(std::lround(v * 100.0));
    }
    CHECK(distinct.size() == 32);
}

TEST_CASE("two-step sequence without C1 divides the delivered voltage") {
    const auto cfg = load_config(paper_config_path("static_two_step_no_c1.json"));
    std::vector<double> v(32, 0.0);
    v[0] = 10.0;
    const auto frame = compile_static_frame(cfg, dc_programs(cfg, v));
    const auto trace = run(cfg, {frame});
    // 185 pF at 10 V shared into 470 pF at 0 V
    const double oracle = 10.0 * 185.0 / (185.0 + 470.0);
    CHECK_THAT(trace.slot_end.back()[0], WithinRel(oracle, 0.01));
    const auto violations = check_timing(cfg, frame);
    CHECK(std::any_of(violations.begin(), violations.end(),
                      [](const auto& x) { return x.kind == ViolationKind::ChargeStarvation; }));
}

TEST_CASE("simulator matches single-event oracles") {
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 300; ++i) {
        for (const auto& p : single_slot_case(rng)) {
            CHECK(std::abs(p.simulated_v - p.oracle_v) <= 1e-3 * std::abs(p.oracle_v) + 1e-12);
        }
    }
}

TEST_CASE("repeated runs are bit-identical") {
    const auto cfg = paper_dynamic();
    const auto frame = compile_frame(cfg, std::vector<double>{1.0, -2.0, 3.0, -4.0});
    SimOptions opts{.oversampling = 8, .seed = 7, .noise_rms_v = 1e-3};
    const auto a = run(cfg, repeat(frame, 5), opts);
    const auto b = run(cfg, repeat(frame, 5), opts);
    CHECK(a == b);
    opts.seed = 8;
    const auto c = run(cfg, repeat(frame, 5), opts);
    CHECK(a.series != c.series);
}

TEST_CASE("ideal chain reproduces the zero-order hold at slot boundaries") {
    const auto cfg = ideal_dynamic();
    const double f[] = {10e3, 20e3, 25e3, 50e3};
    const double amp[] = {8.0, 6.0, 5.0, 4.0};
    std::vector<VoltageProgram> programs;
    for (int c = 0; c < 4; ++c) {
        WaveformSpec w{SineShape{amp[c], f[c], 0.3 * c, 0.0}, 100e-6};
        programs.push_back(sample(w, cfg.per_channel_rate_hz, cfg.dac.full_scale_v, c));
    }
    const auto stream = compile_dynamic_stream(cfg, programs, 100e-6);
    REQUIRE(stream.size() == 100);
    const auto trace = run(cfg, stream, {.oversampling = 4});
    const double half_lsb = cfg.dac.lsb_v() / 2.0;
    for (int c = 0; c < 4; ++c) {
        const auto et = electrode_trace(cfg, stream, trace, c);
        REQUIRE(et.boundary_indices.size() == 100);
        const double latency = (c + 1) / 4e6;
        const auto err = reconstruction_error(et, zoh_reference(programs[static_cast<std::size_t>(c)], latency));
        CHECK(err.max_abs_boundary_v <= half_lsb);
    }
}

TEST_CASE("held electrodes droop geometrically") {
    auto cfg = ideal_dynamic();
    cfg.leakage = {-19.2e-3, 10.0};
    const auto stream = repeat(idle_frame(cfg, 4), 10);
    SimOptions opts{.oversampling = 4};
    opts.initial_voltages = {5.0, -5.0, 10.0, 0.0};
    const auto trace = run(cfg, stream, opts);
    const double dt = 1.0 / 16e6;
    const double g = 1.0 + (-19.2e-3) * dt / 10.0;
    for (int e = 0; e < 4; ++e) {
        const double v0 = opts.initial_voltages[static_cast<std::size_t>(e)];
        CHECK_THAT(trace.series[static_cast<std::size_t>(e)].back(), WithinAbs(v0 * std::pow(g, 160), 1e-12));
    }
}

TEST_CASE("delivered steps couple into neighbours") {
    auto cfg = ideal_dynamic();
    cfg.crosstalk.set(1, 0, 0.0355);
    cfg.crosstalk.set(3, 0, -0.0178);
    Frame f = idle_frame(cfg, 4);
    f.slots[0].stage_states = {0};
    f.slots[0].purpose = SlotPurpose::DirectDeliver;
    f.slots[0].dac_code = cfg.dac.quantize(5.0);
    f.slots[0].source_channel = 0;
    f.slots[0].delivered_channels = {0};
    const auto trace = run(cfg, {f}, {.oversampling = 4});
    const double v0 = cfg.dac.dequantize(f.slots[0].dac_code);
    const auto& end = trace.slot_end.back();
    CHECK_THAT(end[0], WithinAbs(v0, 1e-9));
    CHECK_THAT(end[1], WithinAbs(0.0355 * v0, 1e-9));
    CHECK(end[2] == 0.0);
    CHECK_THAT(end[3], WithinAbs(-0.0178 * v0, 1e-9));
}

TEST_CASE("switch closure injects q / C") {
    auto cfg = ideal_dynamic();
    cfg.topology.stages[0].sw.r_on_ohm = 1e15;   // keeps the node effectively isolated for one slot
    cfg.topology.stages[0].sw.injected_charge_c = 1e-13;
    Frame f = idle_frame(cfg, 4);
    f.slots[2].stage_states = {2};
    f.slots[2].purpose = SlotPurpose::DirectDeliver;
    const auto trace = run(cfg, {f}, {.oversampling = 4});
    CHECK_THAT(trace.slot_end.back()[2], WithinRel(1e-13 / 120e-12, 1e-6));
    CHECK(trace.slot_end.back()[1] == 0.0);
    const auto on = std::count_if(trace.events.begin(), trace.events.end(),
                                  [](const TraceEvent& e) { return e.kind == EventKind::SwitchOn; });
    const auto off = std::count_if(trace.events.begin(), trace.events.end(),
                                   [](const TraceEvent& e) { return e.kind == EventKind::SwitchOff; });
    CHECK(on == 1);
    CHECK(off == 1);
}

TEST_CASE("runaway injection raises NumericalBlowup") {
    auto cfg = paper_dynamic();
    cfg.topology.stages[0].sw.injected_charge_c = 1e-8;
    const auto frame = compile_frame(cfg, std::vector<double>{0, 0, 0, 0});
    try {
        (void)run(cfg, {frame}, {.oversampling = 4});
        FAIL("expected NumericalBlowup");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NumericalBlowup);
    }
}

TEST_CASE("routing delivers into the active zone") {
    auto cfg = ideal_dynamic();
    cfg.routing = DynamicRouting{4, 3, 2};
    cfg.electrode_count = 12;
    cfg.crosstalk = CrosstalkMatrix(12);
    const auto frame = compile_frame(cfg, std::vector<double>{1.0, 2.0, 3.0, 4.0});
    const auto trace = run(cfg, {frame}, {.oversampling = 4});
    const auto& end = trace.slot_end.back();
    for (int e = 0; e < 12; ++e) {
        const double expect = e >= 8 ? cfg.dac.dequantize(cfg.dac.quantize(e - 7.0)) : 0.0;
        CHECK_THAT(end[static_cast<std::size_t>(e)], WithinAbs(expect, 1e-9));
    }
    CHECK(electrode_of_channel(cfg, 1) == 9);
}

TEST_CASE("event log marks every slot") {
    const auto cfg = paper_static();
    const auto frame = compile_static_frame(cfg, dc_programs(cfg, static_levels()));
    const auto trace = run(cfg, repeat(frame, 2), {.oversampling = 4});
    std::int64_t starts = 0;
    for (const auto& e : trace.events) {
        if (e.kind == EventKind::SlotStart) {
            CHECK(e.tick == starts * 4);
            CHECK(e.slot == starts);
            ++starts;
        }
    }
    CHECK(starts == 80);
    CHECK(trace.slot_end.size() == 80);
}
