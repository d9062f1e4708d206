#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <set>

using namespace tdm;

namespace {

bool throws_code(ErrorCode code, const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

}  // namespace

TEST_CASE("static frame follows the two-step sequence") {
    const auto cfg = test::paper_static();
    const auto levels = test::static_levels();
    const auto frame = compile_frame(cfg, levels);
    REQUIRE(frame.slots.size() == 40);
    CHECK(frame.slots_per_refresh == 40);

    // Group j: charge first-stage nodes 0..3 with channels i*8+j, then share.
    for (int j = 0; j < 8; ++j) {
        for (int i = 0; i < 4; ++i) {
            const auto& s = frame.slots[static_cast<std::size_t>(5 * j + i)];
            CHECK(s.purpose == SlotPurpose::Stage1Charge);
            CHECK(s.source_channel == i * 8 + j);
            CHECK(s.stage_states == SwitchStates{i, std::nullopt});
            CHECK(s.dac_target_v == levels[static_cast<std::size_t>(i * 8 + j)]);
            CHECK(s.delivered_channels.empty());
        }
        const auto& d = frame.slots[static_cast<std::size_t>(5 * j + 4)];
        CHECK(d.purpose == SlotPurpose::Stage2Deliver);
        CHECK(d.stage_states == SwitchStates{3, j});
        CHECK(d.source_channel == 24 + j);
        CHECK(d.delivered_channels == std::vector<int>{j, 8 + j, 16 + j, 24 + j});
    }
    CHECK(frame.slots[0].select_word.to_binary() == "0000000");
    CHECK(frame.slots[3].select_word.to_binary() == "0000011");
    CHECK(frame.slots[4].select_word.to_binary() == "1000011");
    CHECK(frame.slots[9].select_word.to_binary() == "1001011");
    CHECK(frame.slots[39].select_word.to_binary() == "1111011");
    CHECK(frame.slots[0].dac_code == -32767);
    CHECK(frame.slots[38].dac_code == 32767);   // channel 31 = node 3 of group 7
}

TEST_CASE("static frame rates are exact") {
    const auto cfg = test::paper_static();
    const auto frame = compile_frame(cfg, test::static_levels());
    const auto rate = effective_update_rate(cfg, frame);
    CHECK(rate.effective_hz == Rational(37500));
    CHECK(rate.nominal_hz == Rational(46875));
    CHECK(Rational(cfg.demux_channels(), static_cast<std::int64_t>(frame.slots.size())) == Rational(4, 5));
}

TEST_CASE("dynamic frames are four one-hot slots") {
    const auto cfg = test::paper_dynamic();
    const auto frame = compile_frame(cfg, std::vector<double>{1.0, -2.0, 3.0, -4.0});
    REQUIRE(frame.slots.size() == 4);
    const char* words[] = {"0001", "0010", "0100", "1000"};
    for (int c = 0; c < 4; ++c) {
        const auto& s = frame.slots[static_cast<std::size_t>(c)];
        CHECK(s.purpose == SlotPurpose::DirectDeliver);
        CHECK(s.select_word.to_binary() == words[c]);
        CHECK(s.delivered_channels == std::vector<int>{c});
    }
    CHECK(effective_update_rate(cfg, frame).effective_hz == Rational(1000000));
}

TEST_CASE("dynamic stream over 10 us holds 40 slots") {
    const auto cfg = test::paper_dynamic();
    std::vector<VoltageProgram> programs;
    for (int c = 0; c < 4; ++c) {
        WaveformSpec w{SineShape{5.0, 10e3 * (c + 1), 0.0, 0.0}, 10e-6};
        programs.push_back(sample(w, cfg.per_channel_rate_hz, 10.0, c));
    }
    const auto stream = compile_dynamic_stream(cfg, programs, 10e-6);
    REQUIRE(stream.size() == 10);
    std::size_t slots = 0;
    for (std::size_t r = 0; r < stream.size(); ++r) {
        slots += stream[r].slots.size();
        for (int c = 0; c < 4; ++c) {
            CHECK(stream[r].slots[static_cast<std::size_t>(c)].dac_target_v == programs[static_cast<std::size_t>(c)].value(r));
        }
    }
    CHECK(slots == 40);
}

TEST_CASE("program errors") {
    const auto cfg = test::paper_static();
    auto programs = test::dc_programs(cfg, test::static_levels());
    SECTION("sampled program in a static frame") {
        programs[3] = sample(WaveformSpec{SineShape{1.0, 1000.0, 0.0, 0.0}, 2e-3}, cfg.per_channel_rate_hz, 10.0, 3);
        CHECK(throws_code(ErrorCode::MixedProgramKinds, [&] { (void)compile_static_frame(cfg, programs); }));
    }
    SECTION("missing channel") {
        programs.pop_back();
        CHECK(throws_code(ErrorCode::ChannelCountMismatch, [&] { (void)compile_static_frame(cfg, programs); }));
    }
    SECTION("duplicate channel") {
        programs[5].channel_id = 4;
        CHECK(throws_code(ErrorCode::ChannelCountMismatch, [&] { (void)compile_static_frame(cfg, programs); }));
    }
    SECTION("value beyond full scale") {
        programs[0].kind = DcLevel{10.5};
        CHECK(throws_code(ErrorCode::AmplitudeExceedsFullScale, [&] { (void)compile_static_frame(cfg, programs); }));
    }
    SECTION("explicit values of the wrong count") {
        CHECK(throws_code(ErrorCode::ChannelCountMismatch,
                          [&] { (void)compile_frame(cfg, std::vector<double>(31, 0.0)); }));
    }
}

TEST_CASE("dynamic stream errors") {
    const auto cfg = test::paper_dynamic();
    std::vector<VoltageProgram> programs;
    for (int c = 0; c < 4; ++c) {
        programs.push_back(sample(WaveformSpec{SineShape{1.0, 1e4, 0.0, 0.0}, 5e-6}, cfg.per_channel_rate_hz, 10.0, c));
    }
    CHECK(throws_code(ErrorCode::InsufficientSamples, [&] { (void)compile_dynamic_stream(cfg, programs, 10e-6); }));
    CHECK(throws_code(ErrorCode::SampleRateMismatch, [&] { (void)compile_dynamic_stream(cfg, programs, 2.5e-6); }));
    programs[1] = sample(WaveformSpec{SineShape{1.0, 1e4, 0.0, 0.0}, 5e-6}, Rational(2000000), 10.0, 1);
    CHECK(throws_code(ErrorCode::SampleRateMismatch, [&] { (void)compile_dynamic_stream(cfg, programs, 5e-6); }));
    // DC programs mix freely with sampled ones in a stream.
    programs[1] = {1, DcLevel{2.0}, cfg.per_channel_rate_hz};
    const auto stream = compile_dynamic_stream(cfg, programs, 5e-6);
    CHECK(stream.size() == 5);
    CHECK(stream[4].slots[1].dac_target_v == 2.0);
}

TEST_CASE("every channel is delivered exactly once per refresh") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) {
        const auto cfg = test::random_config(rng);
        const auto frame = compile_frame(cfg, test::random_values(cfg, rng));
        CHECK(static_cast<std::int64_t>(frame.slots.size()) == cfg.slots_per_period());
        std::map<int, int> delivered;
        for (const auto& s : frame.slots) {
            for (const int c : s.delivered_channels) {
                ++delivered[c];
            }
        }
        REQUIRE(static_cast<int>(delivered.size()) == cfg.demux_channels());
        for (const auto& [c, n] : delivered) {
            CHECK(n == 1);
        }
        CHECK(static_cast<int>(frame.channels_covered.size()) == cfg.demux_channels());
    }
}

TEST_CASE("select words round-trip over every reachable slot state") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 300; ++i) {
        const auto cfg = test::random_config(rng);
        const auto& stages = cfg.topology.stages;
        std::vector<SwitchStates> states;
        if (stages.size() == 1) {
            states.push_back({std::nullopt});
            for (int o = 0; o < stages[0].outputs_used; ++o) {
                states.push_back({o});
            }
        } else {
            for (int a = 0; a < stages[0].outputs_used; ++a) {
                states.push_back({a, std::nullopt});
                for (int b = 0; b < stages[1].outputs_used; ++b) {
                    states.push_back({a, b});
                }
            }
        }
        std::set<std::uint32_t> seen;
        for (const auto& st : states) {
            Slot slot;
            slot.stage_states = st;
            const auto word = encode_select(cfg, slot);
            CHECK(word.width == select_width(cfg));
            CHECK(decode_select(cfg, word) == st);
            CHECK(seen.insert(word.bits).second);
        }
    }
}

TEST_CASE("select line counts") {
    CHECK(select_width(test::paper_static()) == 7);
    CHECK(select_width(test::paper_dynamic()) == 4);
    auto cfg = test::paper_static();
    cfg.topology.stages[1].has_decoder = false;
    CHECK(throws_code(ErrorCode::TopologyEncodingUnsupported, [&] { (void)select_width(cfg); }));
}

TEST_CASE("malformed select words are rejected") {
    const auto dyn = test::paper_dynamic();
    CHECK(throws_code(ErrorCode::InvalidOneHot, [&] { (void)decode_select(dyn, SelectWord{0b0110, 4}); }));
    CHECK(decode_select(dyn, SelectWord{0, 4}) == SwitchStates{std::nullopt});
    CHECK(throws_code(ErrorCode::InvalidSelectWord, [&] { (void)decode_select(dyn, SelectWord{1, 5}); }));
    CHECK(throws_code(ErrorCode::InvalidSelectWord, [&] { (void)decode_select(dyn, SelectWord{0b10000, 4}); }));

    const auto st = test::paper_static();
    // Stage-1 address 5 is wired but unused on the 4-output first stage.
    CHECK(throws_code(ErrorCode::InvalidSelectWord, [&] { (void)decode_select(st, SelectWord{0b0000101, 7}); }));
    CHECK(decode_select(st, SelectWord{0, 7}) == SwitchStates{0, std::nullopt});
    Slot bad;
    bad.stage_states = {9, 0};
    CHECK(throws_code(ErrorCode::InvalidSlotState, [&] { (void)encode_select(st, bad); }));
    bad.stage_states = {std::nullopt, 0};
    CHECK(throws_code(ErrorCode::InvalidSlotState, [&] { (void)encode_select(st, bad); }));
}

TEST_CASE("dynamic routing connects one zone") {
    auto cfg = test::paper_dynamic();
    cfg.routing = DynamicRouting{4, 3, 0};
    cfg.electrode_count = 12;
    cfg.crosstalk = CrosstalkMatrix(12);
    const auto r = route_dynamic(cfg, 2);
    CHECK(r.addressable() == 12);
    for (const auto& l : r.links) {
        if (l.electrode / 4 == 2) {
            CHECK(l.demux_output == l.electrode % 4);
        } else {
            CHECK_FALSE(l.demux_output.has_value());
        }
    }
    CHECK(throws_code(ErrorCode::ZoneOutOfRange, [&] { (void)route_dynamic(cfg, 3); }));
    CHECK(throws_code(ErrorCode::InvalidTopology, [&] { (void)route_dynamic(test::paper_dynamic(), 0); }));
}

TEST_CASE("timing check on the paper boards") {
    const auto st = test::paper_static();
    CHECK(check_timing(st, compile_frame(st, test::static_levels())).empty());
    const auto dyn = test::paper_dynamic();
    CHECK(check_timing(dyn, compile_frame(dyn, std::vector<double>(4, 1.0))).empty());
}

TEST_CASE("two-step without C1 starves the second stage") {
    auto cfg = test::paper_static();
    cfg.topology.stages[0].hold_capacitance_f = 0.0;
    const auto v = check_timing(cfg, compile_frame(cfg, test::static_levels()));
    REQUIRE(v.size() == 8);
    for (const auto& x : v) {
        CHECK(x.kind == ViolationKind::ChargeStarvation);
        // ln(20 V / 1 mV) / ln(655 / 470) = 29.8 -> 30 refreshes
        CHECK(x.required_s == 30.0);
        CHECK(x.available_s == 8.0);
    }
}

TEST_CASE("single-step delivery through a shared stage-2 address divides voltage") {
    auto cfg = test::paper_static();
    cfg.topology.charging = ChargingMode::SingleStep;
    cfg.topology.stages[0].hold_capacitance_f = 0.0;
    const auto frame = compile_frame(cfg, test::static_levels());
    CHECK(cfg.topology.slots_per_refresh() == 32);
    CHECK(frame.slots.size() == 40);   // padded to the configured per-channel period
    CHECK(std::count_if(frame.slots.begin(), frame.slots.end(),
                        [](const Slot& s) { return s.purpose == SlotPurpose::Idle; }) == 8);
    const auto v = check_timing(cfg, frame);
    CHECK(v.size() == 32);
    CHECK(std::all_of(v.begin(), v.end(), [](const auto& x) { return x.kind == ViolationKind::VoltageDivision; }));
    cfg.topology.stages[1].sw.c_on_f = 0.0;
    CHECK(check_timing(cfg, compile_frame(cfg, test::static_levels())).empty());
}

TEST_CASE("slow switches and DAC are flagged") {
    auto cfg = test::paper_static();
    cfg.topology.stages[0].sw.r_on_ohm = 100.0;
    auto v = check_timing(cfg, compile_frame(cfg, test::static_levels()));
    REQUIRE_FALSE(v.empty());
    CHECK(v.front().kind == ViolationKind::RcSettle);
    CHECK(v.front().required_s > v.front().available_s);

    cfg = test::paper_static();
    const auto frame = compile_frame(cfg, test::static_levels());
    cfg.dac.settle_time_constant_s = 1e-6;
    v = check_timing(cfg, frame);
    REQUIRE(v.size() == 40);
    CHECK(v.front().kind == ViolationKind::DacSettle);
}

TEST_CASE("padding fills the per-channel period with idle slots") {
    auto cfg = test::paper_dynamic();
    cfg.per_channel_rate_hz = Rational(500000);
    const auto frame = compile_frame(cfg, std::vector<double>{1.0, 2.0, 3.0, 4.0});
    REQUIRE(frame.slots.size() == 8);
    for (std::size_t k = 4; k < 8; ++k) {
        CHECK(frame.slots[k].purpose == SlotPurpose::Idle);
        CHECK(frame.slots[k].select_word.bits == 0u);
        CHECK(frame.slots[k].dac_target_v == 4.0);
    }
}

TEST_CASE("single-channel streams idle everything but the active path") {
    const auto cfg = test::paper_static();
    const std::vector<double> values{1.0, 2.0, 3.0};
    const auto stream = compile_single_channel_stream(cfg, 9, values);
    REQUIRE(stream.size() == 3);
    CHECK(stream[0].slots[6].dac_target_v == 1.0);   // channel 9 = node 1 of group 1
    for (std::size_t r = 1; r < 3; ++r) {
        int active = 0;
        for (const auto& s : stream[r].slots) {
            if (s.purpose != SlotPurpose::Idle) {
                ++active;
                CHECK(s.dac_target_v == values[r]);
            }
        }
        CHECK(active == 2);
        CHECK(stream[r].slots[6].purpose == SlotPurpose::Stage1Charge);
        CHECK(stream[r].slots[9].purpose == SlotPurpose::Stage2Deliver);
        CHECK(stream[r].slots[9].stage_states == SwitchStates{1, 1});
    }
}
