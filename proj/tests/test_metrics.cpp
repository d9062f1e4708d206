#include "support.hpp"
#include "tdm/metrics.hpp"

#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>

using namespace tdm;
using namespace tdm::test;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("crosstalk in dB") {
    // 20 log10 evaluated independently with natural logs
    auto db = [](double r) { return 20.0 * std::log(r) / std::log(10.0); };
    CHECK_THAT(crosstalk_db(1.0, 0.2512), WithinAbs(-11.99960729869683, 1e-12));
    CHECK_THAT(crosstalk_db(1.0, 0.0355), WithinAbs(-28.99543293889812, 1e-12));
    CHECK_THAT(crosstalk_db(1.0, 0.0398), WithinAbs(-28.002338558526244, 1e-12));
    CHECK_THAT(crosstalk_db(1.0, 0.0178), WithinAbs(-34.99159995382212, 1e-12));
    CHECK_THAT(crosstalk_db(4.0, 1.0), WithinAbs(db(0.25), 1e-12));
    CHECK(crosstalk_db(1.0, 0.0) == -std::numeric_limits<double>::infinity());
    try {
        (void)crosstalk_db(0.0, 1.0);
        FAIL("expected ZeroDrive");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ZeroDrive);
    }
}

TEST_CASE("measured crosstalk recovers configured couplings on the static board") {
    const auto cfg = paper_static();
    const WaveformSpec drive{SineShape{5.0, 1e3, 0.0, 0.0}, 2e-3};
    const auto m = measure_crosstalk(cfg, 0, drive);
    CHECK(m.aggressor_electrode == 0);
    CHECK_THAT(m.drive_amplitude_v, WithinRel(5.0, 0.01));
    CHECK_THAT(m.db[1], WithinAbs(-12.0, 0.5));
    CHECK(m.db[0] == 0.0);
    CHECK(m.db[2] == -std::numeric_limits<double>::infinity());
}

TEST_CASE("measured crosstalk recovers configured couplings on the dynamic board") {
    const auto cfg = paper_dynamic();
    const WaveformSpec drive{SineShape{5.0, 10e3, 0.0, 0.0}, 200e-6};
    const auto m = measure_crosstalk(cfg, 0, drive);
    CHECK_THAT(m.db[1], WithinAbs(-29.0, 0.5));
    CHECK_THAT(m.db[2], WithinAbs(-28.0, 0.5));
    CHECK_THAT(m.db[3], WithinAbs(-35.0, 0.5));
}

TEST_CASE("droop per refresh") {
    CHECK_THAT(droop_per_refresh(LeakageSpec{-19.2e-3, 10.0}, 26.7e-6), WithinRel(5.1264e-7, 1e-12));
    CHECK_THAT(droop_per_refresh(paper_static()), WithinRel(19.2e-3 / 37500.0, 1e-12));
    CHECK(droop_per_refresh(LeakageSpec{}, 1.0) == 0.0);
}

TEST_CASE("droop measured from a trace") {
    TraceSet t;
    t.node_ids = {"e0"};
    t.series = {{1.0, 0.9, 0.95, 0.7, 2.0}};
    CHECK_THAT(droop_per_refresh(t, "e0", 0, 4), WithinAbs(0.3, 1e-15));
    CHECK(droop_per_refresh(t, "e0", 3, 3) == 0.0);
    CHECK_THAT(droop_per_refresh(t, "e0", 0, 99), WithinAbs(1.3, 1e-15));
}

TEST_CASE("resource comparison") {
    CHECK(resource_comparison(paper_static()) == Resources{8, 32, 1, 32});
    CHECK(resource_comparison(paper_dynamic()) == Resources{5, 4, 1, 4});
    auto routed = paper_dynamic();
    routed.routing = DynamicRouting{4, 3, 0};
    routed.electrode_count = 12;
    routed.crosstalk = CrosstalkMatrix(12);
    CHECK(resource_comparison(routed) == Resources{7, 12, 1, 12});
}

TEST_CASE("settle error tracks hold intervals") {
    const auto cfg = ideal_dynamic();
    // values on the code grid, so quantization adds nothing
    std::vector<double> values;
    for (const int code : {819, 1638, -2457, 3276}) {
        values.push_back(cfg.dac.dequantize(code));
    }
    const auto frame = compile_frame(cfg, values);
    const FrameStream stream(3, frame);
    const auto trace = run(cfg, stream, {.oversampling = 4});
    const auto rep = settle_error(cfg, stream, trace);
    REQUIRE(rep.errors.size() == 4);
    for (std::size_t c = 0; c < 4; ++c) {
        CHECK(rep.errors[c].size() == 3);
        CHECK(rep.delivery_errors[c].size() == 3);
        CHECK(rep.max_v[c] < 1e-9);
    }
    CHECK(rep.worst() < 1e-9);

    // Off-grid requests count their quantization error.
    const auto coarse = compile_frame(cfg, std::vector<double>{1.0, 2.0, 3.0, 4.0});
    const auto coarse_rep = settle_error(cfg, FrameStream{coarse}, run(cfg, {coarse}, {.oversampling = 4}));
    CHECK(coarse_rep.worst() <= cfg.dac.lsb_v() / 2.0);
    CHECK(coarse_rep.worst() > 0.0);

    // Disturb channel 2 while it holds: the error is charged to the open interval.
    auto bumped = trace;
    bumped.slot_end[4][2] += 0.25;
    const auto rep2 = settle_error(cfg, stream, bumped);
    CHECK_THAT(rep2.errors[2][0], WithinAbs(0.25, 1e-9));
    CHECK(rep2.delivery_errors[2][0] < 1e-9);
    CHECK(rep2.errors[2][1] < 1e-9);

    auto short_trace = trace;
    short_trace.slot_end.pop_back();
    CHECK_THROWS_AS(settle_error(cfg, stream, short_trace), Error);
}

TEST_CASE("report serialization") {
    const auto cfg = paper_static();
    const auto frame = compile_static_frame(cfg, dc_programs(cfg, static_levels()));
    const auto rep = make_report(cfg, {frame});
    CHECK(rep.effective_rate_hz == Rational(37500));
    CHECK(rep.nominal_rate_hz == Rational(46875));
    CHECK(rep.slots_per_refresh == 40);
    CHECK(rep.violations.empty());
    const auto j = rep.to_json();
    CHECK(j["effective_rate_exact"] == "37500");
    CHECK(j["slots_per_refresh"] == 40);
    CHECK(j["crosstalk_db_matrix"][1][0].get<double>() == Catch::Approx(-11.9996).epsilon(1e-5));
    CHECK(j["crosstalk_db_matrix"][0][1].is_null());
    CHECK(!j.contains("settle_error_max_V"));
    const auto header = MetricsReport::csv_header();
    const auto row = rep.csv_row();
    REQUIRE(header.size() == row.size());
    CHECK(row[1] == "37500");
    CHECK(row[4].empty());
    CHECK(row[7] == "8");
    CHECK(row[8] == "32");
    CHECK_THROWS_AS(make_report(cfg, {}), Error);
}
