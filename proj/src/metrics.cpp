#include "tdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace tdm {

double crosstalk_db(double drive_amplitude_v, double induced_amplitude_v) {
    if (!(drive_amplitude_v > 0.0)) {
        throw Error(ErrorCode::ZeroDrive, "crosstalk needs a positive drive amplitude");
    }
    if (induced_amplitude_v == 0.0) {
        return -std::numeric_limits<double>::infinity();
    }
    return 20.0 * std::log10(induced_amplitude_v / drive_amplitude_v);
}

CrosstalkMeasurement measure_crosstalk(const SystemConfig& cfg, int aggressor_channel, const WaveformSpec& drive,
                                       int oversampling) {
    require_valid(cfg);
    const auto program = sample(drive, cfg.per_channel_rate_hz, cfg.dac.full_scale_v, aggressor_channel);
    std::vector<double> values(program.sample_count());
    for (std::size_t r = 0; r < values.size(); ++r) {
        values[r] = program.value(r);
    }
    const auto stream = compile_single_channel_stream(cfg, aggressor_channel, values, 0.0);

    SimOptions opts;
    opts.oversampling = oversampling;
    for (int e = 0; e < cfg.electrode_count; ++e) {
        opts.probe.push_back("e" + std::to_string(e));
    }
    const auto trace = run(cfg, stream, opts);

    const std::size_t samples = trace.ticks.size();
    const auto slots_per_frame = stream.front().slots.size();
    std::size_t begin = slots_per_frame * static_cast<std::size_t>(oversampling);
    if (const auto* sine = std::get_if<SineShape>(&drive.shape); sine && sine->frequency_hz > 0.0) {
        const double total_s = trace.time_s(samples - 1);
        const double period_s = 1.0 / sine->frequency_hz;
        const double whole = std::floor((total_s - trace.time_s(begin)) / period_s + 1e-9);
        if (whole >= 1.0) {
            const double start_s = total_s - whole * period_s;
            const double tick_s = to_double(trace.tick_seconds);
            begin = std::max(begin, static_cast<std::size_t>(std::llround(start_s / tick_s)));
        }
    }

    auto half_p2p = [&](const std::vector<double>& s) {
        const auto [lo, hi] = std::minmax_element(s.begin() + static_cast<std::ptrdiff_t>(begin), s.end());
        return 0.5 * (*hi - *lo);
    };

    CrosstalkMeasurement out;
    out.aggressor_electrode = electrode_of_channel(cfg, aggressor_channel);
    out.drive_amplitude_v = half_p2p(trace.series[static_cast<std::size_t>(out.aggressor_electrode)]);
    for (int e = 0; e < cfg.electrode_count; ++e) {
        const double a = half_p2p(trace.series[static_cast<std::size_t>(e)]);
        out.induced_amplitude_v.push_back(a);
        out.db.push_back(e == out.aggressor_electrode ? 0.0 : crosstalk_db(out.drive_amplitude_v, a));
    }
    return out;
}

double droop_per_refresh(const LeakageSpec& leak, double refresh_period_s) {
    return std::abs(leak.droop_rate_v_per_s) * refresh_period_s;
}

double droop_per_refresh(const SystemConfig& cfg) {
    return droop_per_refresh(cfg.leakage, to_double(Rational(1) / cfg.per_channel_rate_hz));
}

double droop_per_refresh(const TraceSet& trace, std::string_view node_id, std::size_t begin, std::size_t end) {
    const auto& s = trace.series_for(node_id);
    end = std::min(end, s.size());
    if (begin >= end) {
        return 0.0;
    }
    const auto [lo, hi] = std::minmax_element(s.begin() + static_cast<std::ptrdiff_t>(begin),
                                              s.begin() + static_cast<std::ptrdiff_t>(end));
    return *hi - *lo;
}

Resources resource_comparison(const SystemConfig& cfg) {
    Resources r;
    r.feedthroughs_tdm = 1 + select_width(cfg);
    if (cfg.routing && cfg.routing->m_switch_fanout > 1) {
        r.feedthroughs_tdm += static_cast<int>(std::ceil(std::log2(cfg.routing->m_switch_fanout)));
    }
    r.dac_channels_tdm = 1;
    r.feedthroughs_conventional = cfg.electrode_count;
    r.dac_channels_conventional = cfg.electrode_count;
    return r;
}

double SettleReport::worst() const {
    return max_v.empty() ? 0.0 : *std::max_element(max_v.begin(), max_v.end());
}

double SettleReport::worst_last() const {
    return last_v.empty() ? 0.0 : *std::max_element(last_v.begin(), last_v.end());
}

SettleReport settle_error(const SystemConfig& cfg, const FrameStream& stream, const TraceSet& trace) {
    const auto n = static_cast<std::size_t>(cfg.demux_channels());
    SettleReport rep;
    rep.errors.resize(n);
    rep.delivery_errors.resize(n);
    std::vector<double> target(n, 0.0);
    std::vector<double> held(n, 0.0);
    std::vector<double> window(n, -1.0);   // running max of the open hold interval, -1 when closed
    std::vector<int> electrode(n);
    for (std::size_t c = 0; c < n; ++c) {
        electrode[c] = electrode_of_channel(cfg, static_cast<int>(c));
    }
    std::size_t global = 0;
    for (const auto& frame : stream) {
        for (const auto& slot : frame.slots) {
            if (global >= trace.slot_end.size()) {
                throw Error(ErrorCode::InvalidSlotState, "trace is shorter than the stream");
            }
            const auto& volts = trace.slot_end[global];
            const bool sets_target = slot.purpose == SlotPurpose::Stage1Charge ||
                                     slot.purpose == SlotPurpose::DirectDeliver;
            if (sets_target && slot.source_channel) {
                target[static_cast<std::size_t>(*slot.source_channel)] = slot.dac_target_v;
            }
            std::vector<bool> delivered(n, false);
            for (const int c : slot.delivered_channels) {
                delivered[static_cast<std::size_t>(c)] = true;
            }
            for (std::size_t c = 0; c < n; ++c) {
                const double v = volts[static_cast<std::size_t>(electrode[c])];
                if (delivered[c]) {
                    if (window[c] >= 0.0) {
                        rep.errors[c].push_back(window[c]);
                    }
                    held[c] = target[c];
                    window[c] = std::abs(v - held[c]);
                    rep.delivery_errors[c].push_back(window[c]);
                } else if (window[c] >= 0.0) {
                    window[c] = std::max(window[c], std::abs(v - held[c]));
                }
            }
            ++global;
        }
    }
    for (std::size_t c = 0; c < n; ++c) {
        if (window[c] >= 0.0) {
            rep.errors[c].push_back(window[c]);
        }
    }
    for (const auto& e : rep.errors) {
        if (e.empty()) {
            rep.max_v.push_back(0.0);
            rep.mean_v.push_back(0.0);
            rep.first_v.push_back(0.0);
            rep.last_v.push_back(0.0);
            continue;
        }
        rep.max_v.push_back(*std::max_element(e.begin(), e.end()));
        rep.mean_v.push_back(std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size()));
        rep.first_v.push_back(e.front());
        rep.last_v.push_back(e.back());
    }
    return rep;
}

MetricsReport make_report(const SystemConfig& cfg, const FrameStream& stream, const TraceSet* trace,
                          double epsilon_v) {
    if (stream.empty()) {
        throw Error(ErrorCode::InvalidSlotState, "empty frame stream");
    }
    MetricsReport rep;
    rep.name = cfg.name;
    const auto rate = effective_update_rate(cfg, stream.front());
    rep.effective_rate_hz = rate.effective_hz;
    rep.nominal_rate_hz = rate.nominal_hz;
    rep.slots_per_refresh = static_cast<int>(stream.front().slots.size());
    if (trace != nullptr) {
        rep.settle = settle_error(cfg, stream, *trace);
    }
    rep.droop_per_refresh_v = droop_per_refresh(cfg);
    const auto n = cfg.crosstalk.size();
    rep.crosstalk_db_matrix.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t v = 0; v < n; ++v) {
        for (std::size_t a = 0; a < n; ++a) {
            const double c = std::abs(cfg.crosstalk.at(v, a));
            rep.crosstalk_db_matrix[v][a] = c == 0.0 ? -std::numeric_limits<double>::infinity() : 20.0 * std::log10(c);
        }
    }
    rep.resources = resource_comparison(cfg);
    rep.violations = check_timing(cfg, stream.front(), epsilon_v);
    return rep;
}

namespace {

nlohmann::json finite_or_null(double x) {
    return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

std::string rational_text(const Rational& r) {
    if (r.denominator() == 1) {
        return std::to_string(r.numerator());
    }
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["effective_rate_hz"] = to_double(effective_rate_hz);
    j["effective_rate_exact"] = rational_text(effective_rate_hz);
    j["nominal_rate_hz"] = to_double(nominal_rate_hz);
    j["nominal_rate_exact"] = rational_text(nominal_rate_hz);
    j["slots_per_refresh"] = slots_per_refresh;
    j["droop_per_refresh_V"] = droop_per_refresh_v;
    j["resources"] = {{"feedthroughs_tdm", resources.feedthroughs_tdm},
                      {"feedthroughs_conventional", resources.feedthroughs_conventional},
                      {"dac_channels_tdm", resources.dac_channels_tdm},
                      {"dac_channels_conventional", resources.dac_channels_conventional}};
    if (settle) {
        j["per_channel_settle_error_V"] = {{"max", settle->max_v},
                                           {"mean", settle->mean_v},
                                           {"first_refresh", settle->first_v},
                                           {"last_refresh", settle->last_v}};
        j["settle_error_max_V"] = settle->worst();
        j["settle_error_last_refresh_max_V"] = settle->worst_last();
    }
    nlohmann::json xt = nlohmann::json::array();
    for (const auto& row : crosstalk_db_matrix) {
        nlohmann::json r = nlohmann::json::array();
        for (const double d : row) {
            r.push_back(finite_or_null(d));
        }
        xt.push_back(std::move(r));
    }
    j["crosstalk_db_matrix"] = std::move(xt);
    nlohmann::json viol = nlohmann::json::array();
    for (const auto& v : violations) {
        viol.push_back({{"slot", v.slot}, {"kind", std::string(to_string(v.kind))}, {"message", v.message}});
    }
    j["timing_violations"] = std::move(viol);
    return j;
}

std::vector<std::string> MetricsReport::csv_header() {
    return {"name",
            "effective_rate_hz",
            "nominal_rate_hz",
            "slots_per_refresh",
            "settle_error_max_V",
            "settle_error_last_refresh_max_V",
            "droop_per_refresh_V",
            "feedthroughs_tdm",
            "feedthroughs_conventional",
            "dac_channels_tdm",
            "dac_channels_conventional",
            "timing_violations"};
}

std::vector<std::string> MetricsReport::csv_row() const {
    return {name,
            rational_text(effective_rate_hz),
            rational_text(nominal_rate_hz),
            std::to_string(slots_per_refresh),
            settle ? fmt(settle->worst()) : "",
            settle ? fmt(settle->worst_last()) : "",
            fmt(droop_per_refresh_v),
            std::to_string(resources.feedthroughs_tdm),
            std::to_string(resources.feedthroughs_conventional),
            std::to_string(resources.dac_channels_tdm),
            std::to_string(resources.dac_channels_conventional),
            std::to_string(violations.size())};
}

}  // namespace tdm
