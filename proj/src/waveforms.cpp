#include "tdm/waveforms.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace tdm {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

double pwl_value(const PwlShape& pwl, double t) {
    const auto& bp = pwl.breakpoints;
    if (bp.empty()) {
        return 0.0;
    }
    if (t <= bp.front().first) {
        return bp.front().second;
    }
    if (t >= bp.back().first) {
        return bp.back().second;
    }
    const auto hi = std::upper_bound(bp.begin(), bp.end(), t,
                                     [](double x, const auto& p) { return x < p.first; });
    const auto lo = hi - 1;
    const double frac = (t - lo->first) / (hi->first - lo->first);
    return lo->second + frac * (hi->second - lo->second);
}

}  // namespace

double WaveformSpec::value_at(double t) const {
    return std::visit(overloaded{
                          [](const DcShape& dc) { return dc.value_v; },
                          [t](const SineShape& s) {
                              return s.offset_v +
                                     s.amplitude_v * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t + s.phase_rad);
                          },
                          [t](const PwlShape& p) { return pwl_value(p, t); },
                      },
                      shape);
}

double WaveformSpec::peak_abs() const {
    return std::visit(overloaded{
                          [](const DcShape& dc) { return std::abs(dc.value_v); },
                          [](const SineShape& s) { return std::abs(s.offset_v) + std::abs(s.amplitude_v); },
                          [](const PwlShape& p) {
                              double m = 0.0;
                              for (const auto& [t, v] : p.breakpoints) {
                                  m = std::max(m, std::abs(v));
                              }
                              return m;
                          },
                      },
                      shape);
}

std::size_t VoltageProgram::sample_count() const {
    if (const auto* w = std::get_if<SampledWaveform>(&kind)) {
        return w->samples.size();
    }
    return 1;
}

double VoltageProgram::value(std::size_t index) const {
    if (const auto* dc = std::get_if<DcLevel>(&kind)) {
        return dc->volts;
    }
    const auto& s = std::get<SampledWaveform>(kind).samples;
    return s.at(index);
}

VoltageProgram sample(const WaveformSpec& spec, Rational rate_hz, double full_scale_v, int channel_id) {
    if (rate_hz <= 0) {
        throw Error(ErrorCode::InvalidWaveform, "sample rate must be > 0");
    }
    if (const auto* pwl = std::get_if<PwlShape>(&spec.shape)) {
        for (std::size_t i = 1; i < pwl->breakpoints.size(); ++i) {
            if (!(pwl->breakpoints[i].first > pwl->breakpoints[i - 1].first)) {
                throw Error(ErrorCode::InvalidWaveform, "breakpoint times must be strictly increasing");
            }
        }
    }
    // A small relative slack absorbs floating-point rounding of peak values.
    if (spec.peak_abs() > full_scale_v * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "waveform peak " << spec.peak_abs() << " V exceeds full scale " << full_scale_v << " V";
        throw Error(ErrorCode::AmplitudeExceedsFullScale, os.str());
    }
    const double rate = to_double(rate_hz);
    std::int64_t count = 0;
    try {
        count = require_integral(spec.duration_s * rate, "waveform duration * rate", 1e-6);
    } catch (const Error& e) {
        throw Error(ErrorCode::InvalidWaveform, e.what());
    }
    if (count < 1) {
        throw Error(ErrorCode::InvalidWaveform, "waveform duration shorter than one sample period");
    }

    VoltageProgram program;
    program.channel_id = channel_id;
    program.rate_hz = rate_hz;
    SampledWaveform wf;
    wf.samples.reserve(static_cast<std::size_t>(count));
    for (std::int64_t k = 0; k < count; ++k) {
        const double t = to_double(Rational(k) / rate_hz);
        wf.samples.push_back(spec.value_at(t));
    }
    program.kind = std::move(wf);
    return program;
}

ZohReference::ZohReference(VoltageProgram program, double latency_s, double initial_v)
    : program_(std::move(program)), rate_(to_double(program_.rate_hz)), latency_(latency_s), initial_(initial_v) {}

double ZohReference::operator()(double t) const {
    const double x = (t - latency_) * rate_;
    // Slot-boundary instants land on integers up to rounding; bias toward the later sample.
    const double idx = std::floor(x + 1e-9);
    if (idx < 0.0) {
        return initial_;
    }
    if (program_.is_dc()) {
        return program_.value(0);
    }
    const auto n = program_.sample_count();
    const auto i = std::min(static_cast<std::size_t>(idx), n - 1);
    return program_.value(i);
}

ZohReference zoh_reference(const VoltageProgram& program, double latency_s, double initial_v) {
    return ZohReference(program, latency_s, initial_v);
}

ReconstructionError reconstruction_error(const ElectrodeTrace& trace, const ZohReference& ref) {
    ReconstructionError out;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < trace.volts.size(); ++i) {
        const double e = trace.volts[i] - ref(trace.time_s[i]);
        sum_sq += e * e;
        out.max_abs_full_v = std::max(out.max_abs_full_v, std::abs(e));
    }
    if (!trace.volts.empty()) {
        out.rms_full_v = std::sqrt(sum_sq / static_cast<double>(trace.volts.size()));
    }
    sum_sq = 0.0;
    for (const auto i : trace.boundary_indices) {
        const double e = trace.volts.at(i) - ref(trace.time_s.at(i));
        sum_sq += e * e;
        out.max_abs_boundary_v = std::max(out.max_abs_boundary_v, std::abs(e));
    }
    if (!trace.boundary_indices.empty()) {
        out.rms_boundary_v = std::sqrt(sum_sq / static_cast<double>(trace.boundary_indices.size()));
    }
    return out;
}

WaveformSpec waveform_from_json(const nlohmann::json& j) {
    try {
        WaveformSpec spec;
        const auto kind = j.at("kind").get<std::string>();
        spec.duration_s = j.value("duration_s", 0.0);
        if (kind == "dc") {
            spec.shape = DcShape{j.at("value_V").get<double>()};
        } else if (kind == "sine") {
            spec.shape = SineShape{j.at("amplitude_V").get<double>(), j.at("frequency_Hz").get<double>(),
                                   j.value("phase_rad", 0.0), j.value("offset_V", 0.0)};
        } else if (kind == "pwl") {
            PwlShape pwl;
            for (const auto& bp : j.at("breakpoints")) {
                pwl.breakpoints.emplace_back(bp.at(0).get<double>(), bp.at(1).get<double>());
            }
            spec.shape = std::move(pwl);
        } else {
            throw Error(ErrorCode::InvalidWaveform, "unknown waveform kind '" + kind + "'");
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::InvalidWaveform, e.what());
    }
}

nlohmann::json waveform_to_json(const WaveformSpec& spec) {
    nlohmann::json j = std::visit(
        overloaded{
            [](const DcShape& dc) { return nlohmann::json{{"kind", "dc"}, {"value_V", dc.value_v}}; },
            [](const SineShape& s) {
                return nlohmann::json{{"kind", "sine"},
                                      {"amplitude_V", s.amplitude_v},
                                      {"frequency_Hz", s.frequency_hz},
                                      {"phase_rad", s.phase_rad},
                                      {"offset_V", s.offset_v}};
            },
            [](const PwlShape& p) {
                nlohmann::json bps = nlohmann::json::array();
                for (const auto& [t, v] : p.breakpoints) {
                    bps.push_back({t, v});
                }
                return nlohmann::json{{"kind", "pwl"}, {"breakpoints", bps}};
            },
        },
        spec.shape);
    j["duration_s"] = spec.duration_s;
    return j;
}

std::vector<VoltageProgram> programs_from_csv(const std::filesystem::path& path, Rational rate_hz) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::FormatError, path.string() + ": empty program CSV");
    }
    std::map<int, std::map<std::int64_t, double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") {
            continue;
        }
        std::istringstream ls(line);
        std::string ch, idx, volts;
        if (!std::getline(ls, ch, ',') || !std::getline(ls, idx, ',') || !std::getline(ls, volts)) {
            throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": expected 3 columns");
        }
        try {
            rows[std::stoi(ch)][std::stoll(idx)] = std::stod(volts);
        } catch (const std::logic_error&) {
            throw Error(ErrorCode::FormatError, path.string() + ":" + std::to_string(line_no) + ": bad number");
        }
    }
    std::vector<VoltageProgram> programs;
    for (const auto& [channel, samples] : rows) {
        SampledWaveform wf;
        std::int64_t expect = 0;
        for (const auto& [i, v] : samples) {
            if (i != expect++) {
                throw Error(ErrorCode::FormatError,
                            "channel " + std::to_string(channel) + " has a gap in sample_index");
            }
            wf.samples.push_back(v);
        }
        programs.push_back(VoltageProgram{channel, std::move(wf), rate_hz});
    }
    return programs;
}

}  // namespace tdm
