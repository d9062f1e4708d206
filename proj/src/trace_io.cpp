#include "tdm/trace_io.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace tdm {

namespace {

constexpr std::array<char, 4> kMagic{'T', 'D', 'M', 'T'};
constexpr std::uint16_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) {
        throw Error(ErrorCode::FormatError, "truncated trace file");
    }
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

template <typename Fn>
void with_file(const std::filesystem::path& path, std::ios::openmode mode, Fn&& fn) {
    std::ofstream out(path, mode);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    fn(out);
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing " + path.string());
    }
}

}  // namespace

void write_trace_csv(std::ostream& out, const TraceSet& trace) {
    out << "tick,time_s,node_id,voltage_V\n";
    out.precision(17);
    for (std::size_t t = 0; t < trace.ticks.size(); ++t) {
        const double time = trace.time_s(t);
        for (std::size_t k = 0; k < trace.node_ids.size(); ++k) {
            out << trace.ticks[t] << ',' << time << ',' << trace.node_ids[k] << ',' << trace.series[k][t] << '\n';
        }
    }
}

void write_events_csv(std::ostream& out, const TraceSet& trace) {
    out << "tick,time_s,kind,slot,stage,output\n";
    out.precision(17);
    for (const auto& e : trace.events) {
        out << e.tick << ',' << to_double(Rational(e.tick) * trace.tick_seconds) << ',' << to_string(e.kind) << ','
            << e.slot << ',' << e.stage << ',' << e.output << '\n';
    }
}

void write_trace_binary(std::ostream& out, const TraceSet& trace) {
    out.write(kMagic.data(), kMagic.size());
    put<std::uint16_t>(out, kVersion);
    put<std::uint16_t>(out, 0);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.node_ids.size()));
    put<std::uint64_t>(out, trace.ticks.size());
    put<std::int64_t>(out, trace.tick_seconds.numerator());
    put<std::int64_t>(out, trace.tick_seconds.denominator());
    put<std::uint32_t>(out, static_cast<std::uint32_t>(trace.oversampling));
    for (const auto& id : trace.node_ids) {
        put<std::uint16_t>(out, static_cast<std::uint16_t>(id.size()));
        out.write(id.data(), static_cast<std::streamsize>(id.size()));
    }
    out.write(reinterpret_cast<const char*>(trace.ticks.data()),
              static_cast<std::streamsize>(trace.ticks.size() * sizeof(Tick)));
    for (const auto& s : trace.series) {
        out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size() * sizeof(double)));
    }
}

TraceSet read_trace_binary(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw Error(ErrorCode::FormatError, "not a TDMT trace file");
    }
    if (get<std::uint16_t>(in) != kVersion) {
        throw Error(ErrorCode::FormatError, "unsupported trace version");
    }
    (void)get<std::uint16_t>(in);
    const auto nodes = get<std::uint32_t>(in);
    const auto ticks = get<std::uint64_t>(in);
    const auto num = get<std::int64_t>(in);
    const auto den = get<std::int64_t>(in);
    if (den <= 0) {
        throw Error(ErrorCode::FormatError, "bad tick duration");
    }
    TraceSet trace;
    trace.tick_seconds = Rational(num, den);
    trace.oversampling = static_cast<int>(get<std::uint32_t>(in));
    for (std::uint32_t k = 0; k < nodes; ++k) {
        std::string id(get<std::uint16_t>(in), '\0');
        if (!in.read(id.data(), static_cast<std::streamsize>(id.size()))) {
            throw Error(ErrorCode::FormatError, "truncated node id");
        }
        trace.node_ids.push_back(std::move(id));
    }
    trace.ticks.resize(ticks);
    if (!in.read(reinterpret_cast<char*>(trace.ticks.data()), static_cast<std::streamsize>(ticks * sizeof(Tick)))) {
        throw Error(ErrorCode::FormatError, "truncated tick column");
    }
    trace.series.assign(nodes, std::vector<double>(ticks));
    for (auto& s : trace.series) {
        if (!in.read(reinterpret_cast<char*>(s.data()), static_cast<std::streamsize>(ticks * sizeof(double)))) {
            throw Error(ErrorCode::FormatError, "truncated voltage column");
        }
    }
    return trace;
}

void write_trace_csv(const std::filesystem::path& path, const TraceSet& trace) {
    with_file(path, std::ios::out, [&](std::ostream& out) { write_trace_csv(out, trace); });
}

void write_events_csv(const std::filesystem::path& path, const TraceSet& trace) {
    with_file(path, std::ios::out, [&](std::ostream& out) { write_events_csv(out, trace); });
}

void write_trace_binary(const std::filesystem::path& path, const TraceSet& trace) {
    with_file(path, std::ios::out | std::ios::binary, [&](std::ostream& out) { write_trace_binary(out, trace); });
}

TraceSet read_trace_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return read_trace_binary(in);
}

}  // namespace tdm
