#include "tdm/cli.hpp"

#include "tdm/config_io.hpp"
#include "tdm/stream_io.hpp"
#include "tdm/trace_io.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace tdm::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path output_root() {
    const char* root = std::getenv(kOutputRootEnv);
    return root != nullptr && *root != '\0' ? fs::path(root) : fs::path("tdm-out");
}

std::string rate_text(const Rational& r) {
    if (r.denominator() == 1) {
        return std::to_string(r.numerator());
    }
    return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (const char c : s) {
        out += c;
        if (c == '"') {
            out += '"';
        }
    }
    return out + "\"";
}

void write_csv_line(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        out << (i ? "," : "") << csv_field(fields[i]);
    }
    out << '\n';
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    return out;
}

int exit_code_for(const Error& e) {
    return e.code() == ErrorCode::NumericalBlowup ? kExitRuntime : kExitValidation;
}

void write_stream(const RunManifest& m, const SystemConfig& cfg, const FrameStream& stream) {
    if (m.format == StreamFormat::Binary) {
        write_stream_binary(m.output / "frames.bin", cfg, stream);
    } else {
        write_stream_csv(m.output / "frames.csv", stream);
    }
}

std::string timing_report(const SystemConfig& cfg, const FrameStream& stream,
                          const std::vector<TimingViolation>& violations) {
    const auto rate = effective_update_rate(cfg, stream.front());
    std::ostringstream os;
    os.precision(12);
    os << "config=" << cfg.name << '\n'
       << "slots_per_refresh=" << stream.front().slots.size() << '\n'
       << "effective_rate=" << rate_text(rate.effective_hz) << '\n'
       << "nominal_rate=" << rate_text(rate.nominal_hz) << '\n'
       << "frames=" << stream.size() << '\n'
       << "violations=" << violations.size() << '\n';
    for (const auto& v : violations) {
        os << "violation slot=" << v.slot << " kind=" << to_string(v.kind) << " required=" << v.required_s
           << " available=" << v.available_s << " : " << v.message << '\n';
    }
    return os.str();
}

void write_metrics(const fs::path& dir, const MetricsReport& report) {
    open_out(dir / "metrics.json") << std::setw(2) << report.to_json() << '\n';
    auto csv = open_out(dir / "metrics.csv");
    write_csv_line(csv, MetricsReport::csv_header());
    write_csv_line(csv, report.csv_row());
}

void write_levels(const fs::path& dir, const SystemConfig& cfg, const FrameStream& stream, const TraceSet& trace,
                  const SettleReport& settle) {
    auto out = open_out(dir / "levels.csv");
    out.precision(17);
    out << "channel,electrode,target_V,final_V,last_refresh_error_V\n";
    // Final target per channel: the last value charged for it.
    std::vector<double> target(static_cast<std::size_t>(cfg.demux_channels()), 0.0);
    for (const auto& frame : stream) {
        for (const auto& slot : frame.slots) {
            if ((slot.purpose == SlotPurpose::Stage1Charge || slot.purpose == SlotPurpose::DirectDeliver) &&
                slot.source_channel) {
                target[static_cast<std::size_t>(*slot.source_channel)] = slot.dac_target_v;
            }
        }
    }
    for (int c = 0; c < cfg.demux_channels(); ++c) {
        const int e = electrode_of_channel(cfg, c);
        out << c << ',' << e << ',' << target[static_cast<std::size_t>(c)] << ','
            << trace.slot_end.back()[static_cast<std::size_t>(e)] << ',' << settle.last_v[static_cast<std::size_t>(c)]
            << '\n';
    }
}

struct Loaded {
    SystemConfig cfg;
    FrameStream stream;
};

Loaded load_and_compile(const json& config_doc, const RunManifest& m) {
    Loaded l{config_from_json(config_doc), {}};
    require_valid(l.cfg);
    l.stream = compile_programs(l.cfg, load_programs(m.programs, l.cfg));
    return l;
}

// Runs the simulator and writes outputs; `dump_trace` selects simulate vs report.
MetricsReport simulate_into(const json& config_doc, const RunManifest& m, const fs::path& dir, bool dump_trace,
                            std::ostream& log) {
    const auto l = load_and_compile(config_doc, m);
    fs::create_directories(dir);
    write_stream(RunManifest{m.command, m.config, m.programs, dir, m.format, m.epsilon_v, m.oversampling, m.jobs, {}},
                 l.cfg, l.stream);
    SimOptions opts;
    opts.oversampling = m.oversampling;
    const auto trace = run(l.cfg, l.stream, opts);
    const auto report = make_report(l.cfg, l.stream, &trace, m.epsilon_v);
    if (dump_trace) {
        if (m.format == StreamFormat::Binary) {
            write_trace_binary(dir / "trace.bin", trace);
        } else {
            write_trace_csv(dir / "trace.csv", trace);
        }
        write_events_csv(dir / "events.csv", trace);
    }
    write_metrics(dir, report);
    write_levels(dir, l.cfg, l.stream, trace, *report.settle);
    open_out(dir / "timing.txt") << timing_report(l.cfg, l.stream, report.violations);
    log << "simulated " << l.stream.size() << " frames, worst last-refresh settle error "
        << report.settle->worst_last() << " V, " << report.violations.size() << " timing violations\n";
    return report;
}

json program_to_json_value(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

}  // namespace

std::optional<Command> command_from_string(std::string_view s) {
    if (s == "compile") return Command::Compile;
    if (s == "simulate") return Command::Simulate;
    if (s == "report") return Command::Report;
    if (s == "sweep") return Command::Sweep;
    return std::nullopt;
}

std::string_view to_string(Command c) {
    switch (c) {
        case Command::Compile: return "compile";
        case Command::Simulate: return "simulate";
        case Command::Report: return "report";
        case Command::Sweep: return "sweep";
    }
    return "unknown";
}

RunManifest manifest_from_json(const json& doc, const fs::path& base_dir, const std::string& default_name) {
    try {
        RunManifest m;
        if (doc.contains("command")) {
            const auto c = command_from_string(doc.at("command").get<std::string>());
            if (!c) {
                throw Error(ErrorCode::InvalidConfig, "manifest command must be compile|simulate|report|sweep");
            }
            m.command = *c;
        }
        auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : base_dir / p; };
        if (doc.contains("config")) {
            m.config = resolve(doc.at("config").get<std::string>());
        }
        if (doc.contains("programs")) {
            const auto& p = doc.at("programs");
            if (p.is_string()) {
                m.programs.push_back(resolve(p.get<std::string>()));
            } else {
                for (const auto& e : p) {
                    m.programs.push_back(resolve(e.get<std::string>()));
                }
            }
        }
        const fs::path out = doc.contains("output") ? fs::path(doc.at("output").get<std::string>())
                                                    : fs::path(default_name);
        m.output = out.is_absolute() ? out : output_root() / out;
        const auto format = doc.value("format", std::string("csv"));
        if (format != "csv" && format != "binary") {
            throw Error(ErrorCode::InvalidConfig, "format must be csv or binary");
        }
        m.format = format == "binary" ? StreamFormat::Binary : StreamFormat::Csv;
        m.epsilon_v = doc.value("epsilon_V", 1e-3);
        m.oversampling = doc.value("oversampling", 16);
        m.jobs = doc.value("jobs", 1);
        if (doc.contains("sweep")) {
            for (const auto& a : doc.at("sweep").at("axes")) {
                SweepAxis axis{a.at("parameter").get<std::string>(), a.at("values")};
                if (!axis.values.is_array()) {
                    throw Error(ErrorCode::InvalidConfig, "sweep axis values must be an array");
                }
                m.axes.push_back(std::move(axis));
            }
        }
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("manifest: ") + e.what());
    }
}

RunManifest load_manifest(const fs::path& path) {
    return manifest_from_json(load_json(path), path.parent_path(), path.stem().string());
}

void check_manifest(const RunManifest& m) {
    if (m.config.empty()) {
        throw Error(ErrorCode::InvalidConfig, "no config given");
    }
    if (!fs::exists(m.config)) {
        throw Error(ErrorCode::InvalidConfig, "config " + m.config.string() + " does not exist");
    }
    for (const auto& p : m.programs) {
        if (!fs::exists(p)) {
            throw Error(ErrorCode::InvalidConfig, "program file " + p.string() + " does not exist");
        }
    }
    if (m.epsilon_v <= 0.0) {
        throw Error(ErrorCode::NegativeParameter, "epsilon must be > 0");
    }
    if (m.jobs < 1) {
        throw Error(ErrorCode::InvalidConfig, "jobs must be >= 1");
    }
    if (!m.axes.empty()) {
        // Axes must name fields of the full config schema (defaults included).
        const auto doc = config_to_json(config_from_json(load_json(m.config)));
        const auto raw = load_json(m.config);
        for (const auto& a : m.axes) {
            json::json_pointer ptr;
            try {
                ptr = json::json_pointer(a.parameter);
            } catch (const json::exception&) {
                throw Error(ErrorCode::InvalidConfig, "sweep axis '" + a.parameter + "' is not a JSON pointer");
            }
            if (!doc.contains(ptr) && !raw.contains(ptr)) {
                throw Error(ErrorCode::InvalidConfig, "sweep axis '" + a.parameter + "' names no config field");
            }
        }
    }
}

ProgramSet load_programs(const std::vector<fs::path>& paths, const SystemConfig& cfg) {
    ProgramSet set;
    std::optional<int> refreshes;
    for (const auto& path : paths) {
        if (path.extension() == ".csv") {
            auto csv = programs_from_csv(path, cfg.per_channel_rate_hz);
            for (auto& p : csv) {
                set.programs.push_back(std::move(p));
            }
            continue;
        }
        const auto doc = load_json(path);
        try {
            if (doc.contains("horizon_s")) {
                set.horizon_s = doc.at("horizon_s").get<double>();
            }
            if (doc.contains("refreshes")) {
                refreshes = doc.at("refreshes").get<int>();
            }
            for (const auto& p : doc.at("programs")) {
                const int channel = p.at("channel").get<int>();
                if (p.contains("dc_V")) {
                    set.programs.push_back({channel, DcLevel{p.at("dc_V").get<double>()}, cfg.per_channel_rate_hz});
                    continue;
                }
                auto spec = waveform_from_json(p.at("waveform"));
                if (spec.duration_s == 0.0) {
                    if (!set.horizon_s) {
                        throw Error(ErrorCode::InvalidWaveform, "waveform needs duration_s or a file horizon_s");
                    }
                    spec.duration_s = *set.horizon_s;
                }
                set.programs.push_back(sample(spec, cfg.per_channel_rate_hz, cfg.dac.full_scale_v, channel));
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidWaveform, path.string() + ": " + e.what());
        }
    }
    if (paths.empty()) {
        for (int c = 0; c < cfg.demux_channels(); ++c) {
            set.programs.push_back({c, DcLevel{0.0}, cfg.per_channel_rate_hz});
        }
    }
    bool all_dc = true;
    std::size_t longest = 0;
    for (const auto& p : set.programs) {
        all_dc = all_dc && p.is_dc();
        if (!p.is_dc()) {
            longest = std::max(longest, p.sample_count());
        }
    }
    if (!set.horizon_s && !all_dc) {
        set.horizon_s = to_double(Rational(static_cast<std::int64_t>(longest)) / cfg.per_channel_rate_hz);
    }
    if (refreshes) {
        if (*refreshes < 1) {
            throw Error(ErrorCode::InvalidConfig, "refreshes must be >= 1");
        }
        set.refreshes = *refreshes;
    }
    return set;
}

FrameStream compile_programs(const SystemConfig& cfg, const ProgramSet& set) {
    if (set.horizon_s) {
        return compile_dynamic_stream(cfg, set.programs, *set.horizon_s);
    }
    const auto frame = compile_static_frame(cfg, set.programs);
    return FrameStream(static_cast<std::size_t>(set.refreshes), frame);
}

int cmd_compile(const RunManifest& m, std::ostream& log) {
    check_manifest(m);
    const auto l = load_and_compile(load_json(m.config), m);
    const auto violations = check_timing(l.cfg, l.stream.front(), m.epsilon_v);
    fs::create_directories(m.output);
    write_stream(m, l.cfg, l.stream);
    const auto report = timing_report(l.cfg, l.stream, violations);
    open_out(m.output / "timing.txt") << report;
    log << report;
    if (!violations.empty()) {
        log << "error: " << to_string(ErrorCode::InfeasibleTiming) << ": " << violations.size()
            << " timing violations\n";
        return kExitValidation;
    }
    return kExitOk;
}

int cmd_simulate(const RunManifest& m, std::ostream& log) {
    check_manifest(m);
    (void)simulate_into(load_json(m.config), m, m.output, true, log);
    return kExitOk;
}

int cmd_report(const RunManifest& m, std::ostream& log) {
    check_manifest(m);
    const auto report = simulate_into(load_json(m.config), m, m.output, false, log);
    log << std::setw(2) << report.to_json() << '\n';
    return kExitOk;
}

int cmd_sweep(const RunManifest& m, std::ostream& log) {
    check_manifest(m);
    const auto base = load_json(m.config);

    std::size_t points = 1;
    for (const auto& a : m.axes) {
        points *= a.values.size();
    }
    struct Row {
        std::vector<json> values;
        std::string status = "ok";
        std::string error;
        std::optional<MetricsReport> report;
    };
    std::vector<Row> rows(points);
    for (std::size_t p = 0; p < points; ++p) {
        // Last axis varies fastest.
        std::size_t rest = p;
        rows[p].values.resize(m.axes.size());
        for (std::size_t k = m.axes.size(); k-- > 0;) {
            const auto n = m.axes[k].values.size();
            rows[p].values[k] = m.axes[k].values[rest % n];
            rest /= n;
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        for (std::size_t p = next++; p < points; p = next++) {
            std::ostringstream name;
            name << "point_" << std::setw(4) << std::setfill('0') << p;
            const fs::path dir = m.output / name.str();
            std::ostringstream point_log;
            Row& row = rows[p];
            try {
                json doc = base;
                for (std::size_t k = 0; k < m.axes.size(); ++k) {
                    doc[json::json_pointer(m.axes[k].parameter)] = row.values[k];
                }
                fs::create_directories(dir);
                open_out(dir / "config.json") << std::setw(2) << doc << '\n';
                row.report = simulate_into(doc, m, dir, false, point_log);
            } catch (const Error& e) {
                row.status = e.code() == ErrorCode::NumericalBlowup ? "runtime_error" : "validation_error";
                row.error = e.what();
            } catch (const std::exception& e) {
                row.status = "runtime_error";
                row.error = e.what();
            }
            std::lock_guard lock(log_mutex);
            log << name.str() << ": " << row.status << (row.error.empty() ? "" : " (" + row.error + ")") << '\n';
        }
    };
    const auto threads = std::min<std::size_t>(static_cast<std::size_t>(m.jobs), points);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < threads; ++t) {
        pool.emplace_back(worker);
    }
    worker();
    for (auto& t : pool) {
        t.join();
    }

    fs::create_directories(m.output);
    auto out = open_out(m.output / "sweep.csv");
    std::vector<std::string> header{"point"};
    for (const auto& a : m.axes) {
        header.push_back(a.parameter);
    }
    header.emplace_back("status");
    header.emplace_back("error");
    for (const auto& h : MetricsReport::csv_header()) {
        header.push_back(h);
    }
    write_csv_line(out, header);
    for (std::size_t p = 0; p < points; ++p) {
        std::vector<std::string> fields{std::to_string(p)};
        for (const auto& v : rows[p].values) {
            fields.push_back(v.dump());
        }
        fields.push_back(rows[p].status);
        fields.push_back(rows[p].error);
        const auto metrics = rows[p].report ? rows[p].report->csv_row()
                                            : std::vector<std::string>(MetricsReport::csv_header().size());
        fields.insert(fields.end(), metrics.begin(), metrics.end());
        write_csv_line(out, fields);
    }
    log << "sweep: " << points << " points -> " << (m.output / "sweep.csv").string() << '\n';
    return kExitOk;
}

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"TDM electrode-voltage compiler and simulator", "tdmc"};
    app.require_subcommand(1);

    struct Flags {
        std::string manifest, config, out, format;
        std::vector<std::string> programs, axes;
        std::optional<int> jobs, oversampling;
        std::optional<double> epsilon;
    } flags;

    for (const char* name : {"compile", "simulate", "report", "sweep"}) {
        auto* sub = app.add_subcommand(name, std::string(name) + " pipeline");
        sub->add_option("--manifest", flags.manifest, "Run manifest (JSON)");
        sub->add_option("--config", flags.config, "System config (JSON)");
        sub->add_option("--programs", flags.programs, "Program files (JSON or CSV)");
        sub->add_option("--out", flags.out, "Output directory");
        sub->add_option("--jobs", flags.jobs, "Parallel sweep points");
        sub->add_option("--format", flags.format, "Stream/trace format")->check(CLI::IsMember({"csv", "binary"}));
        sub->add_option("--epsilon", flags.epsilon, "Settling budget in volts");
        sub->add_option("--oversampling", flags.oversampling, "Simulator substeps per slot");
        sub->add_option("--axis", flags.axes, "Sweep axis as /json/pointer=[values]");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitValidation;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        const auto command = *command_from_string(sub->get_name());
        RunManifest m;
        if (!flags.manifest.empty()) {
            m = load_manifest(flags.manifest);
        } else {
            m = manifest_from_json(json::object(), fs::current_path(), std::string(to_string(command)));
        }
        m.command = command;
        if (!flags.config.empty()) {
            m.config = flags.config;
        }
        if (!flags.programs.empty()) {
            m.programs.assign(flags.programs.begin(), flags.programs.end());
        }
        if (!flags.out.empty()) {
            m.output = flags.out;
        }
        if (!flags.format.empty()) {
            m.format = flags.format == "binary" ? StreamFormat::Binary : StreamFormat::Csv;
        }
        if (flags.jobs) m.jobs = *flags.jobs;
        if (flags.epsilon) m.epsilon_v = *flags.epsilon;
        if (flags.oversampling) m.oversampling = *flags.oversampling;
        for (const auto& a : flags.axes) {
            const auto eq = a.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::InvalidConfig, "--axis expects /pointer=[values]");
            }
            json values = program_to_json_value(a.substr(eq + 1));
            if (!values.is_array()) {
                values = json::array({values});
            }
            m.axes.push_back({a.substr(0, eq), values});
        }
        switch (m.command) {
            case Command::Compile: return cmd_compile(m, out);
            case Command::Simulate: return cmd_simulate(m, out);
            case Command::Report: return cmd_report(m, out);
            case Command::Sweep: return cmd_sweep(m, out);
        }
        return kExitValidation;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
}

}  // namespace tdm::cli
