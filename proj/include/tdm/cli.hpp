#pragma once

// Pipelines behind the `tdmc` command: compile, simulate, report and sweep.
//
// Exit codes: 0 success, 2 validation failure (bad config, programs, manifest
// or infeasible timing on compile), 3 runtime simulation failure.

#include "tdm/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace tdm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

/// Environment variable naming the default output root.
inline constexpr const char* kOutputRootEnv = "TDM_OUTPUT_ROOT";

enum class Command { Compile, Simulate, Report, Sweep };

enum class StreamFormat { Csv, Binary };

struct SweepAxis {
    std::string parameter;        ///< JSON pointer into the config document
    nlohmann::json values;        ///< array of replacement values
};

struct RunManifest {
    Command command = Command::Simulate;
    std::filesystem::path config;
    std::vector<std::filesystem::path> programs;
    std::filesystem::path output;
    StreamFormat format = StreamFormat::Csv;
    double epsilon_v = 1e-3;
    int oversampling = 16;
    int jobs = 1;
    std::vector<SweepAxis> axes;
};

[[nodiscard]] std::optional<Command> command_from_string(std::string_view s);
[[nodiscard]] std::string_view to_string(Command c);

/// Relative paths resolve against `base_dir`; a missing output resolves under
/// $TDM_OUTPUT_ROOT (or ./tdm-out) using the manifest's stem.
[[nodiscard]] RunManifest manifest_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                                             const std::string& default_name = "run");
[[nodiscard]] RunManifest load_manifest(const std::filesystem::path& path);

/// Throws InvalidConfig when a referenced path does not exist or an axis names no config field.
void check_manifest(const RunManifest& m);

struct ProgramSet {
    std::vector<VoltageProgram> programs;
    std::optional<double> horizon_s;
    int refreshes = 8;            ///< frames to run when every program is DC
};

/// Reads program files (.json or .csv); with no files, every channel holds 0 V.
[[nodiscard]] ProgramSet load_programs(const std::vector<std::filesystem::path>& paths, const SystemConfig& cfg);

/// Frame stream for the program set: a repeated static frame when all programs are DC and
/// no horizon is given, otherwise one frame per per-channel period over the horizon.
[[nodiscard]] FrameStream compile_programs(const SystemConfig& cfg, const ProgramSet& set);

int cmd_compile(const RunManifest& m, std::ostream& log);
int cmd_simulate(const RunManifest& m, std::ostream& log);
int cmd_report(const RunManifest& m, std::ostream& log);
int cmd_sweep(const RunManifest& m, std::ostream& log);

/// Parses argv and dispatches; never throws.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tdm::cli
