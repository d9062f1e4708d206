#pragma once

// TraceSet export.
//
// CSV (long format): header `tick,time_s,node_id,voltage_V`, rows ordered by tick then node.
// Events CSV: header `tick,time_s,kind,slot,stage,output`; stage/output are -1 on slot markers.
//
// Binary (little-endian, columnar):
//   char[4] "TDMT" | u16 version=1 | u16 reserved=0 | u32 node_count | u64 tick_count |
//   i64 tick_seconds_num | i64 tick_seconds_den | u32 oversampling
//   node_count x (u16 length | length bytes of node id)
//   i64 ticks[tick_count]
//   node_count x f64 voltage[tick_count]     (one contiguous column per node)

#include "tdm/simulator.hpp"

#include <filesystem>
#include <iosfwd>

namespace tdm {

void write_trace_csv(std::ostream& out, const TraceSet& trace);
void write_events_csv(std::ostream& out, const TraceSet& trace);
void write_trace_binary(std::ostream& out, const TraceSet& trace);
/// Reads the columns written by write_trace_binary (events and slot_end are not stored).
[[nodiscard]] TraceSet read_trace_binary(std::istream& in);

void write_trace_csv(const std::filesystem::path& path, const TraceSet& trace);
void write_events_csv(const std::filesystem::path& path, const TraceSet& trace);
void write_trace_binary(const std::filesystem::path& path, const TraceSet& trace);
[[nodiscard]] TraceSet read_trace_binary(const std::filesystem::path& path);

}  // namespace tdm
