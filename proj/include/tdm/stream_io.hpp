#pragma once

// Export of compiled frame streams.
//
// CSV: header `tick,dac_code,dac_target_V,select_word_binary,purpose`, one row per slot;
// `tick` is the slot's first tick at oversampling 1 (= global slot index).
//
// Binary (little-endian), 32-byte header followed by 32-byte slot records:
//   header: char[4] "TDMS" | u16 version=1 | u16 stage_count | u32 frame_count |
//           u32 slots_per_frame | i64 dac_rate_num | i64 dac_rate_den
//   record: i64 global_slot | i32 dac_code | u32 select_word | f64 dac_target_V |
//           u8 purpose | u8 stage0 | u8 stage1 | u8 select_width | i32 source_channel
//   stage bytes hold the conducting output or 0xFF; source_channel is -1 when absent.
// Delivered-channel lists are not stored; read_stream_binary rebuilds them from the config.

#include "tdm/scheduler.hpp"

#include <filesystem>
#include <iosfwd>

namespace tdm {

void write_stream_csv(std::ostream& out, const FrameStream& stream);
void write_stream_binary(std::ostream& out, const SystemConfig& cfg, const FrameStream& stream);
[[nodiscard]] FrameStream read_stream_binary(std::istream& in, const SystemConfig& cfg);

void write_stream_csv(const std::filesystem::path& path, const FrameStream& stream);
void write_stream_binary(const std::filesystem::path& path, const SystemConfig& cfg, const FrameStream& stream);
[[nodiscard]] FrameStream read_stream_binary(const std::filesystem::path& path, const SystemConfig& cfg);

/// Channels refreshed by a slot with the given purpose and switch states.
[[nodiscard]] std::vector<int> delivered_channels(const SystemConfig& cfg, SlotPurpose purpose,
                                                  const SwitchStates& states, std::optional<int> source);

}  // namespace tdm
