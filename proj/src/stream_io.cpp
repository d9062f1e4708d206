#include "tdm/stream_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <set>
#include <ostream>

namespace tdm {

namespace {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

constexpr std::array<char, 4> kMagic{'T', 'D', 'M', 'S'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kNoState = 0xFF;

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
        throw Error(ErrorCode::FormatError, "truncated frame stream");
    }
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

std::uint8_t state_byte(const SwitchStates& states, std::size_t stage) {
    if (stage >= states.size() || !states[stage]) {
        return kNoState;
    }
    return static_cast<std::uint8_t>(*states[stage]);
}

}  // namespace

std::vector<int> delivered_channels(const SystemConfig& cfg, SlotPurpose purpose, const SwitchStates& states,
                                    std::optional<int> source) {
    switch (purpose) {
        case SlotPurpose::DirectDeliver:
            return source ? std::vector<int>{*source} : std::vector<int>{};
        case SlotPurpose::Stage2Deliver: {
            std::vector<int> group;
            const int s1 = cfg.topology.stages.at(0).outputs_used;
            const int s2 = cfg.topology.stages.at(1).outputs_used;
            for (int i = 0; i < s1; ++i) {
                group.push_back(i * s2 + states.at(1).value());
            }
            return group;
        }
        case SlotPurpose::Stage1Charge:
        case SlotPurpose::Idle:
            return {};
    }
    return {};
}

void write_stream_csv(std::ostream& out, const FrameStream& stream) {
    out << "tick,dac_code,dac_target_V,select_word_binary,purpose\n";
    out.precision(17);
    std::int64_t global = 0;
    for (const auto& frame : stream) {
        for (const auto& slot : frame.slots) {
            out << global++ << ',' << slot.dac_code << ',' << slot.dac_target_v << ',' << slot.select_word.to_binary()
                << ',' << to_string(slot.purpose) << '\n';
        }
    }
}

void write_stream_binary(std::ostream& out, const SystemConfig& cfg, const FrameStream& stream) {
    out.write(kMagic.data(), kMagic.size());
    put<std::uint16_t>(out, kVersion);
    put<std::uint16_t>(out, static_cast<std::uint16_t>(cfg.topology.stages.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(stream.size()));
    put<std::uint32_t>(out, stream.empty() ? 0u : static_cast<std::uint32_t>(stream.front().slots.size()));
    put<std::int64_t>(out, cfg.dac.update_rate_hz.numerator());
    put<std::int64_t>(out, cfg.dac.update_rate_hz.denominator());
    std::int64_t global = 0;
    for (const auto& frame : stream) {
        if (frame.slots.size() != stream.front().slots.size()) {
            throw Error(ErrorCode::FormatError, "binary streams need equal-length frames");
        }
        for (const auto& slot : frame.slots) {
            put<std::int64_t>(out, global++);
            put<std::int32_t>(out, slot.dac_code);
            put<std::uint32_t>(out, slot.select_word.bits);
            put<double>(out, slot.dac_target_v);
            put<std::uint8_t>(out, static_cast<std::uint8_t>(slot.purpose));
            put<std::uint8_t>(out, state_byte(slot.stage_states, 0));
            put<std::uint8_t>(out, state_byte(slot.stage_states, 1));
            put<std::uint8_t>(out, static_cast<std::uint8_t>(slot.select_word.width));
            put<std::int32_t>(out, slot.source_channel.value_or(-1));
        }
    }
    if (!out) {
        throw Error(ErrorCode::IoError, "failed writing frame stream");
    }
}

FrameStream read_stream_binary(std::istream& in, const SystemConfig& cfg) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) {
        throw Error(ErrorCode::FormatError, "not a TDMS frame stream");
    }
    if (get<std::uint16_t>(in) != kVersion) {
        throw Error(ErrorCode::FormatError, "unsupported frame stream version");
    }
    const auto stage_count = get<std::uint16_t>(in);
    const auto frame_count = get<std::uint32_t>(in);
    const auto slots_per_frame = get<std::uint32_t>(in);
    const auto num = get<std::int64_t>(in);
    const auto den = get<std::int64_t>(in);
    if (stage_count != cfg.topology.stages.size() || den == 0 || Rational(num, den) != cfg.dac.update_rate_hz) {
        throw Error(ErrorCode::FormatError, "frame stream was compiled for a different configuration");
    }
    FrameStream stream(frame_count);
    for (auto& frame : stream) {
        std::set<int> covered;
        for (std::uint32_t k = 0; k < slots_per_frame; ++k) {
            Slot slot;
            (void)get<std::int64_t>(in);
            slot.index = static_cast<int>(k);
            slot.dac_code = get<std::int32_t>(in);
            slot.select_word.bits = get<std::uint32_t>(in);
            slot.dac_target_v = get<double>(in);
            const auto purpose = get<std::uint8_t>(in);
            if (purpose > static_cast<std::uint8_t>(SlotPurpose::Idle)) {
                throw Error(ErrorCode::FormatError, "bad slot purpose");
            }
            slot.purpose = static_cast<SlotPurpose>(purpose);
            for (std::uint16_t s = 0; s < 2; ++s) {
                const auto b = get<std::uint8_t>(in);
                if (s < stage_count) {
                    slot.stage_states.push_back(b == kNoState ? std::nullopt : std::optional<int>(b));
                }
            }
            slot.select_word.width = get<std::uint8_t>(in);
            const auto source = get<std::int32_t>(in);
            if (source >= 0) {
                slot.source_channel = source;
            }
            slot.delivered_channels = delivered_channels(cfg, slot.purpose, slot.stage_states, slot.source_channel);
            covered.insert(slot.delivered_channels.begin(), slot.delivered_channels.end());
            frame.slots.push_back(std::move(slot));
        }
        frame.slots_per_refresh = static_cast<int>(slots_per_frame);
        frame.channels_covered.assign(covered.begin(), covered.end());
    }
    return stream;
}

void write_stream_csv(const std::filesystem::path& path, const FrameStream& stream) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    write_stream_csv(out, stream);
}

void write_stream_binary(const std::filesystem::path& path, const SystemConfig& cfg, const FrameStream& stream) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::IoError, "cannot write " + path.string());
    }
    write_stream_binary(out, cfg, stream);
}

FrameStream read_stream_binary(const std::filesystem::path& path, const SystemConfig& cfg) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    }
    return read_stream_binary(in, cfg);
}

}  // namespace tdm
