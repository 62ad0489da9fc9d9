#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "canids/error.hpp"

namespace canids {

enum class FrameLabel : uint8_t { Normal, DosAttack, FuzzingAttack };

const char* label_flag(FrameLabel label); // "R", "T-dos", "T-fuzz"

// One CAN 2.0A message. `data` holds `dlc` valid bytes; the rest are zero.
struct CanFrame {
    double timestamp = 0.0; // seconds since capture start
    uint16_t id = 0;        // 11-bit arbitration ID
    uint8_t dlc = 0;        // 0..8
    std::array<uint8_t, 8> data{};
    FrameLabel label = FrameLabel::Normal;

    bool is_attack() const { return label != FrameLabel::Normal; }
};

struct FrameLog {
    std::vector<CanFrame> frames; // non-decreasing timestamps
    std::string source;
};

// CSV columns: timestamp,id,dlc,<dlc data bytes>,flag. The flag column is one
// of R / T-dos / T-fuzz; a plain T is accepted only when `plain_t_hint` names
// the attack it stands for. Logs without a flag column parse as all-Normal
// (unlabeled capture, e.g. for `detect`).
FrameLog parse_log(std::istream& in, std::optional<FrameLabel> plain_t_hint = std::nullopt);

// Inverse of parse_log: %.6f timestamps, 4-digit lowercase hex IDs, 2-digit
// lowercase hex data bytes, Unix newlines.
void write_log(const FrameLog& log, std::ostream& out);

FrameLog load_log_file(const std::string& path, std::optional<FrameLabel> plain_t_hint = std::nullopt);
void save_log_file(const FrameLog& log, const std::string& path);

// Nominal CAN 2.0A frame length in bits: 47 + 8*dlc covers SOF, 11-bit ID,
// RTR, IDE, r0, DLC, data, CRC-15, delimiters, ACK, EOF and 3-bit IFS.
// stuffed=true adds the worst-case stuff-bit count floor((34 + 8*dlc - 1)/4).
int frame_bit_length(int dlc, bool stuffed);

} // namespace canids
