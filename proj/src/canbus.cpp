#include "canids/canbus.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace canids {

const char* label_flag(FrameLabel label) {
    switch (label) {
    case FrameLabel::Normal: return "R";
    case FrameLabel::DosAttack: return "T-dos";
    case FrameLabel::FuzzingAttack: return "T-fuzz";
    }
    return "R";
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

bool parse_hex_byte_like(const std::string& s, unsigned long& out, int max_digits) {
    if (s.empty() || s.size() > static_cast<size_t>(max_digits)) return false;
    unsigned long v = 0;
    for (char c : s) {
        int d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else return false;
        v = v * 16 + static_cast<unsigned long>(d);
    }
    out = v;
    return true;
}

bool parse_decimal(const std::string& s, double& out) {
    if (s.empty()) return false;
    size_t pos = 0;
    try {
        out = std::stod(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

} // namespace

FrameLog parse_log(std::istream& in, std::optional<FrameLabel> plain_t_hint) {
    FrameLog log;
    std::string line;
    long lineno = 0;
    double prev_ts = -1.0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;

        auto f = split_fields(line);
        if (f.size() < 3) throw ParseError(lineno, "expected at least timestamp,id,dlc");

        CanFrame frame;
        double ts;
        if (!parse_decimal(f[0], ts) || ts < 0.0)
            throw ParseError(lineno, "bad timestamp '" + f[0] + "'");
        frame.timestamp = ts;

        unsigned long id;
        if (!parse_hex_byte_like(f[1], id, 4)) throw ParseError(lineno, "non-hex ID '" + f[1] + "'");
        if (id >= 2048) throw ParseError(lineno, "ID 0x" + f[1] + " exceeds 11 bits");
        frame.id = static_cast<uint16_t>(id);

        if (f[2].size() != 1 || f[2][0] < '0' || f[2][0] > '8')
            throw ParseError(lineno, "bad DLC '" + f[2] + "'");
        frame.dlc = static_cast<uint8_t>(f[2][0] - '0');

        // dlc data columns plus an optional flag column
        size_t ncols = f.size();
        size_t expect_min = 3 + frame.dlc;
        if (ncols != expect_min && ncols != expect_min + 1)
            throw ParseError(lineno, "expected " + std::to_string(expect_min) + " or " +
                                         std::to_string(expect_min + 1) + " columns, got " +
                                         std::to_string(ncols));
        for (int i = 0; i < frame.dlc; ++i) {
            unsigned long b;
            if (!parse_hex_byte_like(f[3 + static_cast<size_t>(i)], b, 2))
                throw ParseError(lineno, "bad data byte '" + f[3 + static_cast<size_t>(i)] + "'");
            frame.data[static_cast<size_t>(i)] = static_cast<uint8_t>(b);
        }

        if (ncols == expect_min + 1) {
            const std::string& flag = f.back();
            if (flag == "R") frame.label = FrameLabel::Normal;
            else if (flag == "T-dos") frame.label = FrameLabel::DosAttack;
            else if (flag == "T-fuzz") frame.label = FrameLabel::FuzzingAttack;
            else if (flag == "T") {
                if (!plain_t_hint)
                    throw ParseError(lineno, "plain 'T' flag needs an attack-kind hint");
                frame.label = *plain_t_hint;
            } else {
                throw ParseError(lineno, "unknown flag '" + flag + "'");
            }
        }

        if (frame.timestamp < prev_ts)
            throw ValidationError("line " + std::to_string(lineno) +
                                  ": timestamp out of order (" + f[0] + ")");
        prev_ts = frame.timestamp;
        log.frames.push_back(frame);
    }
    return log;
}

void write_log(const FrameLog& log, std::ostream& out) {
    char buf[64];
    for (const CanFrame& fr : log.frames) {
        std::snprintf(buf, sizeof(buf), "%.6f,%04x,%u", fr.timestamp, fr.id, fr.dlc);
        out << buf;
        for (int i = 0; i < fr.dlc; ++i) {
            std::snprintf(buf, sizeof(buf), ",%02x", fr.data[static_cast<size_t>(i)]);
            out << buf;
        }
        out << ',' << label_flag(fr.label) << '\n';
    }
    if (!out) throw IoError("log write failed");
}

FrameLog load_log_file(const std::string& path, std::optional<FrameLabel> plain_t_hint) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open log file: " + path);
    FrameLog log = parse_log(in, plain_t_hint);
    log.source = path;
    return log;
}

void save_log_file(const FrameLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    write_log(log, out);
    out.close();
    if (!out) throw IoError("log write failed: " + path);
}

int frame_bit_length(int dlc, bool stuffed) {
    if (dlc < 0 || dlc > 8) throw DomainError("dlc out of range: " + std::to_string(dlc));
    int bits = 47 + 8 * dlc;
    if (stuffed) bits += (34 + 8 * dlc - 1) / 4;
    return bits;
}

} // namespace canids
