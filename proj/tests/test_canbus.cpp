#include <doctest.h>

#include <sstream>

#include "canids/canbus.hpp"
#include "canids/rng.hpp"

using namespace canids;

namespace {

FrameLog random_log(uint64_t seed, size_t n) {
    Rng rng(seed);
    FrameLog log;
    double t = 0.0;
    for (size_t i = 0; i < n; ++i) {
        CanFrame fr;
        // keep timestamps on the 1e-6 grid the CSV format carries
        t += static_cast<double>(rng.below(5000) + 1) * 1e-6;
        fr.timestamp = t;
        fr.id = static_cast<uint16_t>(rng.below(2048));
        fr.dlc = static_cast<uint8_t>(rng.below(9));
        for (int b = 0; b < fr.dlc; ++b) fr.data[static_cast<size_t>(b)] = rng.byte();
        const uint64_t kind = rng.below(3);
        fr.label = kind == 0 ? FrameLabel::Normal
                             : (kind == 1 ? FrameLabel::DosAttack : FrameLabel::FuzzingAttack);
        log.frames.push_back(fr);
    }
    return log;
}

bool frames_equal(const CanFrame& a, const CanFrame& b) {
    if (a.timestamp != b.timestamp || a.id != b.id || a.dlc != b.dlc || a.label != b.label)
        return false;
    for (int i = 0; i < a.dlc; ++i)
        if (a.data[static_cast<size_t>(i)] != b.data[static_cast<size_t>(i)]) return false;
    return true;
}

} // namespace

TEST_SUITE("canbus") {

TEST_CASE("parses the dataset-extract row") {
    std::istringstream in("1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R\n");
    FrameLog log = parse_log(in);
    REQUIRE(log.frames.size() == 1);
    const CanFrame& fr = log.frames[0];
    CHECK(fr.id == 0x316);
    CHECK(fr.id == 790);
    CHECK(fr.dlc == 8);
    const uint8_t expect[8] = {0x05, 0x21, 0x68, 0x09, 0x21, 0x21, 0x00, 0x6f};
    for (int i = 0; i < 8; ++i) CHECK(fr.data[static_cast<size_t>(i)] == expect[i]);
    CHECK(fr.label == FrameLabel::Normal);
    CHECK(fr.timestamp == doctest::Approx(1478198376.389427).epsilon(1e-12));
}

TEST_CASE("empty stream gives an empty log") {
    std::istringstream in("");
    CHECK(parse_log(in).frames.empty());
}

TEST_CASE("write emits the exact row format") {
    FrameLog log;
    CanFrame fr;
    log.frames.push_back(fr); // t=0, id=0, dlc=0, Normal
    std::ostringstream out;
    write_log(log, out);
    CHECK(out.str() == "0.000000,0000,0,R\n");
}

TEST_CASE("dataset-extract row roundtrips byte-identically") {
    const std::string row = "1478198376.389427,0316,8,05,21,68,09,21,21,00,6f,R\n";
    std::istringstream in(row);
    FrameLog log = parse_log(in);
    std::ostringstream out;
    write_log(log, out);
    CHECK(out.str() == row);
}

TEST_CASE("parse/write roundtrip is the identity on random valid logs") {
    for (uint64_t seed = 0; seed < 30; ++seed) {
        FrameLog log = random_log(seed, 40);
        std::ostringstream first;
        write_log(log, first);
        std::istringstream in(first.str());
        FrameLog parsed = parse_log(in);
        REQUIRE(parsed.frames.size() == log.frames.size());
        std::ostringstream second;
        write_log(parsed, second);
        CHECK(first.str() == second.str());
        std::istringstream in2(second.str());
        FrameLog reparsed = parse_log(in2);
        for (size_t i = 0; i < parsed.frames.size(); ++i)
            CHECK(frames_equal(parsed.frames[i], reparsed.frames[i]));
    }
}

TEST_CASE("flag vocabulary and the plain-T hint") {
    std::istringstream in("0.000000,0001,0,T-dos\n0.000001,0002,0,T-fuzz\n");
    FrameLog log = parse_log(in);
    CHECK(log.frames[0].label == FrameLabel::DosAttack);
    CHECK(log.frames[1].label == FrameLabel::FuzzingAttack);

    std::istringstream plain("0.000000,0001,0,T\n");
    CHECK_THROWS_AS(parse_log(plain), ParseError);
    std::istringstream plain2("0.000000,0001,0,T\n");
    FrameLog hinted = parse_log(plain2, FrameLabel::FuzzingAttack);
    CHECK(hinted.frames[0].label == FrameLabel::FuzzingAttack);
}

TEST_CASE("unlabeled rows parse as Normal") {
    std::istringstream in("0.500000,0123,2,aa,bb\n");
    FrameLog log = parse_log(in);
    CHECK(log.frames[0].label == FrameLabel::Normal);
    CHECK(log.frames[0].data[1] == 0xbb);
}

TEST_CASE("malformed rows carry the line number") {
    auto expect_parse_error = [](const std::string& text, long line) {
        std::istringstream in(text);
        try {
            parse_log(in);
            FAIL_CHECK("expected ParseError for: " << text);
        } catch (const ParseError& e) {
            CHECK(e.line() == line);
        }
    };
    expect_parse_error("0.1,zz,0,R\n", 1);                        // non-hex id
    expect_parse_error("0.1,0800,0,R\n", 1);                      // id >= 2048
    expect_parse_error("0.1,0001,2,aa,R\n", 1);                   // dlc/data mismatch
    expect_parse_error("0.1,0001,9,00,00,00,00,00,00,00,00,00,R\n", 1); // dlc out of range
    expect_parse_error("0.1,0001,0,R\n0.2,0001,0,X\n", 2);        // unknown flag
    expect_parse_error("-1.0,0001,0,R\n", 1);                     // negative timestamp
}

TEST_CASE("out-of-order timestamps name the offending line") {
    std::istringstream in("1.000000,0001,0,R\n0.500000,0002,0,R\n");
    try {
        parse_log(in);
        FAIL_CHECK("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("frame_bit_length matches CAN 2.0A field arithmetic") {
    CHECK(frame_bit_length(0, false) == 47);
    CHECK(frame_bit_length(8, false) == 111);
    CHECK(frame_bit_length(8, true) == 135); // 111 + floor(97/4)
    CHECK_THROWS_AS(frame_bit_length(9, false), DomainError);
    CHECK_THROWS_AS(frame_bit_length(-1, true), DomainError);

    // 64 worst-case frames at 1 Mbps bracket the 8.3 ms block-accumulation figure
    CHECK(64.0 * frame_bit_length(8, true) / 1e6 == doctest::Approx(8.64e-3));
    CHECK(64.0 * frame_bit_length(8, false) / 1e6 == doctest::Approx(7.104e-3));
}

TEST_CASE("frame_bit_length is strictly increasing in dlc") {
    for (const bool stuffed : {false, true})
        for (int dlc = 1; dlc <= 8; ++dlc)
            CHECK(frame_bit_length(dlc, stuffed) > frame_bit_length(dlc - 1, stuffed));
}

TEST_CASE("parsed frames always satisfy the frame invariants") {
    for (uint64_t seed = 100; seed < 120; ++seed) {
        FrameLog log = random_log(seed, 60);
        std::ostringstream out;
        write_log(log, out);
        std::istringstream in(out.str());
        FrameLog parsed = parse_log(in);
        double prev = -1.0;
        for (const CanFrame& fr : parsed.frames) {
            CHECK(fr.id < 2048);
            CHECK(fr.dlc <= 8);
            CHECK(fr.timestamp >= prev);
            prev = fr.timestamp;
        }
    }
}

} // TEST_SUITE
