#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include "canids/trafgen.hpp"

using namespace canids;

namespace {

BenignProfile small_profile() {
    BenignProfile p;
    p.duration = 1.0;
    p.seed = 7;
    p.ecus.push_back({0x100, 0.01, 0.0, PayloadMode::Counter});
    p.ecus.push_back({0x2a0, 0.025, 0.2, PayloadMode::Random});
    return p;
}

std::string log_bytes(const FrameLog& log) {
    std::ostringstream out;
    write_log(log, out);
    return out.str();
}

bool sorted_by_time(const FrameLog& log) {
    for (size_t i = 1; i < log.frames.size(); ++i)
        if (log.frames[i].timestamp < log.frames[i - 1].timestamp) return false;
    return true;
}

std::multiset<std::string> normal_rows(const FrameLog& log) {
    std::multiset<std::string> rows;
    for (const CanFrame& fr : log.frames) {
        if (fr.label != FrameLabel::Normal) continue;
        FrameLog one;
        one.frames.push_back(fr);
        rows.insert(log_bytes(one));
    }
    return rows;
}

} // namespace

TEST_SUITE("trafgen") {

TEST_CASE("jitter-free ecu is exactly periodic") {
    BenignProfile p;
    p.duration = 0.05;
    p.seed = 1;
    p.ecus.push_back({0x123, 0.01, 0.0, PayloadMode::Constant});
    FrameLog log = gen_benign(p);
    REQUIRE(log.frames.size() == 5);
    for (size_t k = 0; k < 5; ++k) {
        CHECK(log.frames[k].timestamp ==
              doctest::Approx(0.01 * static_cast<double>(k)).epsilon(1e-12));
        CHECK(log.frames[k].id == 0x123);
        CHECK(log.frames[k].label == FrameLabel::Normal);
    }
}

TEST_CASE("merged multi-ecu log is sorted with the right per-id counts") {
    FrameLog log = gen_benign(small_profile());
    CHECK(sorted_by_time(log));
    std::map<uint16_t, int> counts;
    for (const CanFrame& fr : log.frames) counts[fr.id]++;
    CHECK(counts[0x100] == 100); // ceil(1.0 / 0.01)
    CHECK(counts[0x2a0] == 40);  // ceil(1.0 / 0.025)
}

TEST_CASE("same profile and seed give byte-identical logs") {
    CHECK(log_bytes(gen_benign(small_profile())) == log_bytes(gen_benign(small_profile())));
}

TEST_CASE("profile validation") {
    BenignProfile p;
    p.duration = 1.0;
    CHECK_THROWS_AS(gen_benign(p), DomainError); // no ecus
    p = small_profile();
    p.ecus.push_back({0x100, 0.01, 0.0, PayloadMode::Constant}); // duplicate id
    CHECK_THROWS_AS(gen_benign(p), DomainError);
    p = small_profile();
    p.ecus[0].jitter_fraction = 0.5;
    CHECK_THROWS_AS(gen_benign(p), DomainError);
}

TEST_CASE("dos injection with no windows is the identity") {
    FrameLog log = gen_benign(small_profile());
    DosParams params;
    params.interval = 0.0005;
    CHECK(log_bytes(inject_dos(log, params)) == log_bytes(log));
}

TEST_CASE("dos injection count and labels") {
    FrameLog log = gen_benign(small_profile());
    DosParams params;
    params.flood_id = 0;
    params.interval = 0.0005;
    params.burst_windows = {{0.0, 1.0}};
    FrameLog out = inject_dos(log, params);
    int64_t injected = 0;
    for (const CanFrame& fr : out.frames) {
        if (fr.label != FrameLabel::DosAttack) continue;
        ++injected;
        CHECK(fr.id == 0);
        CHECK(fr.dlc == 8);
        for (uint8_t b : fr.data) CHECK(b == 0);
    }
    CHECK(injected == 2000); // floor(1.0 / 0.0005)
    CHECK(out.frames.size() == log.frames.size() + 2000);
    CHECK(sorted_by_time(out));
    CHECK(normal_rows(out) == normal_rows(log)); // non-destructive insertion
}

TEST_CASE("dos flood id must win arbitration") {
    FrameLog log = gen_benign(small_profile()); // benign ids 0x100, 0x2a0
    DosParams params;
    params.flood_id = 0x100;
    params.interval = 0.001;
    params.burst_windows = {{0.0, 0.5}};
    CHECK_THROWS_AS(inject_dos(log, params), DomainError);
    params.flood_id = 0x0ff;
    CHECK_NOTHROW(inject_dos(log, params));
}

TEST_CASE("fuzz injection with no windows is the identity") {
    FrameLog log = gen_benign(small_profile());
    FuzzParams params;
    params.interval_min = params.interval_max = 0.001;
    CHECK(log_bytes(inject_fuzzing(log, params)) == log_bytes(log));
}

TEST_CASE("degenerate-uniform fuzz gap gives an exact count") {
    FrameLog log = gen_benign(small_profile());
    FuzzParams params;
    params.interval_min = params.interval_max = 0.001;
    params.burst_windows = {{0.0, 0.999}};
    params.seed = 3;
    FrameLog out = inject_fuzzing(log, params);
    int64_t injected = 0;
    for (const CanFrame& fr : out.frames)
        if (fr.label == FrameLabel::FuzzingAttack) ++injected;
    CHECK(injected == 999);
    CHECK(out.frames.size() == log.frames.size() + 999);
    CHECK(sorted_by_time(out));
    CHECK(log_bytes(inject_fuzzing(log, params)) == log_bytes(out)); // determinism
}

TEST_CASE("fuzz windows must stay inside the log") {
    FrameLog log = gen_benign(small_profile()); // last frame ~0.99
    FuzzParams params;
    params.interval_min = params.interval_max = 0.001;
    params.burst_windows = {{0.5, 2.0}};
    CHECK_THROWS_AS(inject_fuzzing(log, params), DomainError);
    params.interval_min = 0.0;
    params.burst_windows = {{0.0, 0.5}};
    CHECK_THROWS_AS(inject_fuzzing(log, params), DomainError);
}

TEST_CASE("fuzz ids cover nearly the whole 11-bit space") {
    BenignProfile p;
    p.duration = 130.0;
    p.seed = 11;
    p.ecus.push_back({0x700, 0.05, 0.0, PayloadMode::Constant});
    FrameLog log = gen_benign(p);
    FuzzParams params;
    params.interval_min = 0.001;
    params.interval_max = 0.0014;
    params.burst_windows = {{0.0, 125.0}};
    params.seed = 5;
    FrameLog out = inject_fuzzing(log, params);

    std::set<uint16_t> seen;
    int64_t injected = 0;
    std::vector<int64_t> histogram(2048, 0);
    for (const CanFrame& fr : out.frames) {
        if (fr.label != FrameLabel::FuzzingAttack) continue;
        ++injected;
        seen.insert(fr.id);
        histogram[fr.id]++;
    }
    CHECK(injected > 90000);
    CHECK(static_cast<double>(seen.size()) >= 0.95 * 2048);

    // chi-square against uniform; df=2047 so ~2047 +- a few sigma at this scale
    const double expected = static_cast<double>(injected) / 2048.0;
    double chi2 = 0.0;
    for (int64_t c : histogram) {
        const double d = static_cast<double>(c) - expected;
        chi2 += d * d / expected;
    }
    CHECK(chi2 > 1700.0);
    CHECK(chi2 < 2400.0);
}

} // TEST_SUITE
