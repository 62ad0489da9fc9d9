#include <doctest.h>

#include "canids/features.hpp"
#include "canids/rng.hpp"

using namespace canids;

namespace {

FrameLog log_with_ids(const std::vector<uint16_t>& ids,
                      const std::vector<FrameLabel>& labels = {}) {
    FrameLog log;
    for (size_t i = 0; i < ids.size(); ++i) {
        CanFrame fr;
        fr.timestamp = static_cast<double>(i) * 0.001;
        fr.id = ids[i];
        fr.dlc = 0;
        fr.label = labels.empty() ? FrameLabel::Normal : labels[i];
        log.frames.push_back(fr);
    }
    return log;
}

} // namespace

TEST_SUITE("features") {

TEST_CASE("id_to_bits is the MSB-first 11-bit expansion") {
    auto zero = id_to_bits(0);
    for (uint8_t b : zero) CHECK(b == 0);
    auto ones = id_to_bits(0x7ff);
    for (uint8_t b : ones) CHECK(b == 1);
    const uint8_t expect[11] = {0, 1, 1, 0, 0, 0, 1, 0, 1, 1, 0}; // 0x316 = 790
    auto extract = id_to_bits(0x316);
    for (int k = 0; k < 11; ++k) CHECK(extract[static_cast<size_t>(k)] == expect[k]);
    CHECK_THROWS_AS(id_to_bits(2048), DomainError);
}

TEST_CASE("window_to_tensor stacks rows into channel pairs") {
    IdWindow w;
    w.push(0x7ff);
    w.push(0);
    CHECK_THROWS_AS(window_to_tensor(w), DomainError); // warmup
    w.push(0x7ff);
    w.push(0);
    REQUIRE(w.full());
    InputTensor t = window_to_tensor(w);
    for (int k = 0; k < kIdBits; ++k) {
        CHECK(t.at(0, 0, k) == 1.0f); // oldest: 0x7ff
        CHECK(t.at(0, 1, k) == 0.0f);
        CHECK(t.at(1, 0, k) == 1.0f);
        CHECK(t.at(1, 1, k) == 0.0f); // newest: 0
    }
}

TEST_CASE("all-zero window gives the all-zero tensor") {
    IdWindow w;
    for (int i = 0; i < 4; ++i) w.push(0);
    for (float b : window_to_tensor(w).bits) CHECK(b == 0.0f);
}

TEST_CASE("flattening in (c,h,k) order reproduces the 4x11 row stack") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        uint16_t ids[4];
        IdWindow w;
        for (auto& id : ids) {
            id = static_cast<uint16_t>(rng.below(2048));
            w.push(id);
        }
        InputTensor t = window_to_tensor(w);
        for (int row = 0; row < 4; ++row) {
            auto bits = id_to_bits(ids[row]);
            for (int k = 0; k < kIdBits; ++k) {
                CHECK(t.bits[static_cast<size_t>(row * kIdBits + k)] ==
                      static_cast<float>(bits[static_cast<size_t>(k)]));
                CHECK(t.at(row / 2, row % 2, k) ==
                      static_cast<float>(bits[static_cast<size_t>(k)]));
            }
        }
        for (float b : t.bits) CHECK((b == 0.0f || b == 1.0f));
    }
}

TEST_CASE("window ring keeps the 4 most recent ids oldest-first") {
    IdWindow w;
    for (uint16_t id = 1; id <= 6; ++id) w.push(id);
    CHECK(w.at(0) == 3);
    CHECK(w.at(1) == 4);
    CHECK(w.at(2) == 5);
    CHECK(w.at(3) == 6);
}

TEST_CASE("stream_windows emits one window per frame from the 4th") {
    CHECK(stream_windows(log_with_ids({1, 2, 3})).empty());

    auto ws = stream_windows(log_with_ids(std::vector<uint16_t>(10, 0x42)));
    CHECK(ws.size() == 7);
    for (const auto& lw : ws) CHECK(lw.label == 0);

    FrameLog log = log_with_ids({0x100, 0x101, 0x102, 0x103, 0x000},
                                {FrameLabel::Normal, FrameLabel::Normal, FrameLabel::Normal,
                                 FrameLabel::Normal, FrameLabel::DosAttack});
    auto ws2 = stream_windows(log);
    REQUIRE(ws2.size() == 2);
    CHECK(ws2[0].label == 0);
    CHECK(ws2[1].label == 1);
    CHECK(ws2[0].newest_timestamp == doctest::Approx(0.003));
    CHECK(ws2[1].newest_timestamp == doctest::Approx(0.004));
}

TEST_CASE("window count and timestamp ordering properties") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const size_t n = rng.below(40);
        std::vector<uint16_t> ids(n);
        for (auto& id : ids) id = static_cast<uint16_t>(rng.below(2048));
        auto ws = stream_windows(log_with_ids(ids));
        CHECK(ws.size() == (n < 4 ? 0 : n - 3));
        for (size_t i = 1; i < ws.size(); ++i)
            CHECK(ws[i].newest_timestamp >= ws[i - 1].newest_timestamp);
    }
}

} // TEST_SUITE
