#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "canids/canbus.hpp"

#include <nlohmann/json_fwd.hpp>

namespace canids {

enum class PayloadMode : uint8_t { Constant, Counter, Random };

struct EcuSpec {
    uint16_t id = 0;
    double period = 0.0;          // seconds, > 0
    double jitter_fraction = 0.0; // [0, 0.5)
    PayloadMode payload_mode = PayloadMode::Constant;
};

struct BenignProfile {
    std::vector<EcuSpec> ecus; // distinct ids
    double duration = 0.0;     // seconds, > 0
    uint64_t seed = 0;
};

struct DosParams {
    uint16_t flood_id = 0; // must beat every benign id in arbitration
    double interval = 0.0; // seconds between flood frames, > 0
    std::vector<std::pair<double, double>> burst_windows;
    uint64_t seed = 0;
};

struct FuzzParams {
    double interval_min = 0.0; // 0 < min <= max
    double interval_max = 0.0;
    std::vector<std::pair<double, double>> burst_windows; // within log duration
    uint64_t seed = 0;
};

// Frame k of an ECU sits at k*period*(1 + u_k*jitter_fraction), u_k uniform in
// [-1,1); streams are merged and sorted. Identical (profile, seed) gives an
// identical log.
FrameLog gen_benign(const BenignProfile& profile);

// Inserts id=flood_id, dlc=8, zero-payload frames every `interval` seconds
// inside each burst window. Existing frames are untouched.
FrameLog inject_dos(const FrameLog& log, const DosParams& params);

// Inserts frames with uniform-random 11-bit ids and 8 random payload bytes at
// gaps drawn uniformly from [interval_min, interval_max].
FrameLog inject_fuzzing(const FrameLog& log, const FuzzParams& params);

BenignProfile benign_profile_from_json(const nlohmann::json& j);
DosParams dos_params_from_json(const nlohmann::json& j);
FuzzParams fuzz_params_from_json(const nlohmann::json& j);

} // namespace canids
