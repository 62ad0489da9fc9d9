#include "canids/trafgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "canids/rng.hpp"

namespace canids {

namespace {

// Guards window/duration boundaries against accumulated rounding: a frame at
// nominally t == end must not slip inside the half-open interval.
constexpr double kTimeEps = 1e-9;

void validate_profile(const BenignProfile& p) {
    if (p.ecus.empty()) throw DomainError("benign profile needs at least one ecu");
    if (!(p.duration > 0.0)) throw DomainError("duration must be positive");
    std::set<uint16_t> ids;
    for (const EcuSpec& e : p.ecus) {
        if (e.id >= 2048) throw DomainError("ecu id exceeds 11 bits");
        if (!(e.period > 0.0)) throw DomainError("ecu period must be positive");
        if (e.jitter_fraction < 0.0 || e.jitter_fraction >= 0.5)
            throw DomainError("jitter_fraction must be in [0, 0.5)");
        if (!ids.insert(e.id).second)
            throw DomainError("duplicate ecu id " + std::to_string(e.id));
    }
}

void fill_payload(CanFrame& fr, PayloadMode mode, const std::array<uint8_t, 8>& base,
                  uint64_t counter, Rng& rng) {
    switch (mode) {
    case PayloadMode::Constant:
        fr.data = base;
        break;
    case PayloadMode::Counter:
        fr.data = base;
        fr.data[0] = static_cast<uint8_t>(counter & 0xff);
        break;
    case PayloadMode::Random:
        for (auto& b : fr.data) b = rng.byte();
        break;
    }
}

void merge_injected(std::vector<CanFrame>& out, const FrameLog& log,
                    std::vector<CanFrame>&& injected) {
    // Stable merge, original frames first on timestamp ties.
    out.reserve(log.frames.size() + injected.size());
    size_t a = 0, b = 0;
    while (a < log.frames.size() && b < injected.size()) {
        if (injected[b].timestamp < log.frames[a].timestamp) out.push_back(injected[b++]);
        else out.push_back(log.frames[a++]);
    }
    while (a < log.frames.size()) out.push_back(log.frames[a++]);
    while (b < injected.size()) out.push_back(injected[b++]);
}

void validate_windows(const std::vector<std::pair<double, double>>& windows) {
    for (const auto& [s, e] : windows) {
        if (s < 0.0 || !(s < e)) throw DomainError("bad burst window");
    }
}

} // namespace

FrameLog gen_benign(const BenignProfile& profile) {
    validate_profile(profile);
    std::vector<CanFrame> frames;
    for (size_t i = 0; i < profile.ecus.size(); ++i) {
        const EcuSpec& ecu = profile.ecus[i];
        Rng rng(splitmix64(profile.seed ^ (0x1000 + i)));
        std::array<uint8_t, 8> base{};
        for (auto& b : base) b = rng.byte();

        uint64_t k = 0;
        for (;; ++k) {
            double t_base = static_cast<double>(k) * ecu.period;
            if (!(t_base < profile.duration - kTimeEps)) break;
            double t = t_base;
            if (ecu.jitter_fraction > 0.0)
                t = t_base * (1.0 + rng.uniform_pm1() * ecu.jitter_fraction);
            CanFrame fr;
            fr.timestamp = t;
            fr.id = ecu.id;
            fr.dlc = 8;
            fr.label = FrameLabel::Normal;
            fill_payload(fr, ecu.payload_mode, base, k, rng);
            frames.push_back(fr);
        }
    }
    std::stable_sort(frames.begin(), frames.end(),
                     [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });
    FrameLog log;
    log.frames = std::move(frames);
    log.source = "trafgen";
    return log;
}

FrameLog inject_dos(const FrameLog& log, const DosParams& params) {
    if (!(params.interval > 0.0)) throw DomainError("dos interval must be positive");
    validate_windows(params.burst_windows);
    for (const CanFrame& fr : log.frames) {
        if (fr.label == FrameLabel::Normal && fr.id <= params.flood_id)
            throw DomainError("flood id " + std::to_string(params.flood_id) +
                              " does not win arbitration against benign id " +
                              std::to_string(fr.id));
    }

    std::vector<CanFrame> injected;
    for (const auto& [start, end] : params.burst_windows) {
        for (uint64_t k = 0;; ++k) {
            double t = start + static_cast<double>(k) * params.interval;
            if (!(t < end - kTimeEps)) break;
            CanFrame fr;
            fr.timestamp = t;
            fr.id = params.flood_id;
            fr.dlc = 8;
            fr.data.fill(0);
            fr.label = FrameLabel::DosAttack;
            injected.push_back(fr);
        }
    }
    std::stable_sort(injected.begin(), injected.end(),
                     [](const CanFrame& a, const CanFrame& b) { return a.timestamp < b.timestamp; });

    FrameLog out;
    out.source = log.source;
    merge_injected(out.frames, log, std::move(injected));
    return out;
}

FrameLog inject_fuzzing(const FrameLog& log, const FuzzParams& params) {
    if (!(params.interval_min > 0.0)) throw DomainError("interval_min must be positive");
    if (params.interval_max < params.interval_min)
        throw DomainError("interval_max must be >= interval_min");
    validate_windows(params.burst_windows);
    double last_ts = log.frames.empty() ? 0.0 : log.frames.back().timestamp;
    for (const auto& [s, e] : params.burst_windows) {
        (void)s;
        if (e > last_ts + kTimeEps)
            throw DomainError("fuzz window extends past the log (end " + std::to_string(e) + ")");
    }

    Rng rng(splitmix64(params.seed ^ 0xf022));
    std::vector<CanFrame> injected;
    for (const auto& [start, end] : params.burst_windows) {
        double t = start;
        while (t < end - kTimeEps) {
            CanFrame fr;
            fr.timestamp = t;
            fr.id = static_cast<uint16_t>(rng.below(2048));
            fr.dlc = 8;
            for (auto& b : fr.data) b = rng.byte();
            fr.label = FrameLabel::FuzzingAttack;
            injected.push_back(fr);
            t += rng.uniform(params.interval_min, params.interval_max);
        }
    }

    FrameLog out;
    out.source = log.source;
    merge_injected(out.frames, log, std::move(injected));
    return out;
}

namespace {

PayloadMode payload_mode_from_string(const std::string& s) {
    if (s == "constant") return PayloadMode::Constant;
    if (s == "counter") return PayloadMode::Counter;
    if (s == "random") return PayloadMode::Random;
    throw ValidationError("unknown payload mode '" + s + "'");
}

std::vector<std::pair<double, double>> windows_from_json(const nlohmann::json& j) {
    std::vector<std::pair<double, double>> w;
    for (const auto& e : j) {
        if (!e.is_array() || e.size() != 2)
            throw ValidationError("burst window must be a [start, end] pair");
        w.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return w;
}

} // namespace

BenignProfile benign_profile_from_json(const nlohmann::json& j) {
    try {
        BenignProfile p;
        p.duration = j.at("duration").get<double>();
        p.seed = j.at("seed").get<uint64_t>();
        for (const auto& e : j.at("ecus")) {
            EcuSpec ecu;
            ecu.id = e.at("id").get<uint16_t>();
            ecu.period = e.at("period").get<double>();
            ecu.jitter_fraction = e.value("jitter", 0.0);
            ecu.payload_mode = payload_mode_from_string(e.value("payload", "constant"));
            p.ecus.push_back(ecu);
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("benign profile: ") + e.what());
    }
}

DosParams dos_params_from_json(const nlohmann::json& j) {
    try {
        DosParams p;
        p.flood_id = j.value("flood_id", 0);
        p.interval = j.at("interval").get<double>();
        p.burst_windows = windows_from_json(j.at("windows"));
        p.seed = j.value("seed", 0);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("dos params: ") + e.what());
    }
}

FuzzParams fuzz_params_from_json(const nlohmann::json& j) {
    try {
        FuzzParams p;
        p.interval_min = j.at("interval_min").get<double>();
        p.interval_max = j.at("interval_max").get<double>();
        p.burst_windows = windows_from_json(j.at("windows"));
        p.seed = j.value("seed", 0);
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("fuzz params: ") + e.what());
    }
}

} // namespace canids
