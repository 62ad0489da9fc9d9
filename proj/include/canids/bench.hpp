#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "canids/features.hpp"
#include "canids/nn.hpp"
#include "canids/quant.hpp"

namespace canids {

struct LatencyStats {
    int64_t count = 0;
    double mean = 0, median = 0, p99 = 0, max = 0; // seconds
};

// Exact statistics over a sample vector; p99 is nearest-rank.
LatencyStats latency_stats_from_samples(std::vector<double> samples);

// Single-frame scoring interface. Implementations keep all model state so a
// measurement loop constructs nothing per iteration; tests inject counting
// engines through the same interface.
class InferenceEngine {
public:
    virtual ~InferenceEngine() = default;
    virtual float score(const InputTensor& input) = 0;
    virtual const char* kind() const = 0;
};

class FloatEngine : public InferenceEngine {
public:
    explicit FloatEngine(CnnModel model) : model_(std::move(model)) {}
    float score(const InputTensor& input) override;
    const char* kind() const override { return "float"; }

private:
    CnnModel model_;
};

class QuantEngine : public InferenceEngine {
public:
    explicit QuantEngine(QuantModel model) : model_(std::move(model)) {}
    float score(const InputTensor& input) override;
    const char* kind() const override { return "quant"; }

private:
    QuantModel model_;
};

using ClockFn = std::function<double()>; // monotonic seconds

// Times the full per-message path (window push, tensorize, forward,
// threshold) for `reps` invocations, cycling over `ids`; the first `warmup`
// invocations are excluded from the statistics. Runs on the calling thread
// only. Requires reps >= 30 and warmup < reps.
LatencyStats measure_latency(InferenceEngine& engine, const std::vector<uint16_t>& ids, int reps,
                             int warmup, ClockFn clock = {});

// Optional multi-reader throughput: `threads` concurrent streams over private
// windows against the shared engine. Frames per second, aggregate.
double measure_throughput(InferenceEngine& engine, const std::vector<uint16_t>& ids, int reps,
                          int threads);

struct LineRateBudget {
    double bitrate = 0;    // bits/s
    int dlc = 8;
    bool stuffed = false;
    double frame_time = 0; // seconds per frame on the wire
    double headroom = 0;   // frame_time / mean latency
    bool below_line_rate = false;
};

LineRateBudget line_rate_budget(const LatencyStats& latency, double bitrate, int dlc,
                                bool stuffed);

} // namespace canids
