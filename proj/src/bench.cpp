#include "canids/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <omp.h>

#include "canids/canbus.hpp"
#include "canids/error.hpp"

namespace canids {

LatencyStats latency_stats_from_samples(std::vector<double> samples) {
    if (samples.empty()) throw DomainError("latency stats need at least one sample");
    LatencyStats s;
    s.count = static_cast<int64_t>(samples.size());
    double sum = 0;
    for (double x : samples) sum += x;
    s.mean = sum / static_cast<double>(samples.size());
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    s.median = (n % 2 == 1) ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
    const size_t rank = static_cast<size_t>(std::ceil(0.99 * static_cast<double>(n)));
    s.p99 = samples[std::min(n - 1, rank == 0 ? 0 : rank - 1)];
    s.max = samples.back();
    return s;
}

float FloatEngine::score(const InputTensor& input) {
    Tensor batch({1, model_.config.in_channels, model_.config.height, model_.config.width});
    std::copy(input.bits.begin(), input.bits.end(), batch.data());
    return model_infer(model_, batch)[0];
}

float QuantEngine::score(const InputTensor& input) {
    return qmodel_forward(model_, input);
}

LatencyStats measure_latency(InferenceEngine& engine, const std::vector<uint16_t>& ids, int reps,
                             int warmup, ClockFn clock) {
    if (reps < 30) throw DomainError("need at least 30 reps");
    if (warmup < 0 || warmup >= reps) throw DomainError("warmup must be in [0, reps)");
    if (ids.empty()) throw DomainError("need at least one id");

    if (!clock) {
        clock = [] {
            return std::chrono::duration<double>(
                       std::chrono::steady_clock::now().time_since_epoch())
                .count();
        };
    }

    IdWindow window;
    for (int i = 0; i < kWindowSize - 1; ++i) window.push(ids[static_cast<size_t>(i) % ids.size()]);

    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(reps - warmup));
    volatile int attack_count = 0; // keeps the threshold step observable
    for (int k = 0; k < reps; ++k) {
        const uint16_t id = ids[static_cast<size_t>(k) % ids.size()];
        const double t0 = clock();
        window.push(id);
        const InputTensor tensor = window_to_tensor(window);
        const float p = engine.score(tensor);
        if (p >= 0.5f) attack_count = attack_count + 1;
        const double t1 = clock();
        if (k >= warmup) samples.push_back(t1 - t0);
    }
    return latency_stats_from_samples(std::move(samples));
}

double measure_throughput(InferenceEngine& engine, const std::vector<uint16_t>& ids, int reps,
                          int threads) {
    if (reps < 1 || threads < 1) throw DomainError("reps and threads must be positive");
    if (ids.empty()) throw DomainError("need at least one id");
    const auto t0 = std::chrono::steady_clock::now();
    int64_t done = 0;
#pragma omp parallel num_threads(threads) reduction(+ : done)
    {
        IdWindow window;
        const int me = omp_get_thread_num();
        for (int i = 0; i < kWindowSize - 1; ++i)
            window.push(ids[static_cast<size_t>(me + i) % ids.size()]);
        volatile int attacks = 0;
        for (int k = 0; k < reps; ++k) {
            window.push(ids[static_cast<size_t>(me + k) % ids.size()]);
            const float p = engine.score(window_to_tensor(window));
            if (p >= 0.5f) attacks = attacks + 1;
            ++done;
        }
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return static_cast<double>(done) / elapsed;
}

LineRateBudget line_rate_budget(const LatencyStats& latency, double bitrate, int dlc,
                                bool stuffed) {
    if (!(bitrate > 0)) throw DomainError("bitrate must be positive");
    if (!(latency.mean > 0)) throw DomainError("latency mean must be positive");
    LineRateBudget b;
    b.bitrate = bitrate;
    b.dlc = dlc;
    b.stuffed = stuffed;
    b.frame_time = static_cast<double>(frame_bit_length(dlc, stuffed)) / bitrate;
    b.headroom = b.frame_time / latency.mean;
    b.below_line_rate = b.headroom < 1.0;
    return b;
}

} // namespace canids
