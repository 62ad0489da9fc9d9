#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace canids {

// splitmix64, used to derive independent sub-stream seeds from one master seed.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seedable generator with hand-specified value mappings so that streams are
// bit-identical on every platform. The engine is std::mt19937_64 (its output
// sequence is pinned by the standard); none of the std::*_distribution
// adaptors are used because their mappings are implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [a, b).
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Uniform in [-1, 1).
    double uniform_pm1() { return 2.0 * uniform01() - 1.0; }

    // Uniform integer in [0, n). Plain modulo mapping; the bias is < 2^-53 for
    // every n used in this codebase and the mapping is platform-independent.
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    uint8_t byte() { return static_cast<uint8_t>(next_u64() & 0xff); }

    // Fisher-Yates.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

} // namespace canids
