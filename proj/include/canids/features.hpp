#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "canids/canbus.hpp"

namespace canids {

inline constexpr int kWindowSize = 4;
inline constexpr int kIdBits = 11;
inline constexpr int kTensorChannels = 2;
inline constexpr int kTensorHeight = 2;
inline constexpr int kTensorWidth = kIdBits;
inline constexpr int kTensorElems = kTensorChannels * kTensorHeight * kTensorWidth; // 44

// MSB-first fixed-width binary expansion of an 11-bit id.
std::array<uint8_t, kIdBits> id_to_bits(uint16_t id);

// Ring buffer of the 4 most recent CAN ids, oldest to newest.
class IdWindow {
public:
    void push(uint16_t id);
    bool full() const { return count_ >= kWindowSize; }
    // i = 0 is the oldest of the four.
    uint16_t at(int i) const;
    void reset() { count_ = 0; head_ = 0; }

private:
    std::array<uint16_t, kWindowSize> ids_{};
    int head_ = 0; // next write slot
    int count_ = 0;
};

// The {2,2,11} network input, (channel, height, bit) row-major. Bit row
// 2c + h holds id_to_bits of window entry 2c + h, so flattening in (c,h,k)
// order reproduces the {4,11} id stack.
struct InputTensor {
    std::array<float, kTensorElems> bits{};

    float at(int c, int h, int k) const {
        return bits[static_cast<size_t>((c * kTensorHeight + h) * kTensorWidth + k)];
    }
};

struct LabeledWindow {
    InputTensor tensor;
    int label = 0; // 1 = attack
    double newest_timestamp = 0.0;
};

// Requires a full window; throws DomainError during warmup.
InputTensor window_to_tensor(const IdWindow& w);

// Stride-1 sliding windows, one per frame from the 4th onward. A window is
// labeled 1 iff its newest frame is an attack frame.
std::vector<LabeledWindow> stream_windows(const FrameLog& log);

// Debug dump: 44 bits plus the label per row.
void dump_windows_csv(const std::vector<LabeledWindow>& windows, std::ostream& out);

} // namespace canids

#include "canids/tensor.hpp"

namespace canids {

// Packs windows[order[begin..begin+count)] into an (N,2,2,11) batch tensor.
Tensor windows_to_batch(const std::vector<LabeledWindow>& ws, const std::vector<int64_t>& order,
                        size_t begin, size_t count);
std::vector<int> windows_to_labels(const std::vector<LabeledWindow>& ws,
                                   const std::vector<int64_t>& order, size_t begin, size_t count);

} // namespace canids
