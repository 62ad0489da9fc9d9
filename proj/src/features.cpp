#include "canids/features.hpp"

#include <algorithm>
#include <ostream>

#include "canids/error.hpp"

namespace canids {

std::array<uint8_t, kIdBits> id_to_bits(uint16_t id) {
    if (id >= 2048) throw DomainError("id exceeds 11 bits: " + std::to_string(id));
    std::array<uint8_t, kIdBits> bits;
    for (int k = 0; k < kIdBits; ++k)
        bits[static_cast<size_t>(k)] = static_cast<uint8_t>((id >> (kIdBits - 1 - k)) & 1);
    return bits;
}

void IdWindow::push(uint16_t id) {
    if (id >= 2048) throw DomainError("id exceeds 11 bits: " + std::to_string(id));
    ids_[static_cast<size_t>(head_)] = id;
    head_ = (head_ + 1) % kWindowSize;
    if (count_ < kWindowSize) ++count_;
}

uint16_t IdWindow::at(int i) const {
    if (i < 0 || i >= count_) throw DomainError("window index out of range");
    int idx = (head_ - count_ + i + 2 * kWindowSize) % kWindowSize;
    return ids_[static_cast<size_t>(idx)];
}

InputTensor window_to_tensor(const IdWindow& w) {
    if (!w.full()) throw DomainError("window not yet full (warmup)");
    InputTensor t;
    for (int row = 0; row < kWindowSize; ++row) {
        auto bits = id_to_bits(w.at(row));
        for (int k = 0; k < kIdBits; ++k)
            t.bits[static_cast<size_t>(row * kIdBits + k)] = static_cast<float>(bits[static_cast<size_t>(k)]);
    }
    return t;
}

std::vector<LabeledWindow> stream_windows(const FrameLog& log) {
    std::vector<LabeledWindow> out;
    if (log.frames.size() < static_cast<size_t>(kWindowSize)) return out;
    out.reserve(log.frames.size() - kWindowSize + 1);
    IdWindow w;
    for (const CanFrame& fr : log.frames) {
        w.push(fr.id);
        if (!w.full()) continue;
        LabeledWindow lw;
        lw.tensor = window_to_tensor(w);
        lw.label = fr.is_attack() ? 1 : 0;
        lw.newest_timestamp = fr.timestamp;
        out.push_back(lw);
    }
    return out;
}

void dump_windows_csv(const std::vector<LabeledWindow>& windows, std::ostream& out) {
    for (const LabeledWindow& lw : windows) {
        for (float b : lw.tensor.bits) out << (b != 0.0f ? '1' : '0') << ',';
        out << lw.label << '\n';
    }
}

Tensor windows_to_batch(const std::vector<LabeledWindow>& ws, const std::vector<int64_t>& order,
                        size_t begin, size_t count) {
    Tensor batch({static_cast<int64_t>(count), kTensorChannels, kTensorHeight, kTensorWidth});
    for (size_t i = 0; i < count; ++i) {
        const auto& t = ws[static_cast<size_t>(order[begin + i])].tensor;
        std::copy(t.bits.begin(), t.bits.end(), batch.data() + static_cast<int64_t>(i) * kTensorElems);
    }
    return batch;
}

std::vector<int> windows_to_labels(const std::vector<LabeledWindow>& ws,
                                   const std::vector<int64_t>& order, size_t begin, size_t count) {
    std::vector<int> labels(count);
    for (size_t i = 0; i < count; ++i)
        labels[i] = ws[static_cast<size_t>(order[begin + i])].label;
    return labels;
}

} // namespace canids
