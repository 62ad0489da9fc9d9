#pragma once

#include <cstdint>
#include <vector>

#include "canids/features.hpp"
#include "canids/nn.hpp"
#include "canids/tensor.hpp"

namespace canids {

// Symmetric int8 with power-of-two scale 2^-frac_bits and zero zero-point.
// Values saturate to [-127, 127]; -128 stays unused so negation is closed.
struct QuantParams {
    int frac_bits = 0;
};

struct QuantTensor {
    std::vector<int64_t> shape;
    std::vector<int8_t> v;
    QuantParams params;
};

// Largest f with max_abs <= 127 * 2^-f, capped at 15 (the cap is also the
// degenerate max_abs == 0 answer).
QuantParams choose_scale(double max_abs);

// Round-half-to-even quantization; saturates to +-127.
int8_t quantize_value(double x, int frac_bits);
QuantTensor quantize_tensor(const Tensor& t, QuantParams p);
Tensor dequantize_tensor(const QuantTensor& q);

// Round-half-to-even arithmetic right shift, the requantization primitive.
int64_t shift_round_half_even(int64_t acc, int shift);

// Folds batch-norm scale/shift into the preceding convolutions; infer-mode
// outputs are preserved. Requires populated running statistics.
template <class T>
CnnModelT<T> fold_batchnorm(const CnnModelT<T>& model);

// Max-abs activation statistics at the 7 quantization sites: model input,
// the 5 post-ReLU conv outputs, and the post-ReLU dense1 output.
struct CalibrationProfile {
    double input_max_abs = 0.0;
    std::vector<double> conv_max_abs;
    double dense1_max_abs = 0.0;
};

CalibrationProfile calibrate(const CnnModel& folded, const std::vector<InputTensor>& calib_set);

struct QuantLayerMeta {
    int w_frac = 0;
    int in_frac = 0;
    int out_frac = 0;
    int shift = 0; // in_frac + w_frac - out_frac, always >= 0
};

struct QuantConv {
    int64_t out_ch = 0, in_ch = 0;
    std::vector<int8_t> w;    // (out_ch, in_ch, 3, 3)
    std::vector<int32_t> bias; // at scale 2^-(in_frac + w_frac)
    QuantLayerMeta meta;
};

struct QuantDense {
    int64_t out_dim = 0, in_dim = 0;
    std::vector<int8_t> w; // (out, in)
    std::vector<int32_t> bias;
    QuantLayerMeta meta;
    bool relu = false;
    bool requantize = true; // false: raw int32 accumulator is dequantized
};

// Integer model: conv stages with in-domain ReLU, dense1 with ReLU, and a
// final dense whose accumulator is dequantized to real before the sigmoid.
struct QuantModel {
    ModelConfig config;
    int input_frac = 0;
    std::vector<QuantConv> convs;
    QuantDense dense1;
    QuantDense dense2;
};

// The frozen scale assignment (weight + activation frac bits per layer);
// fine-tuning re-applies the same spec after adjusting weights.
struct QuantSpec {
    int input_frac = 0;
    std::vector<QuantLayerMeta> convs;
    QuantLayerMeta dense1;
    QuantLayerMeta dense2; // out_frac/shift unused (no output requantization)
};

QuantSpec derive_quant_spec(const CnnModel& folded, const CalibrationProfile& profile);
QuantModel apply_quant_spec(const CnnModel& folded, const QuantSpec& spec);
QuantModel quantize_model(const CnnModel& folded, const CalibrationProfile& profile);

// Standalone integer kernels. Input params must match the layer's expected
// input scale.
QuantTensor qconv2d(const QuantTensor& in, const QuantConv& layer);  // (C,H,W)
QuantTensor qdense(const QuantTensor& in, const QuantDense& layer);  // (K)

float qmodel_forward(const QuantModel& qm, const InputTensor& input);
std::vector<float> qmodel_forward_batch(const QuantModel& qm,
                                        const std::vector<LabeledWindow>& windows);

// Fake-quantization of a real tensor at a frozen scale (quantize-dequantize),
// exposed for the straight-through-estimator loop and its tests.
Tensor fake_quant(const Tensor& t, int frac_bits);

struct FineTuneConfig {
    int epochs = 1;
    int batch_size = 64;
    double learning_rate = 1e-4;
    uint64_t seed = 1;
};

struct FineTuneResult {
    CnnModel model; // folded, with tuned weights
    QuantModel qmodel;
};

// Straight-through-estimator fine-tuning at the frozen quantization spec.
// epochs == 0 returns exactly quantize_model(folded, profile).
FineTuneResult fine_tune_quantized(const CnnModel& folded, const CalibrationProfile& profile,
                                   const std::vector<LabeledWindow>& data,
                                   const FineTuneConfig& cfg);

} // namespace canids
