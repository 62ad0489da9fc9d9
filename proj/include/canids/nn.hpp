#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "canids/rng.hpp"
#include "canids/tensor.hpp"

namespace canids {

enum class Mode { Train, Infer };

template <class T>
struct ConvLayerT {
    TensorT<T> w; // (out_ch, in_ch, 3, 3)
    TensorT<T> b; // (out_ch)
    int64_t out_ch() const { return w.shape[0]; }
    int64_t in_ch() const { return w.shape[1]; }
};

template <class T>
struct BatchNormT {
    TensorT<T> gamma, beta;              // trainable, per channel
    TensorT<T> running_mean, running_var; // inference statistics
    T epsilon{};
    T momentum{}; // running = momentum*running + (1-momentum)*batch
};

template <class T>
struct DenseLayerT {
    TensorT<T> w; // (out, in)
    TensorT<T> b; // (out)
    int64_t out_dim() const { return w.shape[0]; }
    int64_t in_dim() const { return w.shape[1]; }
};

// Architecture knobs. Defaults give the deployed detector: 5 conv blocks of
// 40/80/120/160/200 3x3 filters over a (2,2,11) input, dense 32 -> dense 1.
struct ModelConfig {
    int in_channels = 2;
    int height = 2;
    int width = 11;
    std::vector<int> conv_channels{40, 80, 120, 160, 200};
    int dense_units = 32;
    double dropout_rate = 0.25;
    double bn_epsilon = 1e-3;
    double bn_momentum = 0.99;

    int64_t flatten_size() const {
        return static_cast<int64_t>(conv_channels.back()) * height * width;
    }
};

template <class T>
struct ConvBlockT {
    ConvLayerT<T> conv;
    BatchNormT<T> bn;
};

// Block order per conv stage: conv -> batch norm -> ReLU -> dropout.
// After folding, the batch-norm stage is skipped (bn_folded == true).
template <class T>
struct CnnModelT {
    ModelConfig config;
    std::vector<ConvBlockT<T>> blocks;
    DenseLayerT<T> dense1; // + ReLU
    DenseLayerT<T> dense2; // + sigmoid
    bool bn_folded = false;

    int64_t trainable_parameter_count() const;
};

using CnnModel = CnnModelT<float>;

// Glorot-uniform init, deterministic under seed.
template <class T>
CnnModelT<T> make_model(const ModelConfig& config, uint64_t seed);

// Fixed traversal order of the trainable parameter tensors (conv w/b, bn
// gamma/beta unless folded, dense w/b). Gradients and Adam state align with
// this order.
template <class T>
std::vector<TensorT<T>*> trainable_params(CnnModelT<T>& m);
template <class T>
std::vector<const TensorT<T>*> trainable_params(const CnnModelT<T>& m);

// ---- layer ops ----

// Zero-padded same convolution, stride 1, single sample (C,H,W).
template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const ConvLayerT<T>& layer);

// Batched (N,C,H,W). Train mode normalizes by batch statistics and updates
// the running stats; infer mode uses the stored running stats.
template <class T>
TensorT<T> batchnorm_forward(const TensorT<T>& input, BatchNormT<T>& layer, Mode mode);

// Inverted dropout; returns (output, mask) where mask holds 0 or 1/(1-rate).
template <class T>
std::pair<TensorT<T>, TensorT<T>> dropout_forward(const TensorT<T>& input, double rate, Mode mode,
                                                  Rng* rng);

template <class T>
std::vector<T> dense_forward(const std::vector<T>& input, const DenseLayerT<T>& layer);

template <class T>
T relu(T x) {
    return x > T(0) ? x : T(0);
}

// Branch form: never overflows for finite input.
template <class T>
T sigmoid(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    T e = std::exp(x);
    return e / (T(1) + e);
}

template <class T>
struct BceResult {
    double loss = 0.0;
    std::vector<T> dloss_dp; // d(mean loss)/dp_i at the clamped probabilities
};

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
template <class T>
BceResult<T> bce_loss(const std::vector<T>& p, const std::vector<int>& labels);

// ---- full model ----

template <class T>
struct ForwardCacheT {
    bool valid = false;
    Mode mode = Mode::Infer;
    TensorT<T> input; // (N,C,H,W)
    struct Block {
        TensorT<T> col;      // im2col of the block input
        TensorT<T> xhat;     // train-mode normalized pre-scale activations
        std::vector<T> inv_std; // train-mode per-channel 1/sqrt(var+eps)
        TensorT<T> relu_out;
        TensorT<T> drop_mask;
        TensorT<T> out; // block output = input of the next stage
    };
    std::vector<Block> blocks;
    TensorT<T> flat;       // (N, flatten)
    TensorT<T> dense1_col; // alias of flat (kept for symmetry of backward)
    TensorT<T> dense1_out; // post-ReLU (N, units)
    std::vector<T> logits;
    std::vector<T> probs;
};

// Returns per-sample attack probabilities. Train mode updates BN running
// stats and requires an rng when dropout_rate > 0; pass `cache` to retain
// the state model_backward needs.
template <class T>
std::vector<T> model_forward(CnnModelT<T>& m, const TensorT<T>& batch, Mode mode,
                             ForwardCacheT<T>* cache = nullptr, Rng* dropout_rng = nullptr);

// Infer-mode forward; never mutates the model.
template <class T>
std::vector<T> model_infer(const CnnModelT<T>& m, const TensorT<T>& batch);

template <class T>
struct GradientsT {
    struct Block {
        TensorT<T> dw, db, dgamma, dbeta;
    };
    std::vector<Block> blocks;
    TensorT<T> d1w, d1b, d2w, d2b;
};

// Reverse-mode gradients of the mean BCE loss for every trainable parameter.
// Requires a cache retained by a train-mode forward pass.
template <class T>
GradientsT<T> model_backward(const CnnModelT<T>& m, const ForwardCacheT<T>& cache,
                             const std::vector<int>& labels);

template <class T>
std::vector<const TensorT<T>*> gradient_list(const GradientsT<T>& g, const CnnModelT<T>& m);

template <class T>
struct AdamStateT {
    std::vector<std::vector<T>> m, v; // aligned with trainable_params order
    int64_t step = 0;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
};

template <class T>
AdamStateT<T> adam_init(const CnnModelT<T>& model);

// Standard bias-corrected Adam. Throws TrainingError on non-finite gradients.
template <class T>
void adam_step(CnnModelT<T>& model, const GradientsT<T>& grads, AdamStateT<T>& state, double lr);

using ForwardCache = ForwardCacheT<float>;
using Gradients = GradientsT<float>;
using AdamState = AdamStateT<float>;

} // namespace canids
