#pragma once

#include <cstdint>
#include <vector>

#include "canids/nn.hpp"
#include "canids/tensor.hpp"

// Naive single-threaded reference kernels. Tests check the OpenMP kernels and
// the integer engine against these, and the kernel benchmark compares their
// throughput. Deliberately written as plain nested loops with no shared code
// paths into kernels.hpp.
namespace canids::ref {

// Zero-padded same 3x3 convolution, stride 1, single sample (C,H,W).
template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const ConvLayerT<T>& layer);

template <class T>
std::vector<T> dense_forward(const std::vector<T>& in, const DenseLayerT<T>& layer);

// Integer convolution: int8 in/weights, int32 accumulation, int32 bias added
// per output channel. No requantization; raw accumulators out.
std::vector<int32_t> qconv2d_acc(const std::vector<int8_t>& in, int64_t c, int64_t h, int64_t w,
                                 const std::vector<int8_t>& weights, int64_t out_ch,
                                 const std::vector<int32_t>& bias);

std::vector<int32_t> qdense_acc(const std::vector<int8_t>& in, const std::vector<int8_t>& weights,
                                int64_t out_dim, const std::vector<int32_t>& bias);

} // namespace canids::ref
