#pragma once

#include "canids/nn.hpp"
#include "canids/tensor.hpp"

// OpenMP-parallel batched kernels behind the model ops. Every output element
// is produced by exactly one thread with a fixed serial accumulation order,
// so results are bit-identical to a single-threaded run at any thread count.
// The matching naive serial implementations live in ref_kernels.hpp.
namespace canids::kernels {

// in (N,C,H,W) -> col (N*H*W, C*9); k = c*9 + dy*3 + dx, zero padding.
template <class T>
void im2col3x3(const TensorT<T>& in, TensorT<T>& col);

// Scatter-add inverse of im2col3x3; din must be preshaped (N,C,H,W).
template <class T>
void col2im3x3(const TensorT<T>& col, TensorT<T>& din);

// out (N,O,H,W); col is scratch, reused between calls when preallocated.
template <class T>
void conv2d_batch_forward(const TensorT<T>& in, const ConvLayerT<T>& layer, TensorT<T>& out,
                          TensorT<T>& col);

// Gradients from the cached col matrix. din may be skipped for the first
// layer (want_din = false).
template <class T>
void conv2d_batch_backward(const TensorT<T>& col, const TensorT<T>& dout,
                           const ConvLayerT<T>& layer, TensorT<T>* din, TensorT<T>& dw,
                           TensorT<T>& db, bool want_din);

// in (N,K) x w (O,K) -> out (N,O)
template <class T>
void dense_batch_forward(const TensorT<T>& in, const DenseLayerT<T>& layer, TensorT<T>& out);

template <class T>
void dense_batch_backward(const TensorT<T>& in, const TensorT<T>& dout,
                          const DenseLayerT<T>& layer, TensorT<T>* din, TensorT<T>& dw,
                          TensorT<T>& db, bool want_din);

} // namespace canids::kernels
