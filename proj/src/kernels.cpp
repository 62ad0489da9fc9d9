#include "canids/kernels.hpp"

#include <cstring>

namespace canids::kernels {

namespace {
// Below this many independent rows the OpenMP fork overhead dominates;
// batch-1 latency paths stay on the calling thread.
constexpr int64_t kParallelRows = 64;
} // namespace

template <class T>
void im2col3x3(const TensorT<T>& in, TensorT<T>& col) {
    const int64_t n = in.shape[0], c = in.shape[1], h = in.shape[2], w = in.shape[3];
    const int64_t rows = n * h * w, cols = c * 9;
    if (col.shape.size() != 2 || col.shape[0] != rows || col.shape[1] != cols)
        col = TensorT<T>({rows, cols});

    const int64_t hw = h * w;
#pragma omp parallel for if (rows >= kParallelRows) schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t x = r % w;
        const int64_t y = (r / w) % h;
        const int64_t s = r / hw;
        const T* src = in.data() + s * c * hw;
        T* dst = col.data() + r * cols;
        for (int64_t i = 0; i < c; ++i) {
            for (int dy = 0; dy < 3; ++dy) {
                const int64_t iy = y + dy - 1;
                for (int dx = 0; dx < 3; ++dx) {
                    const int64_t ix = x + dx - 1;
                    *dst++ = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? src[i * hw + iy * w + ix]
                                                                      : T(0);
                }
            }
        }
    }
}

template <class T>
void col2im3x3(const TensorT<T>& col, TensorT<T>& din) {
    const int64_t n = din.shape[0], c = din.shape[1], h = din.shape[2], w = din.shape[3];
    const int64_t cols = c * 9;
    const int64_t hw = h * w;
    std::memset(din.data(), 0, sizeof(T) * static_cast<size_t>(din.size()));
    // Samples scatter into disjoint slices; each slice is filled serially.
#pragma omp parallel for if (n > 1) schedule(static)
    for (int64_t s = 0; s < n; ++s) {
        T* dst = din.data() + s * c * hw;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const T* src = col.data() + ((s * h + y) * w + x) * cols;
                for (int64_t i = 0; i < c; ++i) {
                    for (int dy = 0; dy < 3; ++dy) {
                        const int64_t iy = y + dy - 1;
                        for (int dx = 0; dx < 3; ++dx) {
                            const int64_t ix = x + dx - 1;
                            if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                dst[i * hw + iy * w + ix] += src[i * 9 + dy * 3 + dx];
                        }
                    }
                }
            }
        }
    }
}

namespace {

// out(r,o) = bias(o) + sum_k col(r,k) * w(o,k); plain dots over contiguous
// rows, vectorized by the compiler.
template <class T>
void gemm_rows(const T* col, int64_t rows, int64_t k, const T* w, const T* bias, int64_t o_dim,
               T* out) {
#pragma omp parallel for if (rows >= kParallelRows) schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = col + r * k;
        T* y = out + r * o_dim;
        int64_t o = 0;
        for (; o + 4 <= o_dim; o += 4) {
            const T* w0 = w + (o + 0) * k;
            const T* w1 = w + (o + 1) * k;
            const T* w2 = w + (o + 2) * k;
            const T* w3 = w + (o + 3) * k;
            T a0 = T(0), a1 = T(0), a2 = T(0), a3 = T(0);
#pragma omp simd reduction(+ : a0, a1, a2, a3)
            for (int64_t j = 0; j < k; ++j) {
                const T xv = x[j];
                a0 += w0[j] * xv;
                a1 += w1[j] * xv;
                a2 += w2[j] * xv;
                a3 += w3[j] * xv;
            }
            y[o + 0] = a0 + bias[o + 0];
            y[o + 1] = a1 + bias[o + 1];
            y[o + 2] = a2 + bias[o + 2];
            y[o + 3] = a3 + bias[o + 3];
        }
        for (; o < o_dim; ++o) {
            const T* wr = w + o * k;
            T acc = T(0);
#pragma omp simd reduction(+ : acc)
            for (int64_t j = 0; j < k; ++j) acc += wr[j] * x[j];
            y[o] = acc + bias[o];
        }
    }
}

} // namespace

template <class T>
void conv2d_batch_forward(const TensorT<T>& in, const ConvLayerT<T>& layer, TensorT<T>& out,
                          TensorT<T>& col) {
    if (in.shape.size() != 4) throw ShapeError("conv input must be (N,C,H,W)");
    if (in.shape[1] != layer.in_ch()) throw ShapeError("conv input channel mismatch");
    const int64_t n = in.shape[0], h = in.shape[2], w = in.shape[3];
    const int64_t o_dim = layer.out_ch();
    im2col3x3(in, col);
    const int64_t rows = n * h * w;
    TensorT<T> tmp({rows, o_dim});
    gemm_rows(col.data(), rows, col.shape[1], layer.w.data(), layer.b.data(), o_dim, tmp.data());
    // (N*H*W, O) -> (N,O,H,W)
    if (out.shape.size() != 4 || out.shape[0] != n || out.shape[1] != o_dim ||
        out.shape[2] != h || out.shape[3] != w)
        out = TensorT<T>({n, o_dim, h, w});
    const int64_t hw = h * w;
#pragma omp parallel for if (rows >= kParallelRows) schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t s = r / hw, p = r % hw;
        const T* src = tmp.data() + r * o_dim;
        T* dst = out.data() + s * o_dim * hw + p;
        for (int64_t o = 0; o < o_dim; ++o) dst[o * hw] = src[o];
    }
}

template <class T>
void conv2d_batch_backward(const TensorT<T>& col, const TensorT<T>& dout,
                           const ConvLayerT<T>& layer, TensorT<T>* din, TensorT<T>& dw,
                           TensorT<T>& db, bool want_din) {
    const int64_t n = dout.shape[0], o_dim = dout.shape[1], h = dout.shape[2], w = dout.shape[3];
    const int64_t rows = n * h * w, k = col.shape[1];
    const int64_t hw = h * w;

    // dout as (rows, O)
    TensorT<T> g({rows, o_dim});
#pragma omp parallel for if (rows >= kParallelRows) schedule(static)
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t s = r / hw, p = r % hw;
        const T* src = dout.data() + s * o_dim * hw + p;
        T* dst = g.data() + r * o_dim;
        for (int64_t o = 0; o < o_dim; ++o) dst[o] = src[o * hw];
    }

    dw = TensorT<T>(layer.w.shape);
    db = TensorT<T>(layer.b.shape);
    // Each thread owns one output channel; accumulation over rows is serial.
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < o_dim; ++o) {
        T* dwo = dw.data() + o * k;
        T acc_b = T(0);
        for (int64_t r = 0; r < rows; ++r) {
            const T gv = g[r * o_dim + o];
            acc_b += gv;
            const T* x = col.data() + r * k;
            for (int64_t j = 0; j < k; ++j) dwo[j] += gv * x[j];
        }
        db[o] = acc_b;
    }

    if (want_din && din != nullptr) {
        TensorT<T> dcol({rows, k});
#pragma omp parallel for if (rows >= kParallelRows) schedule(static)
        for (int64_t r = 0; r < rows; ++r) {
            T* dst = dcol.data() + r * k;
            const T* gr = g.data() + r * o_dim;
            for (int64_t j = 0; j < k; ++j) dst[j] = T(0);
            for (int64_t o = 0; o < o_dim; ++o) {
                const T gv = gr[o];
                const T* wr = layer.w.data() + o * k;
                for (int64_t j = 0; j < k; ++j) dst[j] += gv * wr[j];
            }
        }
        col2im3x3(dcol, *din);
    }
}

template <class T>
void dense_batch_forward(const TensorT<T>& in, const DenseLayerT<T>& layer, TensorT<T>& out) {
    if (in.shape.size() != 2 || in.shape[1] != layer.in_dim())
        throw ShapeError("dense input shape mismatch");
    const int64_t n = in.shape[0], o_dim = layer.out_dim();
    if (out.shape.size() != 2 || out.shape[0] != n || out.shape[1] != o_dim)
        out = TensorT<T>({n, o_dim});
    gemm_rows(in.data(), n, in.shape[1], layer.w.data(), layer.b.data(), o_dim, out.data());
}

template <class T>
void dense_batch_backward(const TensorT<T>& in, const TensorT<T>& dout,
                          const DenseLayerT<T>& layer, TensorT<T>* din, TensorT<T>& dw,
                          TensorT<T>& db, bool want_din) {
    const int64_t n = in.shape[0], k = in.shape[1], o_dim = layer.out_dim();
    dw = TensorT<T>(layer.w.shape);
    db = TensorT<T>(layer.b.shape);
#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < o_dim; ++o) {
        T* dwo = dw.data() + o * k;
        T acc_b = T(0);
        for (int64_t r = 0; r < n; ++r) {
            const T gv = dout[r * o_dim + o];
            acc_b += gv;
            const T* x = in.data() + r * k;
            for (int64_t j = 0; j < k; ++j) dwo[j] += gv * x[j];
        }
        db[o] = acc_b;
    }
    if (want_din && din != nullptr) {
        if (din->shape.size() != 2 || din->shape[0] != n || din->shape[1] != k)
            *din = TensorT<T>({n, k});
#pragma omp parallel for if (n >= kParallelRows) schedule(static)
        for (int64_t r = 0; r < n; ++r) {
            T* dst = din->data() + r * k;
            const T* gr = dout.data() + r * o_dim;
            for (int64_t j = 0; j < k; ++j) dst[j] = T(0);
            for (int64_t o = 0; o < o_dim; ++o) {
                const T gv = gr[o];
                const T* wr = layer.w.data() + o * k;
                for (int64_t j = 0; j < k; ++j) dst[j] += gv * wr[j];
            }
        }
    }
}

#define CANIDS_INSTANTIATE_KERNELS(T)                                                             \
    template void im2col3x3<T>(const TensorT<T>&, TensorT<T>&);                                   \
    template void col2im3x3<T>(const TensorT<T>&, TensorT<T>&);                                   \
    template void conv2d_batch_forward<T>(const TensorT<T>&, const ConvLayerT<T>&, TensorT<T>&,   \
                                          TensorT<T>&);                                           \
    template void conv2d_batch_backward<T>(const TensorT<T>&, const TensorT<T>&,                  \
                                           const ConvLayerT<T>&, TensorT<T>*, TensorT<T>&,        \
                                           TensorT<T>&, bool);                                    \
    template void dense_batch_forward<T>(const TensorT<T>&, const DenseLayerT<T>&, TensorT<T>&);  \
    template void dense_batch_backward<T>(const TensorT<T>&, const TensorT<T>&,                   \
                                          const DenseLayerT<T>&, TensorT<T>*, TensorT<T>&,        \
                                          TensorT<T>&, bool);

CANIDS_INSTANTIATE_KERNELS(float)
CANIDS_INSTANTIATE_KERNELS(double)

} // namespace canids::kernels
