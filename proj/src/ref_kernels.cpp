#include "canids/ref_kernels.hpp"

namespace canids::ref {

template <class T>
TensorT<T> conv2d_forward(const TensorT<T>& in, const ConvLayerT<T>& layer) {
    if (in.shape.size() != 3) throw ShapeError("ref conv input must be (C,H,W)");
    if (in.shape[0] != layer.in_ch()) throw ShapeError("ref conv channel mismatch");
    const int64_t c = in.shape[0], h = in.shape[1], w = in.shape[2];
    const int64_t o_dim = layer.out_ch();
    TensorT<T> out({o_dim, h, w});
    for (int64_t o = 0; o < o_dim; ++o)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                T acc = layer.b[o];
                for (int64_t i = 0; i < c; ++i)
                    for (int64_t dy = 0; dy < 3; ++dy)
                        for (int64_t dx = 0; dx < 3; ++dx) {
                            const int64_t iy = y + dy - 1, ix = x + dx - 1;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += in.at(i, iy, ix) * layer.w.at(o, i, dy, dx);
                        }
                out.at(o, y, x) = acc;
            }
    return out;
}

template <class T>
std::vector<T> dense_forward(const std::vector<T>& in, const DenseLayerT<T>& layer) {
    if (static_cast<int64_t>(in.size()) != layer.in_dim())
        throw ShapeError("ref dense input size mismatch");
    const int64_t o_dim = layer.out_dim(), k = layer.in_dim();
    std::vector<T> out(static_cast<size_t>(o_dim));
    for (int64_t o = 0; o < o_dim; ++o) {
        T acc = layer.b[o];
        for (int64_t j = 0; j < k; ++j) acc += layer.w[o * k + j] * in[static_cast<size_t>(j)];
        out[static_cast<size_t>(o)] = acc;
    }
    return out;
}

std::vector<int32_t> qconv2d_acc(const std::vector<int8_t>& in, int64_t c, int64_t h, int64_t w,
                                 const std::vector<int8_t>& weights, int64_t out_ch,
                                 const std::vector<int32_t>& bias) {
    std::vector<int32_t> out(static_cast<size_t>(out_ch * h * w));
    for (int64_t o = 0; o < out_ch; ++o)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                int32_t acc = bias[static_cast<size_t>(o)];
                for (int64_t i = 0; i < c; ++i)
                    for (int64_t dy = 0; dy < 3; ++dy)
                        for (int64_t dx = 0; dx < 3; ++dx) {
                            const int64_t iy = y + dy - 1, ix = x + dx - 1;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            const int32_t xv = in[static_cast<size_t>((i * h + iy) * w + ix)];
                            const int32_t wv =
                                weights[static_cast<size_t>(((o * c + i) * 3 + dy) * 3 + dx)];
                            acc += xv * wv;
                        }
                out[static_cast<size_t>((o * h + y) * w + x)] = acc;
            }
    return out;
}

std::vector<int32_t> qdense_acc(const std::vector<int8_t>& in, const std::vector<int8_t>& weights,
                                int64_t out_dim, const std::vector<int32_t>& bias) {
    const int64_t k = static_cast<int64_t>(in.size());
    std::vector<int32_t> out(static_cast<size_t>(out_dim));
    for (int64_t o = 0; o < out_dim; ++o) {
        int32_t acc = bias[static_cast<size_t>(o)];
        for (int64_t j = 0; j < k; ++j) {
            acc += static_cast<int32_t>(in[static_cast<size_t>(j)]) *
                   static_cast<int32_t>(weights[static_cast<size_t>(o * k + j)]);
        }
        out[static_cast<size_t>(o)] = acc;
    }
    return out;
}

template TensorT<float> conv2d_forward<float>(const TensorT<float>&, const ConvLayerT<float>&);
template TensorT<double> conv2d_forward<double>(const TensorT<double>&, const ConvLayerT<double>&);
template std::vector<float> dense_forward<float>(const std::vector<float>&,
                                                 const DenseLayerT<float>&);
template std::vector<double> dense_forward<double>(const std::vector<double>&,
                                                   const DenseLayerT<double>&);

} // namespace canids::ref
