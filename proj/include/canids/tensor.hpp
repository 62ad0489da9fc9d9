#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "canids/error.hpp"

namespace canids {

// Dense row-major tensor. Float for training/inference, double for the
// gradient-check harness.
template <class T>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<T> v;

    TensorT() = default;
    explicit TensorT(std::vector<int64_t> s, T fill = T{}) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(count(shape)), fill);
    }

    static int64_t count(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d <= 0) throw ShapeError("tensor dimensions must be positive");
            n *= d;
        }
        return n;
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

    T& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * shape[1] + j)]; }
    const T& at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * shape[1] + j)]; }

    T& at(int64_t i, int64_t j, int64_t k) {
        return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        return v[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        return v[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        return v[static_cast<size_t>(((i * shape[1] + j) * shape[2] + k) * shape[3] + l)];
    }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;

} // namespace canids
