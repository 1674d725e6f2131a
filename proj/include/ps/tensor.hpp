#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ps/errors.hpp"

namespace ps {

/// Dense row-major n-dimensional array. float carries training data,
/// double is used wherever tolerances matter (priors, gradient checks).
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(count(shape)), fill);
    }

    static Tensor from(std::vector<int> s, std::vector<T> values) {
        Tensor t;
        t.shape = std::move(s);
        if (count(t.shape) != static_cast<std::int64_t>(values.size()))
            throw DimensionError("tensor data length does not match shape");
        t.data = std::move(values);
        return t;
    }

    static std::int64_t count(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw DimensionError("tensor extents must be positive");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }

    // (c, y, x) accessor for [C,H,W] tensors.
    T& at3(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    const T& at3(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    // (o, c, y, x) accessor for [O,C,K,K] tensors.
    T& at4(int o, int c, int y, int x) {
        return data[((static_cast<std::size_t>(o) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    const T& at4(int o, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(o) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const;

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.resize(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

std::string shape_str(const std::vector<int>& shape);

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

extern template struct Tensor<float>;
extern template struct Tensor<double>;

}  // namespace ps
