#pragma once

#include <cstdint>
#include <vector>

#include "ps/autodiff.hpp"

namespace ps::ag {

/// 2-D cross-correlation. x: [Cin,H,W], w: [Cout,Cin,k,k] (k odd), b: [Cout].
/// Output [Cout,H',W'] with H' = (H + 2*pad - k)/stride + 1.
template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b,
                  int stride, int pad);

/// Transposed convolution fixed to exact x2 upsampling: w: [Cin,Cout,4,4],
/// stride 2, pad 1. Output [Cout,2H,2W].
template <typename T>
NodePtr<T> deconv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b);

template <typename T>
NodePtr<T> leaky_relu(const NodePtr<T>& x, T slope);

/// Elementwise maximum across the set; ties route the gradient to the
/// lowest list index. Output is order invariant.
template <typename T>
NodePtr<T> max_over_set(const std::vector<NodePtr<T>>& xs);

/// Per-pixel 3-vector scaled by 1/sqrt(|v|^2 + eps). x: [3,H,W].
template <typename T>
NodePtr<T> l2_normalize_channels(const NodePtr<T>& x, T eps);

/// Stack along the channel dimension; spatial dims must agree.
template <typename T>
NodePtr<T> concat_channels(const std::vector<NodePtr<T>>& xs);

/// Channels [c0, c1) of a [C,H,W] tensor.
template <typename T>
NodePtr<T> slice_channels(const NodePtr<T>& x, int c0, int c1);

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b);

/// Mean over masked pixels of (1 - pred . gt). pred: [3,H,W] node,
/// gt: [3,H,W], mask: H*W bytes (0 = excluded). Scalar output.
template <typename T>
NodePtr<T> cosine_loss(const NodePtr<T>& pred, const Tensor<T>& gt,
                       const std::vector<std::uint8_t>& mask);

/// sum(x * weights); scalar probe used by gradient checks.
template <typename T>
NodePtr<T> weighted_sum(const NodePtr<T>& x, const Tensor<T>& weights);

#define PS_DECLARE_OPS(T)                                                                     \
    extern template NodePtr<T> conv2d<T>(const NodePtr<T>&, const NodePtr<T>&,               \
                                         const NodePtr<T>&, int, int);                        \
    extern template NodePtr<T> deconv2d<T>(const NodePtr<T>&, const NodePtr<T>&,             \
                                           const NodePtr<T>&);                               \
    extern template NodePtr<T> leaky_relu<T>(const NodePtr<T>&, T);                          \
    extern template NodePtr<T> max_over_set<T>(const std::vector<NodePtr<T>>&);              \
    extern template NodePtr<T> l2_normalize_channels<T>(const NodePtr<T>&, T);               \
    extern template NodePtr<T> concat_channels<T>(const std::vector<NodePtr<T>>&);           \
    extern template NodePtr<T> slice_channels<T>(const NodePtr<T>&, int, int);               \
    extern template NodePtr<T> add<T>(const NodePtr<T>&, const NodePtr<T>&);                 \
    extern template NodePtr<T> cosine_loss<T>(const NodePtr<T>&, const Tensor<T>&,           \
                                              const std::vector<std::uint8_t>&);             \
    extern template NodePtr<T> weighted_sum<T>(const NodePtr<T>&, const Tensor<T>&);

PS_DECLARE_OPS(float)
PS_DECLARE_OPS(double)
#undef PS_DECLARE_OPS

}  // namespace ps::ag
