#include "ps/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "ps/errors.hpp"

extern "C" void openblas_set_num_threads(int);

namespace ps::ag {

namespace {

// Batch-level code owns all threading; BLAS stays single threaded so that
// results do not depend on the machine's core count.
struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit g_blas_init;

template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a, int lda, const T* b,
          int ldb, T* c, int ldc, T beta);

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, const float* a, int lda, const float* b,
                 int ldb, float* c, int ldc, float beta) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, 1.0f, a, lda, b, ldb, beta, c, ldc);
}

// The bundled OpenBLAS (0.3.20, Cooperlake kernels) returns wrong results
// for row-major dgemm NoTrans x Trans once the output is wider than ~128
// columns. The double path only serves gradient checks and other
// tolerance-critical small problems, so a plain loop stands in for it.
template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, const double* a, int lda, const double* b,
                  int ldb, double* c, int ldc, double beta) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const double av = ta ? a[static_cast<std::size_t>(p) * lda + i]
                                     : a[static_cast<std::size_t>(i) * lda + p];
                const double bv = tb ? b[static_cast<std::size_t>(j) * ldb + p]
                                     : b[static_cast<std::size_t>(p) * ldb + j];
                acc += av * bv;
            }
            double* out = c + static_cast<std::size_t>(i) * ldc + j;
            *out = beta == 0.0 ? acc : beta * *out + acc;
        }
    }
}

// Unfold [C,H,W] into [C*k*k, OH*OW] for cross-correlation with the given
// stride/pad; out-of-bounds taps read as zero.
template <typename T>
void im2col(const T* im, int C, int H, int W, int k, int stride, int pad, int OH, int OW, T* col) {
    for (int c = 0; c < C; ++c) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                T* row = col + ((static_cast<std::size_t>(c) * k + kh) * k + kw) *
                                   (static_cast<std::size_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + kh;
                    T* dst = row + static_cast<std::size_t>(oh) * OW;
                    if (ih < 0 || ih >= H) {
                        std::fill(dst, dst + OW, T(0));
                        continue;
                    }
                    const T* src = im + (static_cast<std::size_t>(c) * H + ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kw;
                        dst[ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col; accumulates into `im`.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int k, int stride, int pad, int OH, int OW,
                T* im) {
    for (int c = 0; c < C; ++c) {
        for (int kh = 0; kh < k; ++kh) {
            for (int kw = 0; kw < k; ++kw) {
                const T* row = col + ((static_cast<std::size_t>(c) * k + kh) * k + kw) *
                                         (static_cast<std::size_t>(OH) * OW);
                for (int oh = 0; oh < OH; ++oh) {
                    const int ih = oh * stride - pad + kh;
                    if (ih < 0 || ih >= H) continue;
                    const T* src = row + static_cast<std::size_t>(oh) * OW;
                    T* dst = im + (static_cast<std::size_t>(c) * H + ih) * W;
                    for (int ow = 0; ow < OW; ++ow) {
                        const int iw = ow * stride - pad + kw;
                        if (iw >= 0 && iw < W) dst[iw] += src[ow];
                    }
                }
            }
        }
    }
}

template <typename T>
NodePtr<T> finish(Tensor<T> value, std::vector<NodePtr<T>> parents,
                  std::function<void(Node<T>&)> fn) {
    auto out = std::make_shared<Node<T>>();
    out->value = std::move(value);
    if (GradMode::enabled()) {
        bool need = false;
        for (const auto& p : parents) need = need || p->requires_grad;
        if (need) {
            out->requires_grad = true;
            out->parents = std::move(parents);
            out->backward_fn = std::move(fn);
        }
    }
    return out;
}

}  // namespace

template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b, int stride,
                  int pad) {
    if (x->value.rank() != 3 || w->value.rank() != 4 || b->value.rank() != 1)
        throw DimensionError("conv2d: expected x[C,H,W], w[O,C,k,k], b[O]");
    const int Cin = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Cout = w->value.dim(0), k = w->value.dim(2);
    if (w->value.dim(1) != Cin)
        throw DimensionError("conv2d: kernel input channels " + std::to_string(w->value.dim(1)) +
                             " vs tensor channels " + std::to_string(Cin));
    if (w->value.dim(3) != k) throw DimensionError("conv2d: kernel must be square");
    if (k % 2 == 0) throw ConfigError("conv2d: even kernels are reserved for the transposed path");
    if (b->value.dim(0) != Cout) throw DimensionError("conv2d: bias length vs output channels");
    if (stride < 1 || pad < 0) throw ConfigError("conv2d: invalid stride/pad");
    const int OH = (H + 2 * pad - k) / stride + 1;
    const int OW = (W + 2 * pad - k) / stride + 1;
    if (OH <= 0 || OW <= 0) throw DimensionError("conv2d: empty output");

    const int ckk = Cin * k * k;
    const std::int64_t ospatial = static_cast<std::int64_t>(OH) * OW;
    std::vector<T> col(static_cast<std::size_t>(ckk) * ospatial);
    im2col(x->value.ptr(), Cin, H, W, k, stride, pad, OH, OW, col.data());

    Tensor<T> out({Cout, OH, OW});
    gemm<T>(false, false, Cout, static_cast<int>(ospatial), ckk, w->value.ptr(), ckk, col.data(),
            static_cast<int>(ospatial), out.ptr(), static_cast<int>(ospatial), T(0));
    for (int co = 0; co < Cout; ++co) {
        const T bias = b->value[co];
        T* row = out.ptr() + static_cast<std::size_t>(co) * ospatial;
        for (std::int64_t i = 0; i < ospatial; ++i) row[i] += bias;
    }

    auto fn = [stride, pad, k, Cin, H, W, Cout, OH, OW, ckk, ospatial](Node<T>& self) {
        const auto& xp = self.parents[0];
        const auto& wp = self.parents[1];
        const auto& bp = self.parents[2];
        const T* g = self.grad.ptr();
        if (wp->requires_grad) {
            std::vector<T> col(static_cast<std::size_t>(ckk) * ospatial);
            im2col(xp->value.ptr(), Cin, H, W, k, stride, pad, OH, OW, col.data());
            gemm<T>(false, true, Cout, ckk, static_cast<int>(ospatial), g,
                    static_cast<int>(ospatial), col.data(), static_cast<int>(ospatial),
                    wp->ensure_grad().ptr(), ckk, T(1));
        }
        if (bp->requires_grad) {
            T* db = bp->ensure_grad().ptr();
            for (int co = 0; co < Cout; ++co) {
                T s = T(0);
                const T* row = g + static_cast<std::size_t>(co) * ospatial;
                for (std::int64_t i = 0; i < ospatial; ++i) s += row[i];
                db[co] += s;
            }
        }
        if (xp->requires_grad) {
            std::vector<T> dcol(static_cast<std::size_t>(ckk) * ospatial);
            gemm<T>(true, false, ckk, static_cast<int>(ospatial), Cout, self.parents[1]->value.ptr(),
                    ckk, g, static_cast<int>(ospatial), dcol.data(), static_cast<int>(ospatial),
                    T(0));
            col2im_add(dcol.data(), Cin, H, W, k, stride, pad, OH, OW, xp->ensure_grad().ptr());
        }
    };
    return finish<T>(std::move(out), {x, w, b}, std::move(fn));
}

template <typename T>
NodePtr<T> deconv2d(const NodePtr<T>& x, const NodePtr<T>& w, const NodePtr<T>& b) {
    if (x->value.rank() != 3 || w->value.rank() != 4 || b->value.rank() != 1)
        throw DimensionError("deconv2d: expected x[C,H,W], w[C,O,k,k], b[O]");
    const int Cin = x->value.dim(0), H = x->value.dim(1), W = x->value.dim(2);
    const int Cout = w->value.dim(1), k = w->value.dim(2);
    constexpr int stride = 2, pad = 1;
    if (w->value.dim(0) != Cin) throw DimensionError("deconv2d: kernel vs tensor channels");
    if (k != 4 || w->value.dim(3) != 4)
        throw ConfigError("deconv2d: exact x2 upsampling requires a 4x4 kernel");
    if (b->value.dim(0) != Cout) throw DimensionError("deconv2d: bias length vs output channels");
    const int OH = 2 * H, OW = 2 * W;

    const int okk = Cout * k * k;
    const std::int64_t ispatial = static_cast<std::int64_t>(H) * W;
    std::vector<T> cols(static_cast<std::size_t>(okk) * ispatial);
    // w viewed as [Cin, Cout*k*k]; cols = w^T * x.
    gemm<T>(true, false, okk, static_cast<int>(ispatial), Cin, w->value.ptr(), okk, x->value.ptr(),
            static_cast<int>(ispatial), cols.data(), static_cast<int>(ispatial), T(0));

    Tensor<T> out({Cout, OH, OW});
    for (int co = 0; co < Cout; ++co) {
        const T bias = b->value[co];
        T* row = out.ptr() + static_cast<std::size_t>(co) * OH * OW;
        for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) row[i] = bias;
    }
    col2im_add(cols.data(), Cout, OH, OW, k, stride, pad, H, W, out.ptr());

    auto fn = [Cin, H, W, Cout, OH, OW, okk, ispatial](Node<T>& self) {
        const auto& xp = self.parents[0];
        const auto& wp = self.parents[1];
        const auto& bp = self.parents[2];
        const T* g = self.grad.ptr();
        std::vector<T> m;
        if (xp->requires_grad || wp->requires_grad) {
            m.resize(static_cast<std::size_t>(okk) * ispatial);
            im2col(g, Cout, OH, OW, 4, 2, 1, H, W, m.data());
        }
        if (xp->requires_grad)
            gemm<T>(false, false, Cin, static_cast<int>(ispatial), okk,
                    self.parents[1]->value.ptr(), okk, m.data(), static_cast<int>(ispatial),
                    xp->ensure_grad().ptr(), static_cast<int>(ispatial), T(1));
        if (wp->requires_grad)
            gemm<T>(false, true, Cin, okk, static_cast<int>(ispatial), xp->value.ptr(),
                    static_cast<int>(ispatial), m.data(), static_cast<int>(ispatial),
                    wp->ensure_grad().ptr(), okk, T(1));
        if (bp->requires_grad) {
            T* db = bp->ensure_grad().ptr();
            for (int co = 0; co < Cout; ++co) {
                T s = T(0);
                const T* row = g + static_cast<std::size_t>(co) * OH * OW;
                for (std::int64_t i = 0; i < static_cast<std::int64_t>(OH) * OW; ++i) s += row[i];
                db[co] += s;
            }
        }
    };
    return finish<T>(std::move(out), {x, w, b}, std::move(fn));
}

template <typename T>
NodePtr<T> leaky_relu(const NodePtr<T>& x, T slope) {
    if (!(slope > T(0) && slope < T(1))) throw ConfigError("leaky_relu: slope must be in (0,1)");
    Tensor<T> out;
    out.shape = x->value.shape;
    out.data.resize(x->value.data.size());
    const T* in = x->value.ptr();
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = in[i] >= T(0) ? in[i] : slope * in[i];

    auto fn = [slope](Node<T>& self) {
        const auto& xp = self.parents[0];
        if (!xp->requires_grad) return;
        const T* in = xp->value.ptr();
        const T* g = self.grad.ptr();
        T* dx = xp->ensure_grad().ptr();
        const std::size_t n = self.grad.data.size();
        for (std::size_t i = 0; i < n; ++i) dx[i] += in[i] >= T(0) ? g[i] : slope * g[i];
    };
    return finish<T>(std::move(out), {x}, std::move(fn));
}

template <typename T>
NodePtr<T> max_over_set(const std::vector<NodePtr<T>>& xs) {
    if (xs.empty()) throw ArityError("max_over_set: empty input set");
    for (const auto& x : xs)
        if (!x->value.same_shape(xs[0]->value))
            throw DimensionError("max_over_set: mismatched shapes " + shape_str(x->value.shape) +
                                 " vs " + shape_str(xs[0]->value.shape));
    const std::size_t n = xs[0]->value.data.size();
    Tensor<T> out;
    out.shape = xs[0]->value.shape;
    out.data = xs[0]->value.data;
    auto argmax = std::make_shared<std::vector<std::int32_t>>(n, 0);
    for (std::size_t j = 1; j < xs.size(); ++j) {
        const T* v = xs[j]->value.ptr();
        for (std::size_t i = 0; i < n; ++i) {
            if (v[i] > out.data[i]) {
                out.data[i] = v[i];
                (*argmax)[i] = static_cast<std::int32_t>(j);
            }
        }
    }
    // +0.0 canonicalizes -0.0 so the output bits are order invariant.
    for (std::size_t i = 0; i < n; ++i) out.data[i] += T(0);

    auto fn = [argmax, n](Node<T>& self) {
        const T* g = self.grad.ptr();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& p = self.parents[static_cast<std::size_t>((*argmax)[i])];
            if (p->requires_grad) p->ensure_grad().data[i] += g[i];
        }
    };
    return finish<T>(std::move(out), xs, std::move(fn));
}

template <typename T>
NodePtr<T> l2_normalize_channels(const NodePtr<T>& x, T eps) {
    if (x->value.rank() != 3 || x->value.dim(0) != 3)
        throw DimensionError("l2_normalize_channels: expected [3,H,W], got " +
                             shape_str(x->value.shape));
    const std::int64_t hw = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
    Tensor<T> out(x->value.shape);
    const T* in = x->value.ptr();
    for (std::int64_t p = 0; p < hw; ++p) {
        const T a = in[p], b = in[hw + p], c = in[2 * hw + p];
        const T s = std::sqrt(a * a + b * b + c * c + eps);
        out.data[p] = a / s;
        out.data[hw + p] = b / s;
        out.data[2 * hw + p] = c / s;
    }

    auto fn = [hw, eps](Node<T>& self) {
        const auto& xp = self.parents[0];
        if (!xp->requires_grad) return;
        const T* in = xp->value.ptr();
        const T* g = self.grad.ptr();
        T* dx = xp->ensure_grad().ptr();
        for (std::int64_t p = 0; p < hw; ++p) {
            const T v[3] = {in[p], in[hw + p], in[2 * hw + p]};
            const T gr[3] = {g[p], g[hw + p], g[2 * hw + p]};
            const T s2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + eps;
            const T s = std::sqrt(s2);
            const T dot = gr[0] * v[0] + gr[1] * v[1] + gr[2] * v[2];
            const T inv3 = T(1) / (s2 * s);
            dx[p] += gr[0] / s - v[0] * dot * inv3;
            dx[hw + p] += gr[1] / s - v[1] * dot * inv3;
            dx[2 * hw + p] += gr[2] / s - v[2] * dot * inv3;
        }
    };
    return finish<T>(std::move(out), {x}, std::move(fn));
}

template <typename T>
NodePtr<T> concat_channels(const std::vector<NodePtr<T>>& xs) {
    if (xs.empty()) throw ArityError("concat_channels: empty input set");
    const int H = xs[0]->value.dim(1), W = xs[0]->value.dim(2);
    int C = 0;
    for (const auto& x : xs) {
        if (x->value.rank() != 3 || x->value.dim(1) != H || x->value.dim(2) != W)
            throw DimensionError("concat_channels: spatial mismatch " + shape_str(x->value.shape));
        C += x->value.dim(0);
    }
    Tensor<T> out({C, H, W});
    std::size_t off = 0;
    for (const auto& x : xs) {
        std::memcpy(out.ptr() + off, x->value.ptr(), x->value.data.size() * sizeof(T));
        off += x->value.data.size();
    }

    auto fn = [](Node<T>& self) {
        const T* g = self.grad.ptr();
        std::size_t off = 0;
        for (const auto& p : self.parents) {
            const std::size_t n = p->value.data.size();
            if (p->requires_grad) {
                T* dst = p->ensure_grad().ptr();
                for (std::size_t i = 0; i < n; ++i) dst[i] += g[off + i];
            }
            off += n;
        }
    };
    return finish<T>(std::move(out), xs, std::move(fn));
}

template <typename T>
NodePtr<T> slice_channels(const NodePtr<T>& x, int c0, int c1) {
    if (x->value.rank() != 3) throw DimensionError("slice_channels: expected [C,H,W]");
    const int C = x->value.dim(0);
    if (c0 < 0 || c1 <= c0 || c1 > C) throw DimensionError("slice_channels: bad range");
    const std::int64_t hw = static_cast<std::int64_t>(x->value.dim(1)) * x->value.dim(2);
    Tensor<T> out({c1 - c0, x->value.dim(1), x->value.dim(2)});
    std::memcpy(out.ptr(), x->value.ptr() + c0 * hw, out.data.size() * sizeof(T));

    auto fn = [c0, hw](Node<T>& self) {
        const auto& xp = self.parents[0];
        if (!xp->requires_grad) return;
        const T* g = self.grad.ptr();
        T* dx = xp->ensure_grad().ptr() + c0 * hw;
        for (std::size_t i = 0; i < self.grad.data.size(); ++i) dx[i] += g[i];
    };
    return finish<T>(std::move(out), {x}, std::move(fn));
}

template <typename T>
NodePtr<T> add(const NodePtr<T>& a, const NodePtr<T>& b) {
    if (!a->value.same_shape(b->value))
        throw DimensionError("add: shape mismatch " + shape_str(a->value.shape) + " vs " +
                             shape_str(b->value.shape));
    Tensor<T> out;
    out.shape = a->value.shape;
    out.data.resize(a->value.data.size());
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = a->value.data[i] + b->value.data[i];

    auto fn = [](Node<T>& self) {
        const T* g = self.grad.ptr();
        for (const auto& p : self.parents) {
            if (!p->requires_grad) continue;
            T* dst = p->ensure_grad().ptr();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) dst[i] += g[i];
        }
    };
    return finish<T>(std::move(out), {a, b}, std::move(fn));
}

template <typename T>
NodePtr<T> cosine_loss(const NodePtr<T>& pred, const Tensor<T>& gt,
                       const std::vector<std::uint8_t>& mask) {
    if (pred->value.rank() != 3 || pred->value.dim(0) != 3)
        throw DimensionError("cosine_loss: expected [3,H,W] prediction");
    if (!pred->value.same_shape(gt)) throw DimensionError("cosine_loss: pred vs gt shape");
    const std::int64_t hw = static_cast<std::int64_t>(pred->value.dim(1)) * pred->value.dim(2);
    if (static_cast<std::int64_t>(mask.size()) != hw)
        throw DimensionError("cosine_loss: mask size mismatch");
    std::int64_t m = 0;
    for (auto v : mask) m += v ? 1 : 0;
    if (m == 0) throw EvalError("cosine_loss: empty mask");

    const T* p = pred->value.ptr();
    const T* n = gt.ptr();
    double acc = 0.0;
    for (std::int64_t i = 0; i < hw; ++i) {
        if (!mask[static_cast<std::size_t>(i)]) continue;
        const double dot = static_cast<double>(p[i]) * n[i] +
                           static_cast<double>(p[hw + i]) * n[hw + i] +
                           static_cast<double>(p[2 * hw + i]) * n[2 * hw + i];
        acc += 1.0 - dot;
    }
    Tensor<T> out({1}, static_cast<T>(acc / static_cast<double>(m)));

    auto gt_copy = std::make_shared<Tensor<T>>(gt);
    auto mask_copy = std::make_shared<std::vector<std::uint8_t>>(mask);
    auto fn = [gt_copy, mask_copy, hw, m](Node<T>& self) {
        const auto& pp = self.parents[0];
        if (!pp->requires_grad) return;
        const T scale = self.grad.data[0] / static_cast<T>(m);
        const T* n = gt_copy->ptr();
        T* dp = pp->ensure_grad().ptr();
        for (std::int64_t i = 0; i < hw; ++i) {
            if (!(*mask_copy)[static_cast<std::size_t>(i)]) continue;
            dp[i] -= scale * n[i];
            dp[hw + i] -= scale * n[hw + i];
            dp[2 * hw + i] -= scale * n[2 * hw + i];
        }
    };
    return finish<T>(std::move(out), {pred}, std::move(fn));
}

template <typename T>
NodePtr<T> weighted_sum(const NodePtr<T>& x, const Tensor<T>& weights) {
    if (!x->value.same_shape(weights)) throw DimensionError("weighted_sum: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.data.size(); ++i)
        acc += static_cast<double>(x->value.data[i]) * weights.data[i];
    Tensor<T> out({1}, static_cast<T>(acc));

    auto w_copy = std::make_shared<Tensor<T>>(weights);
    auto fn = [w_copy](Node<T>& self) {
        const auto& xp = self.parents[0];
        if (!xp->requires_grad) return;
        const T g = self.grad.data[0];
        T* dx = xp->ensure_grad().ptr();
        for (std::size_t i = 0; i < w_copy->data.size(); ++i) dx[i] += g * w_copy->data[i];
    };
    return finish<T>(std::move(out), {x}, std::move(fn));
}

#define PS_INSTANTIATE_OPS(T)                                                                 \
    template NodePtr<T> conv2d<T>(const NodePtr<T>&, const NodePtr<T>&, const NodePtr<T>&,   \
                                  int, int);                                                  \
    template NodePtr<T> deconv2d<T>(const NodePtr<T>&, const NodePtr<T>&, const NodePtr<T>&); \
    template NodePtr<T> leaky_relu<T>(const NodePtr<T>&, T);                                  \
    template NodePtr<T> max_over_set<T>(const std::vector<NodePtr<T>>&);                      \
    template NodePtr<T> l2_normalize_channels<T>(const NodePtr<T>&, T);                       \
    template NodePtr<T> concat_channels<T>(const std::vector<NodePtr<T>>&);                   \
    template NodePtr<T> slice_channels<T>(const NodePtr<T>&, int, int);                       \
    template NodePtr<T> add<T>(const NodePtr<T>&, const NodePtr<T>&);                         \
    template NodePtr<T> cosine_loss<T>(const NodePtr<T>&, const Tensor<T>&,                   \
                                       const std::vector<std::uint8_t>&);                     \
    template NodePtr<T> weighted_sum<T>(const NodePtr<T>&, const Tensor<T>&);

PS_INSTANTIATE_OPS(float)
PS_INSTANTIATE_OPS(double)
#undef PS_INSTANTIATE_OPS

}  // namespace ps::ag
