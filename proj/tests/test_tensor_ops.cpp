#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "ps/adam.hpp"
#include "ps/gradcheck.hpp"
#include "ps/ops.hpp"
#include "ps/rng.hpp"

using namespace ps;
using ag::NodePtr;

namespace {

template <typename T>
Tensor<T> rnd(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST_CASE("tensor basics") {
    TensorF t({2, 3});
    CHECK(t.numel() == 6);
    CHECK(t.all_finite());
    t[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    CHECK_THROWS_AS(TensorF({0, 3}), DimensionError);
    CHECK_THROWS_AS(TensorF::from({2, 2}, {1.f, 2.f, 3.f}), DimensionError);
}

TEST_CASE("conv2d ones kernel sums the window") {
    auto x = ag::make_leaf<float>(TensorF({1, 3, 3}, 1.0f));
    auto w = ag::make_leaf<float>(TensorF({1, 1, 3, 3}, 1.0f));
    auto b = ag::make_leaf<float>(TensorF({1}));
    auto y = ag::conv2d<float>(x, w, b, 1, 1);
    CHECK(y->value.shape == std::vector<int>{1, 3, 3});
    CHECK(y->value.at3(0, 1, 1) == doctest::Approx(9.0f));  // full window of ones
    CHECK(y->value.at3(0, 0, 0) == doctest::Approx(4.0f));  // corner
}

TEST_CASE("conv2d stride-2 shape") {
    auto x = ag::make_leaf<float>(TensorF({1, 32, 32}));
    auto w = ag::make_leaf<float>(TensorF({1, 1, 3, 3}));
    auto b = ag::make_leaf<float>(TensorF({1}));
    auto y = ag::conv2d<float>(x, w, b, 2, 1);
    CHECK(y->value.shape == std::vector<int>{1, 16, 16});
}

TEST_CASE("conv2d shape mismatch raises") {
    auto x = ag::make_leaf<float>(TensorF({2, 8, 8}));
    auto w = ag::make_leaf<float>(TensorF({1, 3, 3, 3}));
    auto b = ag::make_leaf<float>(TensorF({1}));
    CHECK_THROWS_AS(ag::conv2d<float>(x, w, b, 1, 1), DimensionError);
    auto w4 = ag::make_leaf<float>(TensorF({1, 2, 4, 4}));
    CHECK_THROWS_AS(ag::conv2d<float>(x, w4, b, 1, 1), ConfigError);
}

TEST_CASE("conv2d gradient vs central differences") {
    Rng rng(101);
    NamedTensors<double> leaves;
    leaves.add("x", rnd<double>({4, 5, 5}, rng));
    leaves.add("w", rnd<double>({2, 4, 3, 3}, rng));
    leaves.add("b", rnd<double>({2}, rng));
    auto probe = rnd<double>({2, 5, 5}, rng);
    auto rep = check_gradients(
        [probe](const std::vector<NodePtr<double>>& l) {
            return ag::weighted_sum<double>(ag::conv2d<double>(l[0], l[1], l[2], 1, 1), probe);
        },
        leaves, 1e-5, 80, rng);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("conv2d float forward matches a naive loop at production shapes") {
    // Guards against BLAS kernel regressions on the shapes the model uses.
    Rng rng(77);
    auto run = [&](int cin, int cout, int hw, int stride) {
        TensorF xv = rnd<float>({cin, hw, hw}, rng);
        TensorF wv = rnd<float>({cout, cin, 3, 3}, rng);
        TensorF bv = rnd<float>({cout}, rng);
        auto y = ag::conv2d<float>(ag::make_leaf<float>(xv), ag::make_leaf<float>(wv),
                                   ag::make_leaf<float>(bv), stride, 1);
        const int oh = (hw + 2 - 3) / stride + 1;
        double worst = 0;
        for (int co = 0; co < cout; ++co)
            for (int y0 = 0; y0 < oh; ++y0)
                for (int x0 = 0; x0 < oh; ++x0) {
                    double acc = bv[co];
                    for (int ci = 0; ci < cin; ++ci)
                        for (int kh = 0; kh < 3; ++kh)
                            for (int kw = 0; kw < 3; ++kw) {
                                const int iy = y0 * stride - 1 + kh;
                                const int ix = x0 * stride - 1 + kw;
                                if (iy < 0 || iy >= hw || ix < 0 || ix >= hw) continue;
                                acc += static_cast<double>(xv.at3(ci, iy, ix)) *
                                       wv.at4(co, ci, kh, kw);
                            }
                    worst = std::max(worst, std::abs(acc - y->value.at3(co, y0, x0)));
                }
        return worst;
    };
    CHECK(run(32, 16, 2, 1) < 1e-4);   // fuse layer extent
    CHECK(run(19, 32, 32, 2) < 1e-4);  // regressor downsample
    CHECK(run(16, 16, 8, 1) < 1e-4);
}

TEST_CASE("deconv2d doubles the extent") {
    auto x = ag::make_leaf<float>(TensorF({1, 8, 8}));
    auto w = ag::make_leaf<float>(TensorF({1, 1, 4, 4}));
    auto b = ag::make_leaf<float>(TensorF({1}));
    auto y = ag::deconv2d<float>(x, w, b);
    CHECK(y->value.shape == std::vector<int>{1, 16, 16});
    auto w3 = ag::make_leaf<float>(TensorF({1, 1, 3, 3}));
    CHECK_THROWS_AS(ag::deconv2d<float>(x, w3, b), ConfigError);
}

TEST_CASE("deconv2d delta spreads into a 4x4 footprint") {
    // Direct transposed-convolution oracle: the delta at (ih,iw) deposits
    // w[kh,kw] at (2*ih-1+kh, 2*iw-1+kw).
    Rng rng(55);
    TensorF xv({1, 4, 4});
    xv.at3(0, 1, 2) = 1.0f;
    TensorF wv = rnd<float>({1, 1, 4, 4}, rng);
    auto y = ag::deconv2d<float>(ag::make_leaf<float>(xv), ag::make_leaf<float>(wv),
                                 ag::make_leaf<float>(TensorF({1})));
    TensorF expect({1, 8, 8});
    for (int kh = 0; kh < 4; ++kh)
        for (int kw = 0; kw < 4; ++kw) {
            const int oh = 1 * 2 - 1 + kh, ow = 2 * 2 - 1 + kw;
            if (oh >= 0 && oh < 8 && ow >= 0 && ow < 8)
                expect.at3(0, oh, ow) = wv.at4(0, 0, kh, kw);
        }
    for (std::int64_t i = 0; i < expect.numel(); ++i)
        CHECK(y->value[i] == doctest::Approx(expect[i]).epsilon(1e-6));
}

TEST_CASE("deconv2d gradient vs central differences") {
    Rng rng(102);
    NamedTensors<double> leaves;
    leaves.add("x", rnd<double>({3, 4, 4}, rng));
    leaves.add("w", rnd<double>({3, 2, 4, 4}, rng));
    leaves.add("b", rnd<double>({2}, rng));
    auto probe = rnd<double>({2, 8, 8}, rng);
    auto rep = check_gradients(
        [probe](const std::vector<NodePtr<double>>& l) {
            return ag::weighted_sum<double>(ag::deconv2d<double>(l[0], l[1], l[2]), probe);
        },
        leaves, 1e-5, 80, rng);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("leaky_relu values and gradient") {
    TensorF v = TensorF::from({3}, {2.0f, -2.0f, -1.0f});
    auto x = ag::make_leaf<float>(v, true);
    auto y = ag::leaky_relu<float>(x, 0.1f);
    CHECK(y->value[0] == doctest::Approx(2.0f));
    CHECK(y->value[1] == doctest::Approx(-0.2f));
    auto obj = ag::weighted_sum<float>(y, TensorF::from({3}, {0.f, 0.f, 1.f}));
    ag::backward(obj);
    CHECK(x->grad[2] == doctest::Approx(0.1f));  // slope side of the kink
    CHECK_THROWS_AS(ag::leaky_relu<float>(x, 1.5f), ConfigError);
}

TEST_CASE("max_over_set values, symmetry, errors") {
    auto a = ag::make_leaf<float>(TensorF::from({2}, {1.0f, 5.0f}));
    auto b = ag::make_leaf<float>(TensorF::from({2}, {3.0f, 2.0f}));
    auto y = ag::max_over_set<float>({a, b});
    CHECK(y->value[0] == 3.0f);
    CHECK(y->value[1] == 5.0f);
    auto y2 = ag::max_over_set<float>({b, a});
    CHECK(std::memcmp(y->value.ptr(), y2->value.ptr(), 2 * sizeof(float)) == 0);
    CHECK_THROWS_AS(ag::max_over_set<float>({}), ArityError);
    auto c = ag::make_leaf<float>(TensorF({3}));
    CHECK_THROWS_AS(ag::max_over_set<float>({a, c}), DimensionError);
}

TEST_CASE("max_over_set permutation invariance is bit-exact") {
    Rng rng(200);
    std::vector<NodePtr<float>> xs;
    for (int j = 0; j < 5; ++j) xs.push_back(ag::make_leaf<float>(rnd<float>({4, 6, 6}, rng)));
    auto base = ag::max_over_set<float>(xs)->value;
    std::vector<NodePtr<float>> perm = {xs[3], xs[0], xs[4], xs[2], xs[1]};
    auto permuted = ag::max_over_set<float>(perm)->value;
    CHECK(std::memcmp(base.ptr(), permuted.ptr(), base.data.size() * sizeof(float)) == 0);
}

TEST_CASE("max_over_set gradient is the win indicator") {
    Rng rng(103);
    NamedTensors<double> leaves;
    Tensor<double> a = rnd<double>({2, 3, 3}, rng);
    Tensor<double> b = a;
    for (std::int64_t i = 0; i < b.numel(); ++i) b[i] += (i % 2 == 0) ? 0.4 : -0.4;
    leaves.add("a", a);
    leaves.add("b", b);
    auto probe = rnd<double>({2, 3, 3}, rng);
    auto rep = check_gradients(
        [probe](const std::vector<NodePtr<double>>& l) {
            return ag::weighted_sum<double>(ag::max_over_set<double>({l[0], l[1]}), probe);
        },
        leaves, 1e-5, 40, rng);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("l2_normalize_channels values") {
    TensorF v({3, 1, 2});
    v.at3(2, 0, 0) = 2.0f;  // pixel 0: (0,0,2); pixel 1: zero vector
    auto y = ag::l2_normalize_channels<float>(ag::make_leaf<float>(v), 1e-12f);
    CHECK(y->value.at3(0, 0, 0) == doctest::Approx(0.0f));
    CHECK(y->value.at3(2, 0, 0) == doctest::Approx(1.0f).epsilon(1e-6));
    CHECK(y->value.at3(0, 0, 1) == doctest::Approx(0.0f));
    CHECK(y->value.at3(2, 0, 1) == doctest::Approx(0.0f));  // eps-guarded, no NaN
    CHECK(y->value.all_finite());
}

TEST_CASE("l2_normalize_channels gradient") {
    Rng rng(104);
    NamedTensors<double> leaves;
    leaves.add("x", rnd<double>({3, 4, 4}, rng, 0.2, 1.0));
    auto probe = rnd<double>({3, 4, 4}, rng);
    auto rep = check_gradients(
        [probe](const std::vector<NodePtr<double>>& l) {
            return ag::weighted_sum<double>(ag::l2_normalize_channels<double>(l[0], 1e-12),
                                            probe);
        },
        leaves, 1e-5, 48, rng);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("concat_channels shapes and slice round trip") {
    Rng rng(300);
    auto a = ag::make_leaf<float>(rnd<float>({3, 8, 8}, rng));
    auto b = ag::make_leaf<float>(rnd<float>({6, 8, 8}, rng));
    auto cat = ag::concat_channels<float>({a, b});
    CHECK(cat->value.shape == std::vector<int>{9, 8, 8});

    auto big = ag::make_leaf<float>(rnd<float>({512, 8, 8}, rng));
    auto small = ag::make_leaf<float>(rnd<float>({3, 8, 8}, rng));
    CHECK(ag::concat_channels<float>({big, small})->value.shape ==
          std::vector<int>{515, 8, 8});

    auto back_a = ag::slice_channels<float>(cat, 0, 3);
    auto back_b = ag::slice_channels<float>(cat, 3, 9);
    CHECK(std::memcmp(back_a->value.ptr(), a->value.ptr(), a->value.data.size() * 4) == 0);
    CHECK(std::memcmp(back_b->value.ptr(), b->value.ptr(), b->value.data.size() * 4) == 0);

    auto mismatched = ag::make_leaf<float>(rnd<float>({2, 4, 4}, rng));
    CHECK_THROWS_AS(ag::concat_channels<float>({a, mismatched}), DimensionError);
}

TEST_CASE("adam first step moves by about lr") {
    NamedTensors<float> params;
    params.add("p", TensorF({1}));
    NamedTensors<float> grads;
    grads.add("p", TensorF({1}, 1.0f));
    AdamState<float> state;
    adam_step(params, grads, state, AdamHyper{});  // lr 0.002
    CHECK(params.at("p")[0] == doctest::Approx(-0.002).epsilon(1e-4));
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    NamedTensors<float> params;
    params.add("p", TensorF::from({2}, {0.5f, -0.25f}));
    NamedTensors<float> grads;
    grads.add("p", TensorF({2}));
    AdamState<float> state;
    adam_step(params, grads, state, AdamHyper{});
    CHECK(params.at("p")[0] == 0.5f);
    CHECK(params.at("p")[1] == -0.25f);
}

TEST_CASE("adam drives x^2 down monotonically after warmup") {
    NamedTensors<double> params;
    params.add("x", Tensor<double>({1}, 1.0));
    AdamState<double> state;
    AdamHyper hyper;
    double prev = 1.0;
    for (int t = 0; t < 100; ++t) {
        NamedTensors<double> grads;
        grads.add("x", Tensor<double>({1}, 2.0 * params.at("x")[0]));
        adam_step(params, grads, state, hyper);
        const double f = params.at("x")[0] * params.at("x")[0];
        if (t >= 3) CHECK(f <= prev);
        prev = f;
    }
    CHECK(prev < 1.0);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
    NamedTensors<float> params;
    params.add("layer.w", TensorF({1}));
    NamedTensors<float> grads;
    grads.add("layer.w", TensorF({1}, std::numeric_limits<float>::quiet_NaN()));
    AdamState<float> state;
    try {
        adam_step(params, grads, state, AdamHyper{});
        FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("layer.w") != std::string::npos);
    }
}

TEST_CASE("ops stay finite on finite inputs") {
    Rng rng(400);
    auto x = ag::make_leaf<float>(rnd<float>({3, 6, 6}, rng, -10.0, 10.0));
    CHECK(ag::l2_normalize_channels<float>(x, 1e-12f)->value.all_finite());
    CHECK(ag::leaky_relu<float>(x, 0.1f)->value.all_finite());
    auto zeros = ag::make_leaf<float>(TensorF({3, 6, 6}));
    CHECK(ag::l2_normalize_channels<float>(zeros, 1e-12f)->value.all_finite());
}

TEST_CASE("declared stride composition maps any H,W divisible by 4") {
    Rng rng(500);
    for (int trial = 0; trial < 4; ++trial) {
        const int h = 4 * (2 + static_cast<int>(rng.below(6)));
        const int w = 4 * (2 + static_cast<int>(rng.below(6)));
        auto x = ag::make_leaf<float>(TensorF({2, h, w}));
        auto w1 = ag::make_leaf<float>(TensorF({2, 2, 3, 3}));
        auto b1 = ag::make_leaf<float>(TensorF({2}));
        auto d1 = ag::conv2d<float>(x, w1, b1, 2, 1);
        auto d2 = ag::conv2d<float>(d1, w1, b1, 2, 1);
        CHECK(d2->value.dim(1) == h / 4);
        CHECK(d2->value.dim(2) == w / 4);
        auto wd = ag::make_leaf<float>(TensorF({2, 2, 4, 4}));
        auto u1 = ag::deconv2d<float>(d2, wd, b1);
        auto u2 = ag::deconv2d<float>(u1, wd, b1);
        CHECK(u2->value.dim(1) == h);
        CHECK(u2->value.dim(2) == w);
    }
}
