#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "ps/net.hpp"
#include "ps/prior.hpp"
#include "ps/rng.hpp"

using namespace ps;

namespace {

struct TestScene {
    ObservationStack stack;
    NormalMap gt;
    NormalMap prior;
};

TestScene render_test_scene(int size, int lights, std::uint64_t seed) {
    SceneParams p;
    p.width = p.height = size;
    p.rho_s = 0.3f;
    Scene scene = make_scene(SceneKind::blob, p, seed);
    RenderResult r = render_stack(scene, sample_lights(lights, seed ^ 0xabc), Brdf::blinn_phong,
                                  RenderFlags{});
    TestScene t;
    t.stack = std::move(r.stack);
    t.gt = std::move(r.gt);
    t.prior = solve_prior(t.stack).normals;
    return t;
}

}  // namespace

TEST_CASE("build_inputs lays out prior, image, broadcast light") {
    TestScene t = render_test_scene(8, 2, 3);
    auto inputs = build_inputs(t.stack, t.prior);
    REQUIRE(inputs.size() == 2);
    CHECK(inputs[0].shape == std::vector<int>{9, 8, 8});
    const std::int64_t hw = 64;
    for (std::int64_t i = 0; i < hw; ++i) {
        CHECK(inputs[0][i] == t.prior.n[i]);                     // channels 0-2: prior
        CHECK(inputs[0][3 * hw + i] == t.stack.images[0][i]);    // channels 3-5: image
        CHECK(inputs[0][6 * hw + i] ==
              doctest::Approx(static_cast<float>(t.stack.lights.directions[0].x)));
        CHECK(inputs[0][8 * hw + i] ==
              doctest::Approx(static_cast<float>(t.stack.lights.directions[0].z)));
    }
    // Permuting the lights permutes the list identically.
    ObservationStack swapped = t.stack;
    std::swap(swapped.images[0], swapped.images[1]);
    std::swap(swapped.lights.directions[0], swapped.lights.directions[1]);
    std::swap(swapped.lights.intensities[0], swapped.lights.intensities[1]);
    auto swapped_inputs = build_inputs(swapped, t.prior);
    CHECK(std::memcmp(swapped_inputs[0].ptr(), inputs[1].ptr(), inputs[1].data.size() * 4) == 0);
    CHECK(std::memcmp(swapped_inputs[1].ptr(), inputs[0].ptr(), inputs[0].data.size() * 4) == 0);
}

TEST_CASE("paper preset maps 9x32x32 to 512 fused channels at quarter scale") {
    const ArchConfig cfg = ArchConfig::paper();
    CHECK(cfg.psi_channels() == 512);
    ModelParams<float> params = init_params(cfg, 1);
    ParamNodes<float> pn = make_param_nodes<float>(params, false);
    ag::NoGradGuard guard;
    auto phi = ag::make_const<float>(TensorF({9, 32, 32}, 0.5f));
    auto psi = extract_features<float>(phi, pn, cfg);
    CHECK(psi->value.shape == std::vector<int>{512, 8, 8});
}

TEST_CASE("desk preset emits base_width*4 channels") {
    ArchConfig cfg;  // desk default, base_width 16
    ModelParams<float> params = init_params(cfg, 1);
    ParamNodes<float> pn = make_param_nodes<float>(params, false);
    ag::NoGradGuard guard;
    auto phi = ag::make_const<float>(TensorF({9, 32, 32}, 0.25f));
    auto psi = extract_features<float>(phi, pn, cfg);
    CHECK(psi->value.shape == std::vector<int>{64, 8, 8});
    auto bad = ag::make_const<float>(TensorF({9, 30, 30}, 0.25f));
    CHECK_THROWS_AS(extract_features<float>(bad, pn, cfg), DimensionError);
}

TEST_CASE("dropping the prior branch strictly shrinks the model") {
    ArchConfig with;
    ArchConfig without = with;
    without.prior_branch = false;
    CHECK(param_count(without) < param_count(with));
    // and the no-prior model runs on channels 3-8 only
    ModelParams<float> params = init_params(without, 2);
    ParamNodes<float> pn = make_param_nodes<float>(params, false);
    ag::NoGradGuard guard;
    auto phi = ag::make_const<float>(TensorF({9, 16, 16}, 0.1f));
    CHECK(extract_features<float>(phi, pn, without)->value.shape ==
          std::vector<int>{64, 4, 4});
}

TEST_CASE("regressor emits unit normals at native resolution") {
    ArchConfig cfg;
    ModelParams<float> params = init_params(cfg, 7);
    ParamNodes<float> pn = make_param_nodes<float>(params, false);
    ag::NoGradGuard guard;
    Rng rng(5);
    TensorF psi({64, 8, 8});
    for (auto& v : psi.data) v = static_cast<float>(rng.uniform(-1, 1));
    TensorF prior({3, 32, 32});
    for (auto& v : prior.data) v = static_cast<float>(rng.uniform(-1, 1));
    auto out = regress<float>(ag::make_const<float>(psi), prior, pn, cfg);
    CHECK(out->value.shape == std::vector<int>{3, 32, 32});
    const std::int64_t hw = 32 * 32;
    for (std::int64_t i = 0; i < hw; ++i) {
        const double n = std::sqrt(
            static_cast<double>(out->value[i]) * out->value[i] +
            static_cast<double>(out->value[hw + i]) * out->value[hw + i] +
            static_cast<double>(out->value[2 * hw + i]) * out->value[2 * hw + i]);
        CHECK(std::abs(n - 1.0) < 1e-5);
    }
    // Deterministic: two runs bit-identical.
    auto again = regress<float>(ag::make_const<float>(psi), prior, pn, cfg);
    CHECK(std::memcmp(out->value.ptr(), again->value.ptr(), out->value.data.size() * 4) == 0);
}

TEST_CASE("ablation variants relocate or drop the regressor concat") {
    for (int concat : {0, 2, 3}) {
        ArchConfig cfg;
        cfg.concat_after_deconv = concat;
        ModelParams<float> params = init_params(cfg, 3);
        ParamNodes<float> pn = make_param_nodes<float>(params, false);
        ag::NoGradGuard guard;
        TensorF psi({64, 4, 4}, 0.3f);
        TensorF prior({3, 16, 16}, 0.5f);
        auto out = regress<float>(ag::make_const<float>(psi), prior, pn, cfg);
        CHECK(out->value.shape == std::vector<int>{3, 16, 16});
    }
    ArchConfig bad;
    bad.concat_after_deconv = 1;
    CHECK_THROWS_AS(layer_plan(bad), ConfigError);
}

TEST_CASE("fuse with one input is the identity") {
    Rng rng(8);
    TensorF v({4, 4, 4});
    for (auto& x : v.data) x = static_cast<float>(rng.uniform(-1, 1));
    auto out = fuse<float>({ag::make_leaf<float>(v)});
    for (std::int64_t i = 0; i < v.numel(); ++i) CHECK(out->value[i] == v[i]);
}

TEST_CASE("full pipeline is bit-exact under light permutation") {
    TestScene t = render_test_scene(16, 5, 11);
    ArchConfig cfg;
    ModelParams<float> params = init_params(cfg, 21);
    NormalMap base = infer(t.stack, t.prior, params, 1);

    ObservationStack shuffled;
    shuffled.width = t.stack.width;
    shuffled.height = t.stack.height;
    shuffled.mask = t.stack.mask;
    const int perm[5] = {3, 0, 4, 2, 1};
    for (int j : perm) {
        shuffled.images.push_back(t.stack.images[static_cast<std::size_t>(j)]);
        shuffled.lights.directions.push_back(t.stack.lights.directions[static_cast<std::size_t>(j)]);
        shuffled.lights.intensities.push_back(t.stack.lights.intensities[static_cast<std::size_t>(j)]);
    }
    NormalMap prior2 = solve_prior(shuffled).normals;
    CHECK(std::memcmp(prior2.n.ptr(), t.prior.n.ptr(), t.prior.n.data.size() * 4) == 0);
    NormalMap shuffled_pred = infer(shuffled, prior2, params, 1);
    CHECK(std::memcmp(base.n.ptr(), shuffled_pred.n.ptr(), base.n.data.size() * 4) == 0);
}

TEST_CASE("minimal three-light stack runs end to end") {
    TestScene t = render_test_scene(8, 3, 17);
    ArchConfig cfg;
    ModelParams<float> params = init_params(cfg, 4);
    NormalMap pred = infer(t.stack, t.prior, params, 1);
    CHECK(pred.n.all_finite());
    CHECK(pred.width == 8);
}

TEST_CASE("inference result does not depend on the thread split") {
    TestScene t = render_test_scene(16, 7, 23);
    ArchConfig cfg;
    ModelParams<float> params = init_params(cfg, 5);
    NormalMap one = infer(t.stack, t.prior, params, 1);
    NormalMap four = infer(t.stack, t.prior, params, 4);
    CHECK(std::memcmp(one.n.ptr(), four.n.ptr(), one.n.data.size() * 4) == 0);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    ArchConfig cfg;
    cfg.base_width = 8;
    cfg.concat_after_deconv = 3;
    cfg.residual = false;
    ModelParams<float> params = init_params(cfg, 99);
    const std::string path =
        (std::filesystem::temp_directory_path() / "ps_ckpt_test.lpsn").string();
    save_checkpoint(params, path);
    ModelParams<float> loaded = load_checkpoint(path);
    CHECK(loaded.cfg == params.cfg);
    REQUIRE(loaded.tensors.size() == params.tensors.size());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        CHECK(loaded.tensors.names[i] == params.tensors.names[i]);
        CHECK(loaded.tensors.tensors[i].shape == params.tensors.tensors[i].shape);
        CHECK(std::memcmp(loaded.tensors.tensors[i].ptr(), params.tensors.tensors[i].ptr(),
                          params.tensors.tensors[i].data.size() * 4) == 0);
    }
    std::filesystem::remove(path);
}

TEST_CASE("every parameter receives a gradient in training mode") {
    TestScene t = render_test_scene(8, 2, 29);
    for (bool prior_branch : {true, false}) {
        for (int concat : {0, 2, 3}) {
            ArchConfig cfg;
            cfg.base_width = 4;
            cfg.prior_branch = prior_branch;
            cfg.concat_after_deconv = concat;
            ModelParams<float> params = init_params(cfg, 31);
            ParamNodes<float> pn = make_param_nodes<float>(params, true);
            auto inputs = build_inputs(t.stack, t.prior);
            auto pred = forward_graph<float>(inputs, t.prior.n, pn, cfg);
            auto loss = ag::cosine_loss<float>(pred, t.gt.n, t.gt.mask);
            ag::backward(loss);
            for (std::size_t i = 0; i < pn.nodes.size(); ++i) {
                INFO(params.tensors.names[i]);
                CHECK_FALSE(pn.nodes[i]->grad.data.empty());
            }
        }
    }
}
