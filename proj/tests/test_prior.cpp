#include <doctest.h>

#include <cmath>

#include "ps/metrics.hpp"
#include "ps/prior.hpp"
#include "ps/rng.hpp"

using namespace ps;

namespace {

ObservationStack plane_stack(const std::vector<Vec3>& dirs) {
    // Unit-albedo flat plane, ideal Lambertian: luminance = n . l with
    // n = (0,0,1).
    const int size = 8;
    ObservationStack stack;
    stack.width = stack.height = size;
    stack.mask.assign(size * size, 1);
    for (const Vec3& d : dirs) {
        stack.lights.directions.push_back(d);
        stack.lights.intensities.push_back({1, 1, 1});
        stack.images.push_back(TensorF({3, size, size}, static_cast<float>(std::max(0.0, d.z))));
    }
    return stack;
}

}  // namespace

TEST_CASE("pseudo_inverse of an identity-padded light matrix selects rows") {
    std::vector<Vec3> dirs = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    auto pinv = pseudo_inverse(dirs);  // 3x3 identity
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            CHECK(pinv[static_cast<std::size_t>(r) * 3 + c] ==
                  doctest::Approx(r == c ? 1.0 : 0.0).epsilon(1e-12));
}

TEST_CASE("pseudo_inverse is a left inverse within 1e-10") {
    Rng rng(21);
    std::vector<Vec3> dirs;
    for (int j = 0; j < 10; ++j) {
        const double z = rng.uniform(0.3, 1.0);
        const double a = rng.uniform(0.0, 2 * M_PI);
        const double r = std::sqrt(1 - z * z);
        dirs.push_back({r * std::cos(a), r * std::sin(a), z});
    }
    auto pinv = pseudo_inverse(dirs);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int j = 0; j < 10; ++j) {
                const double lj[3] = {dirs[j].x, dirs[j].y, dirs[j].z};
                acc += pinv[static_cast<std::size_t>(r) * 10 + j] * lj[c];
            }
            CHECK(std::abs(acc - (r == c ? 1.0 : 0.0)) < 1e-10);
        }
}

TEST_CASE("coincident lights are rejected as degenerate") {
    std::vector<Vec3> dirs = {{0, 0, 1}, {0, 0, 1}, {0.1, 0, 0.99}};
    CHECK_THROWS_AS(pseudo_inverse(dirs), DegenerateLightingError);
    CHECK_THROWS_AS(pseudo_inverse({{0, 0, 1}, {0, 0, 1}}), ArityError);
}

TEST_CASE("flat plane with three spanning lights recovers (0,0,1) exactly") {
    std::vector<Vec3> dirs = {Vec3{0.5, 0, 0.866025403784}.normalized(),
                              Vec3{-0.25, 0.433012, 0.866025}.normalized(),
                              Vec3{-0.25, -0.433012, 0.866025}.normalized()};
    ObservationStack stack = plane_stack(dirs);
    PriorResult res = solve_prior(stack);
    const std::int64_t hw = 64;
    for (std::int64_t i = 0; i < hw; ++i) {
        CHECK(std::abs(res.normals.n[i]) < 1e-6);
        CHECK(std::abs(res.normals.n[hw + i]) < 1e-6);
        CHECK(res.normals.n[2 * hw + i] == doctest::Approx(1.0f).epsilon(1e-6));
    }
    CHECK(res.flagged == 0);
}

TEST_CASE("noiseless Lambertian sphere solves to well under 0.1 degree") {
    SceneParams p;
    p.width = p.height = 64;
    Scene scene = make_scene(SceneKind::sphere, p, 3);
    LightSet lights = sample_lights(10, 17);
    RenderResult r = render_stack(scene, lights, Brdf::lambertian, RenderFlags{});
    PriorResult res = solve_prior(r.stack);

    // Restrict to pixels lit by at least 3 lights.
    const std::int64_t hw = 64 * 64;
    NormalMap pred = res.normals;
    for (std::int64_t i = 0; i < hw; ++i) {
        int lit = 0;
        const Vec3 n{r.gt.n[i], r.gt.n[hw + i], r.gt.n[2 * hw + i]};
        for (const Vec3& l : lights.directions)
            if (n.dot(l) > 0) lit++;
        if (lit < 3) pred.mask[static_cast<std::size_t>(i)] = 0;
    }
    CHECK(mae(angular_error_map(pred, r.gt)) < 0.1);
}

TEST_CASE("normals are scale invariant, albedo scales linearly") {
    SceneParams p;
    p.width = p.height = 32;
    Scene scene = make_scene(SceneKind::blob, p, 4);
    RenderFlags flags;
    flags.clip = false;  // keep the scaling exact
    RenderResult r = render_stack(scene, sample_lights(8, 9), Brdf::lambertian, flags);
    PriorResult base = solve_prior(r.stack);

    ObservationStack scaled = r.stack;
    for (auto& img : scaled.images)
        for (auto& v : img.data) v *= 3.0f;
    PriorResult res = solve_prior(scaled);
    const std::int64_t hw = 32 * 32;
    for (std::int64_t i = 0; i < 3 * hw; ++i)
        CHECK(std::abs(res.normals.n[i] - base.normals.n[i]) < 1e-6);
    for (std::int64_t i = 0; i < hw; ++i)
        if (base.albedo.rho[static_cast<std::size_t>(i)] > 1e-4f)
            CHECK(res.albedo.rho[static_cast<std::size_t>(i)] ==
                  doctest::Approx(3.0f * base.albedo.rho[static_cast<std::size_t>(i)])
                      .epsilon(1e-4));
}

TEST_CASE("solver is total under specular contamination") {
    SceneParams p;
    p.width = p.height = 32;
    p.rho_s = 0.6f;
    p.shininess = 32.0f;
    Scene scene = make_scene(SceneKind::sphere, p, 6);
    RenderFlags flags;
    flags.cast_shadows = true;
    flags.noise_sigma = 0.01;
    RenderResult r = render_stack(scene, sample_lights(12, 13), Brdf::blinn_phong, flags);
    PriorResult res = solve_prior(r.stack);
    CHECK(res.normals.n.all_finite());
    const std::int64_t hw = 32 * 32;
    for (std::int64_t i = 0; i < hw; ++i) {
        if (!res.normals.mask[static_cast<std::size_t>(i)]) continue;
        const double n =
            Vec3{res.normals.n[i], res.normals.n[hw + i], res.normals.n[2 * hw + i]}.norm();
        CHECK(std::abs(n - 1.0) < 1e-4);
        CHECK(res.normals.n[2 * hw + i] >= 0.0f);  // flipped toward the camera
    }
}

TEST_CASE("solve_prior needs at least three observations") {
    ObservationStack stack = plane_stack({{0, 0, 1}, {0.3, 0, 0.9539392014}});
    CHECK_THROWS_AS(solve_prior(stack), ArityError);
}

TEST_CASE("solve result does not depend on light order, bit-exact") {
    SceneParams p;
    p.width = p.height = 24;
    p.rho_s = 0.3f;
    Scene scene = make_scene(SceneKind::blob, p, 10);
    RenderResult r = render_stack(scene, sample_lights(7, 29), Brdf::blinn_phong, RenderFlags{});
    PriorResult base = solve_prior(r.stack);

    ObservationStack shuffled;
    shuffled.width = r.stack.width;
    shuffled.height = r.stack.height;
    shuffled.mask = r.stack.mask;
    const int perm[7] = {4, 2, 6, 0, 5, 1, 3};
    for (int j : perm) {
        shuffled.images.push_back(r.stack.images[static_cast<std::size_t>(j)]);
        shuffled.lights.directions.push_back(r.stack.lights.directions[static_cast<std::size_t>(j)]);
        shuffled.lights.intensities.push_back(r.stack.lights.intensities[static_cast<std::size_t>(j)]);
    }
    PriorResult res = solve_prior(shuffled);
    CHECK(std::memcmp(res.normals.n.ptr(), base.normals.n.ptr(),
                      base.normals.n.data.size() * 4) == 0);
}
