#include <doctest.h>

#include <cmath>
#include <cstring>

#include "ps/render.hpp"
#include "ps/rng.hpp"

using namespace ps;

namespace {

Scene flat_plane(int size, float rho_d) {
    SceneParams mat;
    mat.albedo = {rho_d, rho_d, rho_d};
    return scene_from_heightfield(size, size, std::vector<double>(size * size, 0.0), mat);
}

// Independent shadow oracle: same documented algorithm (0.5 px horizontal
// steps, bilinear lookup), written directly against the heightfield.
bool oracle_shadowed(const Scene& s, int px, int py, const Vec3& l) {
    const double lxy = std::sqrt(l.x * l.x + l.y * l.y);
    if (lxy < 1e-9) return false;
    double zmax = s.height_px[0];
    for (double h : s.height_px) zmax = std::max(zmax, h);
    const double dt = 0.5 / lxy;
    const double z0 = s.height_at(px, py);
    for (double t = dt;; t += dt) {
        const double x = px + t * l.x, y = py + t * l.y, z = z0 + t * l.z;
        if (z > zmax) return false;
        if (x < 0 || y < 0 || x > s.width - 1 || y > s.height - 1) return false;
        const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
        const int x1 = std::min(x0 + 1, s.width - 1), y1 = std::min(y0 + 1, s.height - 1);
        const double fx = x - x0, fy = y - y0;
        const double h = (s.height_at(x0, y0) * (1 - fx) + s.height_at(x1, y0) * fx) * (1 - fy) +
                         (s.height_at(x0, y1) * (1 - fx) + s.height_at(x1, y1) * fx) * fy;
        if (h > z + 1e-4) return true;
    }
}

}  // namespace

TEST_CASE("flat Lambertian plane under head-on light shades to rho/pi") {
    Scene s = flat_plane(16, static_cast<float>(M_PI) * 0.5f);
    TensorF img = shade(s, Vec3{0, 0, 1}, {1, 1, 1}, Brdf::lambertian, RenderFlags{});
    for (std::int64_t i = 0; i < img.numel(); ++i)
        CHECK(img[i] == doctest::Approx(0.5f).epsilon(1e-5));
}

TEST_CASE("grazing light zeroes back-facing pixels") {
    Scene s = make_scene(SceneKind::sphere, SceneParams{}, 1);
    const Vec3 l = Vec3{1, 0, 0.05}.normalized();
    TensorF img = shade(s, l, {1, 1, 1}, Brdf::lambertian, RenderFlags{});
    const std::int64_t hw = static_cast<std::int64_t>(s.width) * s.height;
    int zeroed = 0;
    for (std::int64_t i = 0; i < hw; ++i) {
        const Vec3 n{s.normals[i], s.normals[hw + i], s.normals[2 * hw + i]};
        if (n.dot(l) <= 0) {
            CHECK(img[i] == 0.0f);
            zeroed++;
        }
    }
    CHECK(zeroed > 0);
}

TEST_CASE("bowl cast shadows match the ray-march oracle exactly") {
    SceneParams p;
    p.width = p.height = 48;
    Scene s = make_scene(SceneKind::bowl, p, 5);
    const Vec3 l = Vec3{0.8, 0.2, 0.45}.normalized();
    RenderFlags flags;
    flags.cast_shadows = true;
    TensorF with = shade(s, l, {1, 1, 1}, Brdf::lambertian, flags);
    TensorF without = shade(s, l, {1, 1, 1}, Brdf::lambertian, RenderFlags{});

    const std::int64_t hw = 48 * 48;
    int shadowed = 0;
    double zmax = s.height_px[0];
    for (double h : s.height_px) zmax = std::max(zmax, h);
    for (int y = 0; y < 48; ++y)
        for (int x = 0; x < 48; ++x) {
            const std::int64_t i = static_cast<std::int64_t>(y) * 48 + x;
            const Vec3 n{s.normals[i], s.normals[hw + i], s.normals[2 * hw + i]};
            const bool lit = n.dot(l) > 0;
            const bool oracle = lit && oracle_shadowed(s, x, y, l);
            const bool impl = lit && with[i] == 0.0f && without[i] > 0.0f;
            CHECK(impl == oracle);
            CHECK(shadow_ray_blocked(s, x, y, l, zmax) == oracle_shadowed(s, x, y, l));
            if (oracle) shadowed++;
        }
    CHECK(shadowed > 0);  // oblique light must shade part of the bowl
}

TEST_CASE("Lambertian shading is linear in intensity and albedo") {
    Scene s = make_scene(SceneKind::blob, SceneParams{}, 9);
    RenderFlags flags;
    flags.clip = false;
    const Vec3 l = Vec3{0.3, -0.2, 0.9}.normalized();
    TensorF base = shade(s, l, {0.25f, 0.25f, 0.25f}, Brdf::lambertian, flags);
    TensorF twice_e = shade(s, l, {0.5f, 0.5f, 0.5f}, Brdf::lambertian, flags);
    for (std::int64_t i = 0; i < base.numel(); ++i)
        CHECK(twice_e[i] == doctest::Approx(2.0f * base[i]).epsilon(1e-6));

    Scene s2 = s;
    for (auto& a : s2.albedo.data) a *= 2.0f;
    TensorF twice_rho = shade(s2, l, {0.25f, 0.25f, 0.25f}, Brdf::lambertian, flags);
    for (std::int64_t i = 0; i < base.numel(); ++i)
        CHECK(twice_rho[i] == doctest::Approx(2.0f * base[i]).epsilon(1e-6));
}

TEST_CASE("enabling cast shadows never brightens any pixel") {
    SceneParams p;
    p.width = p.height = 32;
    Scene s = make_scene(SceneKind::bowl, p, 2);
    const Vec3 l = Vec3{0.7, 0.1, 0.5}.normalized();
    TensorF off = shade(s, l, {1, 1, 1}, Brdf::lambertian, RenderFlags{});
    RenderFlags flags;
    flags.cast_shadows = true;
    TensorF on = shade(s, l, {1, 1, 1}, Brdf::lambertian, flags);
    for (std::int64_t i = 0; i < on.numel(); ++i) CHECK(on[i] <= off[i]);
}

TEST_CASE("scene normals are unit length inside the mask") {
    for (auto kind : {SceneKind::sphere, SceneKind::blob, SceneKind::bowl}) {
        Scene s = make_scene(kind, SceneParams{}, 77);
        const std::int64_t hw = static_cast<std::int64_t>(s.width) * s.height;
        for (std::int64_t i = 0; i < hw; ++i) {
            if (!s.mask[static_cast<std::size_t>(i)]) continue;
            const double n = Vec3{s.normals[i], s.normals[hw + i], s.normals[2 * hw + i]}.norm();
            CHECK(std::abs(n - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("sphere center normal is the view axis") {
    SceneParams p;
    p.width = p.height = 65;  // odd: center falls on a pixel
    Scene s = make_scene(SceneKind::sphere, p, 1);
    const std::int64_t hw = 65 * 65;
    const std::int64_t c = 32 * 65 + 32;
    CHECK(s.normals[c] == doctest::Approx(0.0f).epsilon(1e-6));
    CHECK(s.normals[hw + c] == doctest::Approx(0.0f).epsilon(1e-6));
    CHECK(s.normals[2 * hw + c] == doctest::Approx(1.0f).epsilon(1e-6));
}

TEST_CASE("same seed gives bit-identical scenes") {
    Scene a = make_scene(SceneKind::blob, SceneParams{}, 123);
    Scene b = make_scene(SceneKind::blob, SceneParams{}, 123);
    CHECK(a.height_px == b.height_px);
    CHECK(std::memcmp(a.normals.ptr(), b.normals.ptr(), a.normals.data.size() * 4) == 0);
    Scene c = make_scene(SceneKind::blob, SceneParams{}, 124);
    CHECK(a.height_px != c.height_px);
    SceneParams bad;
    bad.rim_radius = 5;
    bad.sphere_radius = 4;  // rim must stay inside the sphere
    CHECK_THROWS_AS(make_scene(SceneKind::sphere, bad, 1), ConfigError);
}

TEST_CASE("lambertian noiseless stack equals its diffuse twin") {
    Scene s = make_scene(SceneKind::blob, SceneParams{}, 31);
    LightSet ls = sample_lights(6, 42);
    RenderResult r = render_stack(s, ls, Brdf::lambertian, RenderFlags{}, true);
    REQUIRE(r.diffuse_twin.has_value());
    for (int j = 0; j < 6; ++j)
        CHECK(std::memcmp(r.stack.images[j].ptr(), r.diffuse_twin->images[j].ptr(),
                          r.stack.images[j].data.size() * 4) == 0);
}

TEST_CASE("blinn-phong never falls below the diffuse twin before clipping") {
    SceneParams p;
    p.rho_s = 0.4f;
    p.shininess = 24.0f;
    Scene s = make_scene(SceneKind::sphere, p, 8);
    LightSet ls = sample_lights(5, 7);
    RenderFlags flags;
    flags.clip = false;
    RenderResult r = render_stack(s, ls, Brdf::blinn_phong, flags, true);
    REQUIRE(r.diffuse_twin.has_value());
    for (int j = 0; j < 5; ++j)
        for (std::int64_t i = 0; i < r.stack.images[j].numel(); ++i)
            CHECK(r.stack.images[j][i] >= r.diffuse_twin->images[j][i] - 1e-6f);
}

TEST_CASE("sample_lights stays in the upper hemisphere, deterministic") {
    LightSet a = sample_lights(64, 5);
    LightSet b = sample_lights(64, 5);
    for (int j = 0; j < 64; ++j) {
        CHECK(a.directions[j].z > 0);
        CHECK(a.directions[j].norm() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(a.directions[j].x == b.directions[j].x);
    }
    CHECK_THROWS_AS(sample_lights(0, 1), ArityError);
}

TEST_CASE("sample_lights mean direction points up the view axis") {
    LightSet ls = sample_lights(10000, 11);
    Vec3 mean{};
    for (const auto& d : ls.directions) mean = mean + d;
    mean = mean * (1.0 / 10000.0);
    // Uniform on the hemisphere: E[x]=E[y]=0, E[z]=1/2; 1e4 samples put the
    // standard error near 0.005.
    CHECK(std::abs(mean.x) < 0.02);
    CHECK(std::abs(mean.y) < 0.02);
    CHECK(mean.z == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("polar cap restricts sampled lights") {
    LightSet ls = sample_lights(500, 3, 45.0);
    for (const auto& d : ls.directions) CHECK(d.z >= std::cos(45.0 * M_PI / 180.0) - 1e-9);
}
