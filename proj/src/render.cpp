#include "ps/render.hpp"

#include <algorithm>
#include <cmath>

#include "ps/errors.hpp"
#include "ps/rng.hpp"

namespace ps {

namespace {

double bilinear_height(const Scene& s, double x, double y) {
    const int x0 = static_cast<int>(std::floor(x));
    const int y0 = static_cast<int>(std::floor(y));
    const int x1 = std::min(x0 + 1, s.width - 1);
    const int y1 = std::min(y0 + 1, s.height - 1);
    const double fx = x - x0, fy = y - y0;
    const double h00 = s.height_at(x0, y0), h10 = s.height_at(x1, y0);
    const double h01 = s.height_at(x0, y1), h11 = s.height_at(x1, y1);
    return (h00 * (1 - fx) + h10 * fx) * (1 - fy) + (h01 * (1 - fx) + h11 * fx) * fy;
}

constexpr double kShadowBias = 1e-4;

}  // namespace

bool shadow_ray_blocked(const Scene& scene, int px, int py, const Vec3& l, double height_max) {
    const double lxy = std::hypot(l.x, l.y);
    if (lxy < 1e-9) return false;  // light along the view axis cannot be occluded
    const double step = 0.5 / lxy;
    const double z0 = scene.height_at(px, py);
    for (double t = step;; t += step) {
        const double x = px + t * l.x;
        const double y = py + t * l.y;
        const double z = z0 + t * l.z;
        if (z > height_max) return false;
        if (x < 0 || y < 0 || x > scene.width - 1 || y > scene.height - 1) return false;
        if (bilinear_height(scene, x, y) > z + kShadowBias) return true;
    }
}

TensorF shade(const Scene& scene, const Vec3& light_dir, const std::array<float, 3>& intensity,
              Brdf brdf, const RenderFlags& flags) {
    if (std::abs(light_dir.norm() - 1.0) > 1e-3 || light_dir.z <= 0)
        throw DataError("shade: light direction must be unit with z > 0");
    const int W = scene.width, H = scene.height;
    const std::int64_t hw = static_cast<std::int64_t>(W) * H;
    TensorF img({3, H, W});

    const Vec3 view{0, 0, 1};
    const Vec3 half = (light_dir + view).normalized();
    const double height_max = *std::max_element(scene.height_px.begin(), scene.height_px.end());

    Rng noise(flags.noise_seed);
    const bool add_noise = flags.noise_sigma > 0;

    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const std::int64_t i = static_cast<std::int64_t>(y) * W + x;
            if (!scene.mask[static_cast<std::size_t>(i)]) continue;
            const Vec3 n{scene.normals[i], scene.normals[hw + i], scene.normals[2 * hw + i]};
            double ndotl = n.dot(light_dir);
            if (ndotl < 0) ndotl = 0;
            double visible = 1.0;
            if (flags.cast_shadows && ndotl > 0 &&
                shadow_ray_blocked(scene, x, y, light_dir, height_max))
                visible = 0.0;
            double spec = 0.0;
            if (brdf == Brdf::blinn_phong) {
                const double ndoth = std::max(0.0, n.dot(half));
                spec = scene.rho_s[static_cast<std::size_t>(i)] *
                       std::pow(ndoth, static_cast<double>(scene.shininess[static_cast<std::size_t>(i)]));
            }
            for (int c = 0; c < 3; ++c) {
                const double rho_d = scene.albedo[c * hw + i];
                double v = intensity[static_cast<std::size_t>(c)] *
                           (rho_d / M_PI + spec) * ndotl * visible;
                if (add_noise) v += noise.normal(0.0, flags.noise_sigma);
                if (flags.clip) v = std::clamp(v, 0.0, 1.0);
                img[c * hw + i] = static_cast<float>(v);
            }
        }
    }
    return img;
}

RenderResult render_stack(const Scene& scene, const LightSet& lights, Brdf brdf,
                          const RenderFlags& flags, bool emit_diffuse_twin) {
    if (lights.count() < 1) throw ArityError("render_stack: need at least one light");
    lights.validate();

    RenderResult out;
    out.stack.width = scene.width;
    out.stack.height = scene.height;
    out.stack.lights = lights;
    out.stack.mask = scene.mask;

    // Independent noise stream per light.
    Rng seeder(flags.noise_seed);
    std::vector<std::uint64_t> seeds;
    for (int j = 0; j < lights.count(); ++j) seeds.push_back(seeder.next_u64());

    const std::int64_t hw = static_cast<std::int64_t>(scene.width) * scene.height;
    auto normalize_intensity = [hw](TensorF& img, const std::array<float, 3>& e) {
        for (int c = 0; c < 3; ++c) {
            if (e[static_cast<std::size_t>(c)] == 1.0f) continue;
            float* row = img.ptr() + c * hw;
            for (std::int64_t i = 0; i < hw; ++i) row[i] /= e[static_cast<std::size_t>(c)];
        }
    };

    for (int j = 0; j < lights.count(); ++j) {
        RenderFlags f = flags;
        f.noise_seed = seeds[static_cast<std::size_t>(j)];
        TensorF img = shade(scene, lights.directions[static_cast<std::size_t>(j)],
                            lights.intensities[static_cast<std::size_t>(j)], brdf, f);
        normalize_intensity(img, lights.intensities[static_cast<std::size_t>(j)]);
        out.stack.images.push_back(std::move(img));
    }

    out.gt.width = scene.width;
    out.gt.height = scene.height;
    out.gt.n = scene.normals;
    out.gt.mask = scene.mask;
    out.gt.apply_mask();

    if (emit_diffuse_twin) {
        ObservationStack twin;
        twin.width = scene.width;
        twin.height = scene.height;
        twin.lights = lights;
        twin.mask = scene.mask;
        RenderFlags f;
        f.cast_shadows = false;
        f.noise_sigma = 0.0;
        f.clip = flags.clip;
        for (int j = 0; j < lights.count(); ++j) {
            TensorF img = shade(scene, lights.directions[static_cast<std::size_t>(j)],
                                lights.intensities[static_cast<std::size_t>(j)],
                                Brdf::lambertian, f);
            normalize_intensity(img, lights.intensities[static_cast<std::size_t>(j)]);
            twin.images.push_back(std::move(img));
        }
        out.diffuse_twin = std::move(twin);
    }
    return out;
}

}  // namespace ps
