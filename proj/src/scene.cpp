#include "ps/scene.hpp"

#include <cmath>

#include "ps/errors.hpp"
#include "ps/rng.hpp"

namespace ps {

namespace {

Scene blank_scene(const SceneParams& p) {
    if (p.width < 8 || p.height < 8) throw ConfigError("scene: extent must be at least 8");
    Scene s;
    s.width = p.width;
    s.height = p.height;
    const std::size_t hw = static_cast<std::size_t>(p.width) * p.height;
    s.height_px.assign(hw, 0.0);
    s.albedo = TensorF({3, p.height, p.width});
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < hw; ++i) s.albedo[c * static_cast<std::int64_t>(hw) + i] = p.albedo[static_cast<std::size_t>(c)];
    s.rho_s.assign(hw, p.rho_s);
    s.shininess.assign(hw, p.shininess);
    s.mask.assign(hw, 1);
    s.normals = TensorF({3, p.height, p.width});
    return s;
}

// n = normalize(-dz/dx, -dz/dy, 1)
void normals_from_gradient(Scene& s, const std::vector<double>& zx,
                           const std::vector<double>& zy) {
    const std::int64_t hw = static_cast<std::int64_t>(s.width) * s.height;
    for (std::int64_t i = 0; i < hw; ++i) {
        const double nx = -zx[static_cast<std::size_t>(i)];
        const double ny = -zy[static_cast<std::size_t>(i)];
        const double inv = 1.0 / std::sqrt(nx * nx + ny * ny + 1.0);
        s.normals[i] = static_cast<float>(nx * inv);
        s.normals[hw + i] = static_cast<float>(ny * inv);
        s.normals[2 * hw + i] = static_cast<float>(inv);
    }
}

}  // namespace

SceneKind scene_kind_from_string(const std::string& s) {
    if (s == "sphere") return SceneKind::sphere;
    if (s == "blob") return SceneKind::blob;
    if (s == "bowl") return SceneKind::bowl;
    throw ConfigError("unknown scene kind: " + s);
}

Scene make_scene(SceneKind kind, const SceneParams& params, std::uint64_t seed) {
    Scene s = blank_scene(params);
    const int W = s.width, H = s.height;
    const double cx = (W - 1) / 2.0, cy = (H - 1) / 2.0;
    const double side = std::min(W, H);
    const std::size_t hw = static_cast<std::size_t>(W) * H;
    std::vector<double> zx(hw, 0.0), zy(hw, 0.0);
    Rng rng(seed);

    switch (kind) {
        case SceneKind::sphere: {
            const double rim = params.rim_radius > 0 ? params.rim_radius : 0.38 * side;
            const double R = params.sphere_radius > 0 ? params.sphere_radius : rim / 0.8;
            if (rim <= 0 || R <= rim)
                throw ConfigError("sphere scene: need 0 < rim_radius < sphere_radius");
            const double z0 = std::sqrt(R * R - rim * rim);
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const double d2 = dx * dx + dy * dy;
                    if (d2 >= rim * rim) continue;
                    const double sq = std::sqrt(R * R - d2);
                    const std::size_t i = static_cast<std::size_t>(y) * W + x;
                    s.height_px[i] = sq - z0;
                    zx[i] = -dx / sq;
                    zy[i] = -dy / sq;
                }
            }
            break;
        }
        case SceneKind::blob: {
            if (params.blob_count < 1) throw ConfigError("blob scene: blob count must be >= 1");
            const double smin =
                params.blob_sigma_min > 0 ? params.blob_sigma_min : 0.10 * side;
            const double smax =
                params.blob_sigma_max > 0 ? params.blob_sigma_max : 0.20 * side;
            for (int b = 0; b < params.blob_count; ++b) {
                const double bx = rng.uniform(0.15 * W, 0.85 * W);
                const double by = rng.uniform(0.15 * H, 0.85 * H);
                const double amp = rng.uniform(params.blob_amp_min, params.blob_amp_max);
                const double sigma = rng.uniform(smin, smax);
                if (sigma <= 0) throw ConfigError("blob scene: sigma must be positive");
                const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
                for (int y = 0; y < H; ++y) {
                    for (int x = 0; x < W; ++x) {
                        const double dx = x - bx, dy = y - by;
                        const double g = amp * std::exp(-(dx * dx + dy * dy) * inv2s2);
                        const std::size_t i = static_cast<std::size_t>(y) * W + x;
                        s.height_px[i] += g;
                        zx[i] += g * (-dx / (sigma * sigma));
                        zy[i] += g * (-dy / (sigma * sigma));
                    }
                }
            }
            break;
        }
        case SceneKind::bowl: {
            const double r = params.bowl_radius > 0 ? params.bowl_radius : 0.42 * side;
            const double depth = params.bowl_depth > 0 ? params.bowl_depth : 0.5 * r;
            if (r <= 0 || depth <= 0) throw ConfigError("bowl scene: radius/depth must be > 0");
            for (int y = 0; y < H; ++y) {
                for (int x = 0; x < W; ++x) {
                    const double dx = x - cx, dy = y - cy;
                    const double d2 = dx * dx + dy * dy;
                    if (d2 >= r * r) continue;
                    const std::size_t i = static_cast<std::size_t>(y) * W + x;
                    s.height_px[i] = -depth * (1.0 - d2 / (r * r));
                    zx[i] = 2.0 * depth * dx / (r * r);
                    zy[i] = 2.0 * depth * dy / (r * r);
                }
            }
            break;
        }
    }
    normals_from_gradient(s, zx, zy);
    return s;
}

Scene scene_from_heightfield(int width, int height, std::vector<double> z,
                             const SceneParams& material) {
    SceneParams p = material;
    p.width = width;
    p.height = height;
    Scene s = blank_scene(p);
    if (static_cast<std::size_t>(width) * height != z.size())
        throw DimensionError("scene_from_heightfield: heightfield size mismatch");
    s.height_px = std::move(z);
    const std::size_t hw = static_cast<std::size_t>(width) * height;
    std::vector<double> zx(hw), zy(hw);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            const int x0 = std::max(0, x - 1), x1 = std::min(width - 1, x + 1);
            const int y0 = std::max(0, y - 1), y1 = std::min(height - 1, y + 1);
            zx[i] = (s.height_at(x1, y) - s.height_at(x0, y)) / (x1 - x0);
            zy[i] = (s.height_at(x, y1) - s.height_at(x, y0)) / (y1 - y0);
        }
    }
    normals_from_gradient(s, zx, zy);
    return s;
}

}  // namespace ps
