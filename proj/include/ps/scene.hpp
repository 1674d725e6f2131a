#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ps/tensor.hpp"

namespace ps {

enum class SceneKind { sphere, blob, bowl };

SceneKind scene_kind_from_string(const std::string& s);

struct SceneParams {
    int width = 64, height = 64;

    // sphere: cap of a sphere of curvature radius sphere_radius whose rim
    // sits at rim_radius (< sphere_radius, which bounds the rim slope).
    double rim_radius = 0;     // 0 -> 0.38 * min(W,H)
    double sphere_radius = 0;  // 0 -> rim_radius / 0.8

    // blob: sum of random Gaussian bumps.
    int blob_count = 6;
    double blob_amp_min = 2.0, blob_amp_max = 7.0;
    double blob_sigma_min = 0, blob_sigma_max = 0;  // 0 -> [0.10, 0.20] * min(W,H)

    // bowl: concave paraboloid depression (casts shadows under oblique light).
    double bowl_radius = 0;  // 0 -> 0.42 * min(W,H)
    double bowl_depth = 0;   // 0 -> 0.5 * bowl_radius

    // material (uniform; per-pixel fields live on the Scene)
    std::array<float, 3> albedo = {0.8f, 0.7f, 0.6f};
    float rho_s = 0.0f;
    float shininess = 32.0f;
};

/// Orthographic heightfield scene, view fixed at (0,0,1). Frame: x right,
/// y down (row index), z toward the camera; heights in pixel units.
struct Scene {
    int width = 0, height = 0;
    std::vector<double> height_px;  // H*W
    TensorF albedo;                 // [3,H,W] diffuse rho_d
    std::vector<float> rho_s;       // H*W
    std::vector<float> shininess;   // H*W
    std::vector<std::uint8_t> mask; // H*W
    TensorF normals;                // [3,H,W] unit inside mask

    double height_at(int x, int y) const {
        return height_px[static_cast<std::size_t>(y) * width + x];
    }
};

/// Parametric scene with analytic normals; deterministic per seed.
Scene make_scene(SceneKind kind, const SceneParams& params, std::uint64_t seed);

/// Wraps an arbitrary heightfield; normals by central differences
/// (one-sided at the borders).
Scene scene_from_heightfield(int width, int height, std::vector<double> z,
                             const SceneParams& material);

}  // namespace ps
