#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ps/normal_map.hpp"

namespace ps {

struct GradientField {
    int width = 0, height = 0;
    std::vector<float> p;  // dz/dx
    std::vector<float> q;  // dz/dy
};

/// p = -nx/nz, q = -ny/nz with nz clamped to >= 1e-3 inside the mask;
/// zero outside. Total (clamping bounds silhouette blowup).
GradientField normals_to_gradients(const NormalMap& nm);

/// Least-squares depth from gradients by frequency-domain division
///   z^(u,v) = (-i u p^ - i v q^) / (u^2 + v^2),   DC = 0.
/// Gradient fields are mirror-extended (odd across their own axis, even
/// across the other) before the transform and cropped after, which removes
/// the periodic boundary artifacts. Output mean is zero.
std::vector<float> integrate_gradients(const GradientField& g);

struct MeshStats {
    std::int64_t vertices = 0;
    std::int64_t triangles = 0;
};

/// Grid triangulation over masked pixels, OBJ text, deterministic order:
/// one vertex per masked pixel (row-major), two triangles per fully masked
/// 2x2 quad. A mesh without quads has no faces.
MeshStats export_mesh_obj(const std::vector<float>& depth, const std::vector<std::uint8_t>& mask,
                          int width, int height, const std::string& path);

}  // namespace ps
