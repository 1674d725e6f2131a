#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ps/lights.hpp"
#include "ps/normal_map.hpp"
#include "ps/scene.hpp"

namespace ps {

/// J registered linear images plus calibration and mask. In memory the
/// images are intensity-normalized (divided per channel by the light
/// intensity), so values may exceed 1; files store the raw clipped range.
struct ObservationStack {
    int width = 0, height = 0;
    std::vector<TensorF> images;  // each [3,H,W]
    LightSet lights;
    std::vector<std::uint8_t> mask;

    int count() const { return static_cast<int>(images.size()); }
};

enum class Brdf { lambertian, blinn_phong };

struct RenderFlags {
    bool cast_shadows = false;
    double noise_sigma = 0.0;
    std::uint64_t noise_seed = 1;
    bool clip = true;
};

/// One observation under a single light: per channel
///   e * (rho_d/pi + rho_s * (n.h)^alpha) * max(n.l, 0)
/// times the cast-shadow indicator, plus Gaussian noise, clipped to [0,1].
/// The specular term is present only for blinn_phong.
TensorF shade(const Scene& scene, const Vec3& light_dir, const std::array<float, 3>& intensity,
              Brdf brdf, const RenderFlags& flags);

/// Heightfield shadow test: marches from the pixel toward the light in
/// 0.5 px horizontal steps with bilinear height lookups.
bool shadow_ray_blocked(const Scene& scene, int px, int py, const Vec3& light_dir,
                        double height_max);

struct RenderResult {
    ObservationStack stack;
    NormalMap gt;
    std::optional<ObservationStack> diffuse_twin;  // ideal Lambertian component
};

RenderResult render_stack(const Scene& scene, const LightSet& lights, Brdf brdf,
                          const RenderFlags& flags, bool emit_diffuse_twin = false);

}  // namespace ps
