#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ps/vec3.hpp"

namespace ps {

/// Calibrated illumination: unit directions (positive z, toward the camera
/// hemisphere) with per-channel intensities.
struct LightSet {
    std::vector<Vec3> directions;
    std::vector<std::array<float, 3>> intensities;

    int count() const { return static_cast<int>(directions.size()); }
    void validate() const;  // unit-norm within 1e-3 and z > 0
};

/// J directions uniform on the upper hemisphere, optionally restricted to a
/// polar cap of max_polar_deg around the view axis. Deterministic per seed.
LightSet sample_lights(int count, std::uint64_t seed, double max_polar_deg = 90.0);

}  // namespace ps
