#pragma once

#include <cstdint>
#include <vector>

#include "ps/normal_map.hpp"
#include "ps/render.hpp"

namespace ps {

struct PriorResult {
    NormalMap normals;
    AlbedoMap albedo;
    std::vector<std::uint8_t> low_signal;  // pixels that fell back to (0,0,1)
    double condition_number = 0.0;
    std::int64_t flagged = 0;
};

/// Least-squares pseudo-inverse of the J x 3 light matrix, as a row-major
/// 3 x J matrix in 64-bit. pinv(L) * L = I within 1e-10 for rank-3 inputs.
std::vector<double> pseudo_inverse(const std::vector<Vec3>& lights);

/// Condition number of the light matrix (singular value ratio).
double light_condition_number(const std::vector<Vec3>& lights);

/// Closed-form Lambertian photometric stereo on luminance observations:
/// per masked pixel m = pinv(L) * i, normal = m/|m|, albedo = |m|.
/// Solutions with negative z are flipped toward the camera; magnitudes
/// below 1e-8 fall back to (0,0,1) and are flagged. Always 64-bit.
PriorResult solve_prior(const ObservationStack& stack);

}  // namespace ps
