#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "ps/normal_map.hpp"

namespace ps {

/// Per-pixel angular error in degrees over the intersection of both masks.
/// Ground-truth zero vectors are dropped from the mask automatically.
struct ErrorMap {
    int width = 0, height = 0;
    std::vector<float> deg;            // H*W, valid where mask is set
    std::vector<std::uint8_t> mask;
};

ErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt);

/// Arithmetic mean of the error map over its mask.
double mae(const ErrorMap& err);

/// Percentage of masked pixels with error strictly below the threshold.
double err_fraction(const ErrorMap& err, double threshold_deg);

/// Linear three-stop colormap for error visualization:
/// 0 -> black, 1/2 -> red, 1 -> yellow; inputs clamp to [0,1].
std::array<std::uint8_t, 3> error_color(double t);

/// Error map as an 8-bit PNG; values scale linearly over [0, scale_deg].
/// Pixels outside the mask render black. Deterministic bytes.
void render_error_png(const ErrorMap& err, double scale_deg, const std::string& path);

}  // namespace ps
