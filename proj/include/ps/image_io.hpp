#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ps/normal_map.hpp"
#include "ps/tensor.hpp"

namespace ps {

double srgb_to_linear(double s);
double linear_to_srgb(double l);

/// PNG to linear float [3,H,W] in [0,1]. 8-bit inputs are sRGB-decoded when
/// srgb_decode_8bit is set; 16-bit inputs are treated as already linear.
TensorF read_png_linear(const std::string& path, bool srgb_decode_8bit = true,
                        int* bit_depth = nullptr);

/// Linear floats to a 16-bit RGB PNG (values clamped to [0,1], rounded).
void write_png_rgb16(const std::string& path, const TensorF& img);

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& rgb, int width,
                    int height);

/// Grayscale mask; a pixel is inside when its first channel is >= 128.
std::vector<std::uint8_t> read_mask_png(const std::string& path, int* width, int* height);
void write_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width,
                    int height);

/// 8-bit visualization with the (n+1)/2 mapping, round half up;
/// (0,0,1) -> (128,128,255), the zero vector -> (128,128,128).
void write_normal_png(const std::string& path, const NormalMap& nm);

}  // namespace ps
