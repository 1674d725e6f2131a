#pragma once

#include <map>
#include <optional>
#include <string>

#include "ps/normal_map.hpp"
#include "ps/render.hpp"

namespace ps {

// ---- float normal-map raster (.fmap) --------------------------------------
// Text header ("FMAP", width height, scale -1.0 marking little-endian), then
// 3*H*W float32 values channel-planar row-major. Lossless round trip.

void write_normalmap(const NormalMap& nm, const std::string& path);
NormalMap read_normalmap(const std::string& path);

// ---- dataset directory -----------------------------------------------------
// 001.png..NNN.png, light_directions.txt, light_intensities.txt, mask.png,
// optional normal.txt. Images index-aligned with the light files.

struct DatasetReadOptions {
    bool srgb_decode_8bit = true;  // 16-bit files are always treated as linear
    bool flip_y = false;           // negate the y channel of normal.txt
};

ObservationStack read_dataset(const std::string& dir, std::optional<NormalMap>* gt_out = nullptr,
                              const DatasetReadOptions& opts = {});

/// Writes the stack (re-multiplied by its light intensities, clamped to
/// [0,1], 16-bit) plus calibration files and optional ground truth.
void write_dataset(const std::string& dir, const ObservationStack& stack,
                   const NormalMap* gt = nullptr);

/// Row-major "nx ny nz" per pixel; dimensions must be supplied.
NormalMap read_normal_txt(const std::string& path, int width, int height, bool flip_y = false);
void write_normal_txt(const NormalMap& nm, const std::string& path);

// ---- PFM (grayscale, little-endian, bottom-up rows) ------------------------

void write_pfm(const std::string& path, const std::vector<float>& values, int width, int height);
std::vector<float> read_pfm(const std::string& path, int* width, int* height);

// ---- key=value config files -------------------------------------------------

std::map<std::string, std::string> read_kv_file(const std::string& path);
std::map<std::string, std::string> parse_kv_text(const std::string& text);

}  // namespace ps
