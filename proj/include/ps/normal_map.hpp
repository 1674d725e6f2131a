#pragma once

#include <cstdint>
#include <vector>

#include "ps/tensor.hpp"

namespace ps {

/// 3xHxW field of unit vectors with a validity mask. Outside the mask the
/// vectors are zero, which doubles as the implicit mask in files.
struct NormalMap {
    int width = 0, height = 0;
    TensorF n;  // [3,H,W]
    std::vector<std::uint8_t> mask;

    static NormalMap zeros(int w, int h) {
        NormalMap nm;
        nm.width = w;
        nm.height = h;
        nm.n = TensorF({3, h, w});
        nm.mask.assign(static_cast<std::size_t>(w) * h, 0);
        return nm;
    }

    std::int64_t pixels() const { return static_cast<std::int64_t>(width) * height; }

    // Zeroes vectors wherever the mask is off.
    void apply_mask() {
        const std::int64_t hw = pixels();
        for (std::int64_t i = 0; i < hw; ++i) {
            if (mask[static_cast<std::size_t>(i)]) continue;
            n[i] = n[hw + i] = n[2 * hw + i] = 0.0f;
        }
    }

    // Rebuilds the mask from nonzero vectors (used after loading files).
    void mask_from_vectors() {
        const std::int64_t hw = pixels();
        mask.assign(static_cast<std::size_t>(hw), 0);
        for (std::int64_t i = 0; i < hw; ++i)
            if (n[i] != 0.0f || n[hw + i] != 0.0f || n[2 * hw + i] != 0.0f)
                mask[static_cast<std::size_t>(i)] = 1;
    }
};

struct AlbedoMap {
    int width = 0, height = 0;
    std::vector<float> rho;  // H*W, luminance reflectance magnitude
};

}  // namespace ps
