#include "ps/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ps/errors.hpp"
#include "ps/image_io.hpp"

namespace ps {

ErrorMap angular_error_map(const NormalMap& pred, const NormalMap& gt) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw DimensionError("angular_error_map: prediction vs ground truth size");
    const std::int64_t hw = pred.pixels();
    ErrorMap out;
    out.width = pred.width;
    out.height = pred.height;
    out.deg.assign(static_cast<std::size_t>(hw), 0.0f);
    out.mask.assign(static_cast<std::size_t>(hw), 0);
    constexpr double rad2deg = 180.0 / M_PI;
    for (std::int64_t i = 0; i < hw; ++i) {
        if (!pred.mask[static_cast<std::size_t>(i)] || !gt.mask[static_cast<std::size_t>(i)])
            continue;
        const double gx = gt.n[i], gy = gt.n[hw + i], gz = gt.n[2 * hw + i];
        if (gx == 0.0 && gy == 0.0 && gz == 0.0) continue;  // no ground truth here
        const double dot = static_cast<double>(pred.n[i]) * gx +
                           static_cast<double>(pred.n[hw + i]) * gy +
                           static_cast<double>(pred.n[2 * hw + i]) * gz;
        out.deg[static_cast<std::size_t>(i)] =
            static_cast<float>(std::acos(std::clamp(dot, -1.0, 1.0)) * rad2deg);
        out.mask[static_cast<std::size_t>(i)] = 1;
    }
    return out;
}

double mae(const ErrorMap& err) {
    double sum = 0.0;
    std::int64_t count = 0;
    for (std::size_t i = 0; i < err.deg.size(); ++i) {
        if (!err.mask[i]) continue;
        sum += err.deg[i];
        count++;
    }
    if (count == 0) throw EvalError("mae: empty mask");
    return sum / static_cast<double>(count);
}

double err_fraction(const ErrorMap& err, double threshold_deg) {
    std::int64_t below = 0, count = 0;
    for (std::size_t i = 0; i < err.deg.size(); ++i) {
        if (!err.mask[i]) continue;
        count++;
        if (err.deg[i] < threshold_deg) below++;
    }
    if (count == 0) throw EvalError("err_fraction: empty mask");
    return 100.0 * static_cast<double>(below) / static_cast<double>(count);
}

std::array<std::uint8_t, 3> error_color(double t) {
    t = std::clamp(t, 0.0, 1.0);
    auto lerp = [](double a, double b, double f) {
        return static_cast<std::uint8_t>(std::lround(a + (b - a) * f));
    };
    if (t <= 0.5) {
        const double f = t / 0.5;  // black -> red
        return {lerp(0, 255, f), 0, 0};
    }
    const double f = (t - 0.5) / 0.5;  // red -> yellow
    return {255, lerp(0, 255, f), 0};
}

void render_error_png(const ErrorMap& err, double scale_deg, const std::string& path) {
    if (scale_deg <= 0) throw ConfigError("render_error_png: scale must be positive");
    const std::int64_t hw = static_cast<std::int64_t>(err.width) * err.height;
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(hw) * 3, 0);
    for (std::int64_t i = 0; i < hw; ++i) {
        if (!err.mask[static_cast<std::size_t>(i)]) continue;
        const auto c = error_color(err.deg[static_cast<std::size_t>(i)] / scale_deg);
        rgb[static_cast<std::size_t>(i) * 3 + 0] = c[0];
        rgb[static_cast<std::size_t>(i) * 3 + 1] = c[1];
        rgb[static_cast<std::size_t>(i) * 3 + 2] = c[2];
    }
    write_png_rgb8(path, rgb, err.width, err.height);
}

}  // namespace ps
