#include "ps/lights.hpp"

#include <cmath>
#include <string>

#include "ps/errors.hpp"
#include "ps/rng.hpp"

namespace ps {

void LightSet::validate() const {
    if (directions.size() != intensities.size())
        throw DataError("light set: direction/intensity count mismatch");
    for (std::size_t i = 0; i < directions.size(); ++i) {
        const double n = directions[i].norm();
        if (std::abs(n - 1.0) > 1e-3)
            throw DataError("light " + std::to_string(i) + ": non-unit direction (norm " +
                            std::to_string(n) + ")");
        if (directions[i].z <= 0)
            throw DataError("light " + std::to_string(i) + ": direction below the horizon");
        for (float e : intensities[i])
            if (!(e > 0))
                throw DataError("light " + std::to_string(i) + ": non-positive intensity");
    }
}

LightSet sample_lights(int count, std::uint64_t seed, double max_polar_deg) {
    if (count < 1) throw ArityError("sample_lights: need at least one light");
    if (max_polar_deg <= 0 || max_polar_deg > 90)
        throw ConfigError("sample_lights: polar cap must be in (0, 90] degrees");
    Rng rng(seed);
    const double zmin = std::cos(max_polar_deg * M_PI / 180.0);
    LightSet ls;
    ls.directions.reserve(static_cast<std::size_t>(count));
    for (int j = 0; j < count; ++j) {
        // Uniform area on the cap: z uniform in [zmin, 1), azimuth uniform.
        double z = rng.uniform(zmin, 1.0);
        if (z <= 0) z = 1e-6;
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double a = rng.uniform(0.0, 2.0 * M_PI);
        ls.directions.push_back(Vec3{r * std::cos(a), r * std::sin(a), z});
        ls.intensities.push_back({1.0f, 1.0f, 1.0f});
    }
    return ls;
}

}  // namespace ps
