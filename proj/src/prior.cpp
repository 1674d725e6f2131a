#include "ps/prior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "ps/errors.hpp"

namespace ps {

namespace {

// Eigenvalues of a symmetric 3x3 matrix by cyclic Jacobi rotations.
void symmetric_eigenvalues(double a[3][3], double out[3]) {
    for (int sweep = 0; sweep < 64; ++sweep) {
        const double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
        if (off < 1e-300) break;
        const double scale = std::abs(a[0][0]) + std::abs(a[1][1]) + std::abs(a[2][2]) + off;
        if (off <= 1e-15 * scale) break;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (a[p][q] == 0.0) continue;
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    out[0] = a[0][0];
    out[1] = a[1][1];
    out[2] = a[2][2];
    std::sort(out, out + 3, std::greater<double>());
}

void gram_matrix(const std::vector<Vec3>& lights, double m[3][3]) {
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m[r][c] = 0.0;
    for (const Vec3& l : lights) {
        const double v[3] = {l.x, l.y, l.z};
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m[r][c] += v[r] * v[c];
    }
}

// Indices sorted by direction so the solve does not depend on input order.
std::vector<int> canonical_order(const std::vector<Vec3>& dirs) {
    std::vector<int> idx(dirs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        const Vec3 &u = dirs[static_cast<std::size_t>(a)], &v = dirs[static_cast<std::size_t>(b)];
        if (u.x != v.x) return u.x < v.x;
        if (u.y != v.y) return u.y < v.y;
        return u.z < v.z;
    });
    return idx;
}

}  // namespace

double light_condition_number(const std::vector<Vec3>& lights) {
    double m[3][3];
    gram_matrix(lights, m);
    double ev[3];
    symmetric_eigenvalues(m, ev);
    if (ev[2] <= 0) return std::numeric_limits<double>::infinity();
    return std::sqrt(ev[0] / ev[2]);
}

std::vector<double> pseudo_inverse(const std::vector<Vec3>& lights) {
    if (lights.size() < 3) throw ArityError("pseudo_inverse: need at least 3 lights");
    double m[3][3];
    gram_matrix(lights, m);

    const double cond = light_condition_number(lights);
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if (!(std::isfinite(cond)) || cond > 1e8 || det <= 0)
        throw DegenerateLightingError(
            "light matrix is rank deficient (condition number " + std::to_string(cond) + ")");

    // Adjugate inverse of the 3x3 Gram matrix.
    double inv[3][3];
    inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
    inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
    inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
    inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
    inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
    inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
    inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
    inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
    inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;

    // pinv = (L^T L)^-1 L^T, row-major 3 x J.
    std::vector<double> pinv(3 * lights.size());
    for (std::size_t j = 0; j < lights.size(); ++j) {
        const double v[3] = {lights[j].x, lights[j].y, lights[j].z};
        for (int r = 0; r < 3; ++r)
            pinv[static_cast<std::size_t>(r) * lights.size() + j] =
                inv[r][0] * v[0] + inv[r][1] * v[1] + inv[r][2] * v[2];
    }
    return pinv;
}

PriorResult solve_prior(const ObservationStack& stack) {
    const int J = stack.count();
    if (J < 3) throw ArityError("solve_prior: need at least 3 observations, got " +
                                std::to_string(J));
    const int W = stack.width, H = stack.height;
    const std::int64_t hw = static_cast<std::int64_t>(W) * H;

    const std::vector<int> order = canonical_order(stack.lights.directions);
    std::vector<Vec3> dirs;
    dirs.reserve(static_cast<std::size_t>(J));
    for (int j : order) dirs.push_back(stack.lights.directions[static_cast<std::size_t>(j)]);

    PriorResult out;
    out.condition_number = light_condition_number(dirs);
    const std::vector<double> pinv = pseudo_inverse(dirs);

    // Accumulate m = pinv * luminance image-by-image for cache locality.
    std::vector<double> m0(static_cast<std::size_t>(hw), 0.0);
    std::vector<double> m1(static_cast<std::size_t>(hw), 0.0);
    std::vector<double> m2(static_cast<std::size_t>(hw), 0.0);
    for (int jj = 0; jj < J; ++jj) {
        const TensorF& img = stack.images[static_cast<std::size_t>(order[jj])];
        const float* r = img.ptr();
        const float* g = img.ptr() + hw;
        const float* b = img.ptr() + 2 * hw;
        const double p0 = pinv[static_cast<std::size_t>(jj)];
        const double p1 = pinv[static_cast<std::size_t>(J + jj)];
        const double p2 = pinv[static_cast<std::size_t>(2 * J + jj)];
        for (std::int64_t i = 0; i < hw; ++i) {
            const double lum =
                (static_cast<double>(r[i]) + static_cast<double>(g[i]) + static_cast<double>(b[i])) / 3.0;
            m0[static_cast<std::size_t>(i)] += p0 * lum;
            m1[static_cast<std::size_t>(i)] += p1 * lum;
            m2[static_cast<std::size_t>(i)] += p2 * lum;
        }
    }

    out.normals = NormalMap::zeros(W, H);
    out.normals.mask = stack.mask;
    out.albedo.width = W;
    out.albedo.height = H;
    out.albedo.rho.assign(static_cast<std::size_t>(hw), 0.0f);
    out.low_signal.assign(static_cast<std::size_t>(hw), 0);

    for (std::int64_t i = 0; i < hw; ++i) {
        if (!stack.mask[static_cast<std::size_t>(i)]) continue;
        double x = m0[static_cast<std::size_t>(i)];
        double y = m1[static_cast<std::size_t>(i)];
        double z = m2[static_cast<std::size_t>(i)];
        const double mag = std::sqrt(x * x + y * y + z * z);
        out.albedo.rho[static_cast<std::size_t>(i)] = static_cast<float>(mag);
        if (mag < 1e-8) {
            out.normals.n[2 * hw + i] = 1.0f;  // fallback, flagged
            out.low_signal[static_cast<std::size_t>(i)] = 1;
            out.flagged++;
            continue;
        }
        x /= mag;
        y /= mag;
        z /= mag;
        if (z < 0) {  // the camera only sees the upper hemisphere
            x = -x;
            y = -y;
            z = -z;
        }
        out.normals.n[i] = static_cast<float>(x);
        out.normals.n[hw + i] = static_cast<float>(y);
        out.normals.n[2 * hw + i] = static_cast<float>(z);
    }
    return out;
}

}  // namespace ps
