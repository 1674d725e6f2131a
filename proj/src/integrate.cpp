#include "ps/integrate.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>

#include "ps/errors.hpp"

namespace ps {

namespace {

constexpr double kMinNz = 1e-3;

// FFTW plan creation is not thread safe.
std::mutex g_fftw_mutex;

struct FftwBuf {
    fftw_complex* data = nullptr;
    explicit FftwBuf(std::size_t n) {
        data = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!data) throw NumericError("fftw allocation failed");
    }
    ~FftwBuf() { fftw_free(data); }
};

}  // namespace

GradientField normals_to_gradients(const NormalMap& nm) {
    GradientField g;
    g.width = nm.width;
    g.height = nm.height;
    const std::int64_t hw = nm.pixels();
    g.p.assign(static_cast<std::size_t>(hw), 0.0f);
    g.q.assign(static_cast<std::size_t>(hw), 0.0f);
    for (std::int64_t i = 0; i < hw; ++i) {
        if (!nm.mask[static_cast<std::size_t>(i)]) continue;
        const double nx = nm.n[i], ny = nm.n[hw + i];
        const double nz = std::max(static_cast<double>(nm.n[2 * hw + i]), kMinNz);
        g.p[static_cast<std::size_t>(i)] = static_cast<float>(-nx / nz);
        g.q[static_cast<std::size_t>(i)] = static_cast<float>(-ny / nz);
    }
    return g;
}

std::vector<float> integrate_gradients(const GradientField& g) {
    const int W = g.width, H = g.height;
    if (W < 1 || H < 1 || g.p.size() != static_cast<std::size_t>(W) * H ||
        g.q.size() != g.p.size())
        throw DimensionError("integrate_gradients: inconsistent field sizes");
    const int N = 2 * W, M = 2 * H;  // mirror-extended extents
    const std::size_t mn = static_cast<std::size_t>(M) * N;

    FftwBuf P(mn), Q(mn), Z(mn);
    // p is odd across the x mirror and even across y; q the other way round.
    for (int r = 0; r < M; ++r) {
        const int rr = r < H ? r : 2 * H - 1 - r;
        const double sy = r < H ? 1.0 : -1.0;
        for (int c = 0; c < N; ++c) {
            const int cc = c < W ? c : 2 * W - 1 - c;
            const double sx = c < W ? 1.0 : -1.0;
            const std::size_t src = static_cast<std::size_t>(rr) * W + cc;
            const std::size_t dst = static_cast<std::size_t>(r) * N + c;
            P.data[dst][0] = sx * g.p[src];
            P.data[dst][1] = 0.0;
            Q.data[dst][0] = sy * g.q[src];
            Q.data[dst][1] = 0.0;
        }
    }

    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_plan fp = fftw_plan_dft_2d(M, N, P.data, P.data, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_plan fq = fftw_plan_dft_2d(M, N, Q.data, Q.data, FFTW_FORWARD, FFTW_ESTIMATE);
        fftw_execute(fp);
        fftw_execute(fq);
        fftw_destroy_plan(fp);
        fftw_destroy_plan(fq);
    }

    const double tau = 2.0 * M_PI;
    for (int r = 0; r < M; ++r) {
        const int sr = r <= M / 2 ? r : r - M;
        const double wv = tau * sr / M;
        for (int c = 0; c < N; ++c) {
            const int sc = c <= N / 2 ? c : c - N;
            const double wu = tau * sc / N;
            const std::size_t i = static_cast<std::size_t>(r) * N + c;
            const double denom = wu * wu + wv * wv;
            if (denom == 0.0) {
                Z.data[i][0] = Z.data[i][1] = 0.0;  // DC pinned to zero
                continue;
            }
            // z^ = (-i wu p^ - i wv q^) / (wu^2 + wv^2)
            const double pre = P.data[i][0], pim = P.data[i][1];
            const double qre = Q.data[i][0], qim = Q.data[i][1];
            Z.data[i][0] = (wu * pim + wv * qim) / denom;
            Z.data[i][1] = (-wu * pre - wv * qre) / denom;
        }
    }

    {
        std::lock_guard<std::mutex> lock(g_fftw_mutex);
        fftw_plan bz = fftw_plan_dft_2d(M, N, Z.data, Z.data, FFTW_BACKWARD, FFTW_ESTIMATE);
        fftw_execute(bz);
        fftw_destroy_plan(bz);
    }

    std::vector<float> depth(static_cast<std::size_t>(W) * H);
    const double scale = 1.0 / static_cast<double>(mn);
    double mean = 0.0;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            mean += Z.data[static_cast<std::size_t>(r) * N + c][0] * scale;
    mean /= static_cast<double>(W) * H;
    for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c)
            depth[static_cast<std::size_t>(r) * W + c] = static_cast<float>(
                Z.data[static_cast<std::size_t>(r) * N + c][0] * scale - mean);
    return depth;
}

MeshStats export_mesh_obj(const std::vector<float>& depth, const std::vector<std::uint8_t>& mask,
                          int width, int height, const std::string& path) {
    if (depth.size() != static_cast<std::size_t>(width) * height || mask.size() != depth.size())
        throw DimensionError("export_mesh_obj: buffer size mismatch");
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os.precision(7);

    MeshStats stats;
    std::vector<std::int64_t> vid(depth.size(), 0);  // 1-based OBJ indices
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * width + x;
            if (!mask[i]) continue;
            vid[i] = ++stats.vertices;
            os << "v " << x << " " << y << " " << depth[i] << "\n";
        }
    for (int y = 0; y + 1 < height; ++y)
        for (int x = 0; x + 1 < width; ++x) {
            const std::size_t a = static_cast<std::size_t>(y) * width + x;
            const std::size_t b = a + 1;
            const std::size_t c = a + static_cast<std::size_t>(width);
            const std::size_t d = c + 1;
            if (!(mask[a] && mask[b] && mask[c] && mask[d])) continue;
            os << "f " << vid[a] << " " << vid[b] << " " << vid[d] << "\n";
            os << "f " << vid[a] << " " << vid[d] << " " << vid[c] << "\n";
            stats.triangles += 2;
        }
    return stats;
}

}  // namespace ps
