#include "ps/formats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ps/errors.hpp"
#include "ps/image_io.hpp"

namespace fs = std::filesystem;

namespace ps {

namespace {

void write_f32_le(std::ofstream& os, const float* data, std::size_t count) {
    // Little-endian hosts write directly (the header records the convention).
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
}

void read_f32_le(std::ifstream& is, float* data, std::size_t count) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
    if (!is) throw DataError("truncated float payload");
}

std::string image_name(int index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03d.png", index);
    return buf;
}

}  // namespace

void write_normalmap(const NormalMap& nm, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    os << "FMAP\n" << nm.width << " " << nm.height << "\n-1.0\n";
    write_f32_le(os, nm.n.ptr(), nm.n.data.size());
    if (!os) throw DataError("write failed: " + path);
}

NormalMap read_normalmap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    is >> magic >> w >> h >> scale;
    if (magic != "FMAP" || w <= 0 || h <= 0) throw DataError("not a normal map file: " + path);
    if (scale >= 0) throw DataError(path + ": big-endian normal maps are not supported");
    is.get();  // newline before the payload
    NormalMap nm = NormalMap::zeros(w, h);
    read_f32_le(is, nm.n.ptr(), nm.n.data.size());
    nm.mask_from_vectors();
    return nm;
}

ObservationStack read_dataset(const std::string& dir, std::optional<NormalMap>* gt_out,
                              const DatasetReadOptions& opts) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + dir);

    // Lights.
    std::ifstream ldir(root / "light_directions.txt");
    if (!ldir) throw DataError("missing light_directions.txt in " + dir);
    LightSet lights;
    std::string line;
    int line_no = 0;
    while (std::getline(ldir, line)) {
        if (line.empty()) continue;
        line_no++;
        std::istringstream ls(line);
        Vec3 v;
        if (!(ls >> v.x >> v.y >> v.z))
            throw DataError("light_directions.txt line " + std::to_string(line_no) +
                            ": expected three numbers");
        if (std::abs(v.norm() - 1.0) > 1e-3)
            throw DataError("light_directions.txt line " + std::to_string(line_no) +
                            ": non-unit direction");
        lights.directions.push_back(v);
    }
    std::ifstream lint(root / "light_intensities.txt");
    if (!lint) throw DataError("missing light_intensities.txt in " + dir);
    line_no = 0;
    while (std::getline(lint, line)) {
        if (line.empty()) continue;
        line_no++;
        std::istringstream ls(line);
        double r, g, b;
        if (!(ls >> r >> g >> b))
            throw DataError("light_intensities.txt line " + std::to_string(line_no) +
                            ": expected three numbers");
        if (r <= 0 || g <= 0 || b <= 0)
            throw DataError("light_intensities.txt line " + std::to_string(line_no) +
                            ": intensities must be positive");
        lights.intensities.push_back(
            {static_cast<float>(r), static_cast<float>(g), static_cast<float>(b)});
    }
    const int J = static_cast<int>(lights.directions.size());
    if (static_cast<int>(lights.intensities.size()) != J)
        throw DataError("light direction/intensity line counts differ in " + dir);
    if (J < 1) throw DataError("no lights listed in " + dir);

    // Images 001..J must exist, with no extra trailing file.
    int present = 0;
    while (fs::exists(root / image_name(present + 1))) present++;
    if (present != J)
        throw DataError(dir + ": " + std::to_string(present) + " images but " +
                        std::to_string(J) + " light lines");

    int mw = 0, mh = 0;
    std::vector<std::uint8_t> mask = read_mask_png((root / "mask.png").string(), &mw, &mh);

    ObservationStack stack;
    stack.width = mw;
    stack.height = mh;
    stack.mask = std::move(mask);
    stack.lights = lights;
    const std::int64_t hw = static_cast<std::int64_t>(mw) * mh;
    for (int j = 1; j <= J; ++j) {
        TensorF img = read_png_linear((root / image_name(j)).string(), opts.srgb_decode_8bit);
        if (img.dim(1) != mh || img.dim(2) != mw)
            throw DataError(image_name(j) + " size differs from mask.png");
        // Intensity-normalize in memory.
        const auto& e = lights.intensities[static_cast<std::size_t>(j - 1)];
        for (int c = 0; c < 3; ++c) {
            float* row = img.ptr() + c * hw;
            for (std::int64_t i = 0; i < hw; ++i) row[i] /= e[static_cast<std::size_t>(c)];
        }
        stack.images.push_back(std::move(img));
    }

    if (gt_out) {
        const fs::path gt_path = root / "normal.txt";
        if (fs::exists(gt_path))
            *gt_out = read_normal_txt(gt_path.string(), mw, mh, opts.flip_y);
        else
            gt_out->reset();
    }
    return stack;
}

void write_dataset(const std::string& dir, const ObservationStack& stack, const NormalMap* gt) {
    const fs::path root(dir);
    fs::create_directories(root);
    const std::int64_t hw = static_cast<std::int64_t>(stack.width) * stack.height;

    std::ofstream ldir(root / "light_directions.txt");
    std::ofstream lint(root / "light_intensities.txt");
    if (!ldir || !lint) throw DataError("cannot write light files in " + dir);
    ldir.precision(17);
    lint.precision(9);
    for (int j = 0; j < stack.count(); ++j) {
        const Vec3& v = stack.lights.directions[static_cast<std::size_t>(j)];
        ldir << v.x << " " << v.y << " " << v.z << "\n";
        const auto& e = stack.lights.intensities[static_cast<std::size_t>(j)];
        lint << e[0] << " " << e[1] << " " << e[2] << "\n";
    }

    for (int j = 0; j < stack.count(); ++j) {
        TensorF img = stack.images[static_cast<std::size_t>(j)];
        const auto& e = stack.lights.intensities[static_cast<std::size_t>(j)];
        for (int c = 0; c < 3; ++c) {
            float* row = img.ptr() + c * hw;
            for (std::int64_t i = 0; i < hw; ++i)
                row[i] = std::clamp(row[i] * e[static_cast<std::size_t>(c)], 0.0f, 1.0f);
        }
        write_png_rgb16((root / image_name(j + 1)).string(), img);
    }

    write_mask_png((root / "mask.png").string(), stack.mask, stack.width, stack.height);
    if (gt) write_normal_txt(*gt, (root / "normal.txt").string());
}

NormalMap read_normal_txt(const std::string& path, int width, int height, bool flip_y) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    NormalMap nm = NormalMap::zeros(width, height);
    const std::int64_t hw = nm.pixels();
    for (std::int64_t i = 0; i < hw; ++i) {
        double x, y, z;
        if (!(is >> x >> y >> z))
            throw DataError(path + ": expected " + std::to_string(hw) + " normal rows");
        nm.n[i] = static_cast<float>(x);
        nm.n[hw + i] = static_cast<float>(flip_y ? -y : y);
        nm.n[2 * hw + i] = static_cast<float>(z);
    }
    nm.mask_from_vectors();
    return nm;
}

void write_normal_txt(const NormalMap& nm, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot write " + path);
    os.precision(9);
    const std::int64_t hw = nm.pixels();
    for (std::int64_t i = 0; i < hw; ++i)
        os << nm.n[i] << " " << nm.n[hw + i] << " " << nm.n[2 * hw + i] << "\n";
}

void write_pfm(const std::string& path, const std::vector<float>& values, int width, int height) {
    if (values.size() != static_cast<std::size_t>(width) * height)
        throw DimensionError("write_pfm: buffer size mismatch");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    os << "Pf\n" << width << " " << height << "\n-1.0\n";
    // PFM rows run bottom to top.
    for (int y = height - 1; y >= 0; --y)
        write_f32_le(os, values.data() + static_cast<std::size_t>(y) * width,
                     static_cast<std::size_t>(width));
}

std::vector<float> read_pfm(const std::string& path, int* width, int* height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    std::string magic;
    int w = 0, h = 0;
    double scale = 0;
    is >> magic >> w >> h >> scale;
    if (magic != "Pf" || w <= 0 || h <= 0) throw DataError("not a grayscale PFM: " + path);
    if (scale >= 0) throw DataError(path + ": big-endian PFM is not supported");
    is.get();
    std::vector<float> out(static_cast<std::size_t>(w) * h);
    for (int y = h - 1; y >= 0; --y)
        read_f32_le(is, out.data() + static_cast<std::size_t>(y) * w,
                    static_cast<std::size_t>(w));
    if (width) *width = w;
    if (height) *height = h;
    return out;
}

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line without '=': " + line);
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_kv_text(ss.str());
}

}  // namespace ps
