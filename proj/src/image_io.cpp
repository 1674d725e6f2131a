#include "ps/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "ps/errors.hpp"

namespace ps {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct PngReader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngReader() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
};

struct PngWriter {
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWriter() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    }
};

// Decodes to interleaved rows, 3 channels, native endianness, 8 or 16 bit.
void read_png_raw(const std::string& path, std::vector<std::uint16_t>& pixels, int& w, int& h,
                  int& depth) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path);
    png_byte header[8];
    if (std::fread(header, 1, 8, f.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw DataError("not a PNG file: " + path);

    PngReader r;
    r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!r.png) throw DataError("libpng init failed");
    r.info = png_create_info_struct(r.png);
    if (!r.info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(r.png))) throw DataError("corrupt PNG: " + path);

    png_init_io(r.png, f.get());
    png_set_sig_bytes(r.png, 8);
    png_read_info(r.png, r.info);

    w = static_cast<int>(png_get_image_width(r.png, r.info));
    h = static_cast<int>(png_get_image_height(r.png, r.info));
    depth = png_get_bit_depth(r.png, r.info);
    const int color = png_get_color_type(r.png, r.info);

    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(r.png);
    png_set_strip_alpha(r.png);
    if (depth == 16) png_set_swap(r.png);  // PNG stores 16-bit big-endian
    if (depth < 8) depth = 8;
    png_read_update_info(r.png, r.info);

    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    if (depth == 16) {
        for (int y = 0; y < h; ++y)
            rows[static_cast<std::size_t>(y)] =
                reinterpret_cast<png_bytep>(pixels.data() + static_cast<std::size_t>(y) * w * 3);
        png_read_image(r.png, rows.data());
    } else {
        std::vector<std::uint8_t> buf(static_cast<std::size_t>(w) * h * 3);
        for (int y = 0; y < h; ++y)
            rows[static_cast<std::size_t>(y)] = buf.data() + static_cast<std::size_t>(y) * w * 3;
        png_read_image(r.png, rows.data());
        for (std::size_t i = 0; i < buf.size(); ++i) pixels[i] = buf[i];
    }
    png_read_end(r.png, nullptr);
}

void write_png_raw(const std::string& path, const void* rows_base, int width, int height,
                   int depth, int color_type, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw DataError("cannot write " + path);
    PngWriter wtr;
    wtr.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!wtr.png) throw DataError("libpng init failed");
    wtr.info = png_create_info_struct(wtr.png);
    if (!wtr.info) throw DataError("libpng init failed");
    if (setjmp(png_jmpbuf(wtr.png))) throw DataError("PNG write failed: " + path);

    png_init_io(wtr.png, f.get());
    png_set_IHDR(wtr.png, wtr.info, static_cast<png_uint_32>(width),
                 static_cast<png_uint_32>(height), depth, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(wtr.png, wtr.info);
    if (depth == 16) png_set_swap(wtr.png);

    const std::size_t row_bytes =
        static_cast<std::size_t>(width) * channels * (depth == 16 ? 2 : 1);
    const auto* base = static_cast<const std::uint8_t*>(rows_base);
    for (int y = 0; y < height; ++y)
        png_write_row(wtr.png,
                      const_cast<png_bytep>(base + static_cast<std::size_t>(y) * row_bytes));
    png_write_end(wtr.png, nullptr);
}

}  // namespace

double srgb_to_linear(double s) {
    return s <= 0.04045 ? s / 12.92 : std::pow((s + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double l) {
    return l <= 0.0031308 ? l * 12.92 : 1.055 * std::pow(l, 1.0 / 2.4) - 0.055;
}

TensorF read_png_linear(const std::string& path, bool srgb_decode_8bit, int* bit_depth) {
    std::vector<std::uint16_t> raw;
    int w = 0, h = 0, depth = 0;
    read_png_raw(path, raw, w, h, depth);
    if (bit_depth) *bit_depth = depth;
    TensorF img({3, h, w});
    const std::int64_t hw = static_cast<std::int64_t>(w) * h;
    const double scale = depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    const bool decode = depth == 8 && srgb_decode_8bit;
    for (std::int64_t i = 0; i < hw; ++i) {
        for (int c = 0; c < 3; ++c) {
            double v = raw[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] * scale;
            if (decode) v = srgb_to_linear(v);
            img[c * hw + i] = static_cast<float>(v);
        }
    }
    return img;
}

void write_png_rgb16(const std::string& path, const TensorF& img) {
    if (img.rank() != 3 || img.dim(0) != 3) throw DimensionError("write_png_rgb16: need [3,H,W]");
    const int h = img.dim(1), w = img.dim(2);
    const std::int64_t hw = static_cast<std::int64_t>(w) * h;
    std::vector<std::uint16_t> raw(static_cast<std::size_t>(hw) * 3);
    for (std::int64_t i = 0; i < hw; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(static_cast<double>(img[c * hw + i]), 0.0, 1.0);
            raw[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] =
                static_cast<std::uint16_t>(std::lround(v * 65535.0));
        }
    write_png_raw(path, raw.data(), w, h, 16, PNG_COLOR_TYPE_RGB, 3);
}

void write_png_rgb8(const std::string& path, const std::vector<std::uint8_t>& rgb, int width,
                    int height) {
    if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
        throw DimensionError("write_png_rgb8: buffer size mismatch");
    write_png_raw(path, rgb.data(), width, height, 8, PNG_COLOR_TYPE_RGB, 3);
}

std::vector<std::uint8_t> read_mask_png(const std::string& path, int* width, int* height) {
    std::vector<std::uint16_t> raw;
    int w = 0, h = 0, depth = 0;
    read_png_raw(path, raw, w, h, depth);
    if (width) *width = w;
    if (height) *height = h;
    const int threshold = depth == 16 ? 128 * 257 : 128;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = raw[i * 3] >= threshold ? 1 : 0;
    return mask;
}

void write_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width,
                    int height) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const std::uint8_t v = mask[i] ? 255 : 0;
        rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = v;
    }
    write_png_rgb8(path, rgb, width, height);
}

void write_normal_png(const std::string& path, const NormalMap& nm) {
    const std::int64_t hw = nm.pixels();
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(hw) * 3);
    for (std::int64_t i = 0; i < hw; ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = (static_cast<double>(nm.n[c * hw + i]) + 1.0) / 2.0;
            rgb[static_cast<std::size_t>(i) * 3 + static_cast<std::size_t>(c)] =
                static_cast<std::uint8_t>(std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5));
        }
    write_png_rgb8(path, rgb, nm.width, nm.height);
}

}  // namespace ps
