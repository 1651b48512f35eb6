#include "cosimgen/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

namespace cosimgen {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

} // namespace

PngData read_png(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw ConfigError("png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ConfigError("png: allocation failure reading " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("png: failed to decode " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    PngData out;
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.channels = static_cast<int>(png_get_channels(png, info));
    if (out.channels != 1 && out.channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ValidationError("png: unsupported channel count in " + path);
    }

    out.px.resize(static_cast<size_t>(out.height) * out.width * out.channels);
    std::vector<png_bytep> rows(static_cast<size_t>(out.height));
    const size_t stride = static_cast<size_t>(out.width) * out.channels;
    for (int y = 0; y < out.height; ++y) rows[static_cast<size_t>(y)] = out.px.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

static void write_png_impl(const std::string& path, const uint8_t* px, int height, int width, int channels) {
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw ConfigError("png: cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw ConfigError("png: allocation failure writing " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ConfigError("png: failed to encode " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    const size_t stride = static_cast<size_t>(width) * channels;
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int y = 0; y < height; ++y) rows[static_cast<size_t>(y)] = const_cast<png_bytep>(px + y * stride);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_png_rgb(const std::string& path, const RgbImage8& img) {
    write_png_impl(path, img.px.data(), img.height, img.width, 3);
}

void write_png_gray(const std::string& path, const std::vector<uint8_t>& gray, int height, int width) {
    require(static_cast<size_t>(height) * width == gray.size(), "png: gray buffer size mismatch");
    write_png_impl(path, gray.data(), height, width, 1);
}

Tensor chw_from_image(const RgbImage8& img) {
    Tensor t({3, img.height, img.width});
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const uint8_t* px = img.pixel(y, x);
            for (int c = 0; c < 3; ++c) t.at(c, y, x) = static_cast<double>(px[c]) / 127.5 - 1.0;
        }
    return t;
}

RgbImage8 image_from_chw(const Tensor& chw) {
    require(chw.rank() == 3 && chw.dim(0) == 3, "image_from_chw: expected {3,H,W}");
    RgbImage8 img(chw.dim(1), chw.dim(2));
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            uint8_t* px = img.pixel(y, x);
            for (int c = 0; c < 3; ++c) {
                const double v = (clamp_unit(chw.at(c, y, x)) + 1.0) * 127.5;
                long b = std::lround(v);
                if (b < 0) b = 0;
                if (b > 255) b = 255;
                px[c] = static_cast<uint8_t>(b);
            }
        }
    return img;
}

Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w) {
    require(chw.rank() == 3 && out_h > 0 && out_w > 0, "resize_bilinear: bad arguments");
    const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    if (h == out_h && w == out_w) return chw;
    Tensor out({c, out_h, out_w});
    // Align-corners-false convention: sample at pixel centers.
    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        double fy = (oy + 0.5) * sy - 0.5;
        if (fy < 0.0) fy = 0.0;
        int y0 = static_cast<int>(fy);
        if (y0 > h - 1) y0 = h - 1;
        const int y1 = std::min(y0 + 1, h - 1);
        const double wy = fy - y0;
        for (int ox = 0; ox < out_w; ++ox) {
            double fx = (ox + 0.5) * sx - 0.5;
            if (fx < 0.0) fx = 0.0;
            int x0 = static_cast<int>(fx);
            if (x0 > w - 1) x0 = w - 1;
            const int x1 = std::min(x0 + 1, w - 1);
            const double wx = fx - x0;
            for (int ch = 0; ch < c; ++ch) {
                const double top = chw.at(ch, y0, x0) * (1.0 - wx) + chw.at(ch, y0, x1) * wx;
                const double bot = chw.at(ch, y1, x0) * (1.0 - wx) + chw.at(ch, y1, x1) * wx;
                out.at(ch, oy, ox) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

Tensor center_crop(const Tensor& chw, int out_h, int out_w) {
    require(chw.rank() == 3 && out_h > 0 && out_w > 0 && out_h <= chw.dim(1) && out_w <= chw.dim(2),
            "center_crop: crop larger than input");
    const int c = chw.dim(0);
    const int oy = (chw.dim(1) - out_h) / 2;
    const int ox = (chw.dim(2) - out_w) / 2;
    Tensor out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x) out.at(ch, y, x) = chw.at(ch, oy + y, ox + x);
    return out;
}

ClassMap resize_nearest_ids(const ClassMap& ids, int out_h, int out_w) {
    require(out_h > 0 && out_w > 0, "resize_nearest_ids: bad size");
    if (ids.height == out_h && ids.width == out_w) return ids;
    ClassMap out(out_h, out_w);
    const double sy = static_cast<double>(ids.height) / out_h;
    const double sx = static_cast<double>(ids.width) / out_w;
    for (int oy = 0; oy < out_h; ++oy) {
        int iy = static_cast<int>((oy + 0.5) * sy);
        if (iy > ids.height - 1) iy = ids.height - 1;
        for (int ox = 0; ox < out_w; ++ox) {
            int ix = static_cast<int>((ox + 0.5) * sx);
            if (ix > ids.width - 1) ix = ids.width - 1;
            out.at(oy, ox) = ids.at(iy, ix);
        }
    }
    return out;
}

ClassMap center_crop_ids(const ClassMap& ids, int out_h, int out_w) {
    require(out_h > 0 && out_w > 0 && out_h <= ids.height && out_w <= ids.width, "center_crop_ids: crop too large");
    const int oy = (ids.height - out_h) / 2;
    const int ox = (ids.width - out_w) / 2;
    ClassMap out(out_h, out_w);
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) out.at(y, x) = ids.at(oy + y, ox + x);
    return out;
}

Tensor downscale2x_box(const Tensor& chw) {
    require(chw.rank() == 3 && chw.dim(1) % 2 == 0 && chw.dim(2) % 2 == 0, "downscale2x_box: dims must be even");
    const int c = chw.dim(0), h = chw.dim(1) / 2, w = chw.dim(2) / 2;
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                out.at(ch, y, x) = 0.25 * (chw.at(ch, 2 * y, 2 * x) + chw.at(ch, 2 * y, 2 * x + 1) +
                                           chw.at(ch, 2 * y + 1, 2 * x) + chw.at(ch, 2 * y + 1, 2 * x + 1));
    return out;
}

ClassMap decode_mask_chw(const Tensor& chw, const ClassPalette& palette) {
    require(chw.rank() == 3 && chw.dim(0) == 3, "decode_mask_chw: expected {3,H,W}");
    const int h = chw.dim(1);
    const int w = chw.dim(2);
    Tensor hwc({h, w, 3});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                hwc[(static_cast<int64_t>(y) * w + x) * 3 + c] = (chw.at(c, y, x) + 1.0) * 127.5;
    return decode_mask(hwc, palette);
}

} // namespace cosimgen
