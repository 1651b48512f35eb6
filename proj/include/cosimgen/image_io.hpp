#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cosimgen/palette.hpp"

namespace cosimgen {

// Decoded PNG pixels, 8-bit, interleaved; channels is 1 (gray) or 3 (rgb).
struct PngData {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<uint8_t> px;
};

PngData read_png(const std::string& path);
void write_png_rgb(const std::string& path, const RgbImage8& img);
void write_png_gray(const std::string& path, const std::vector<uint8_t>& gray, int height, int width);

// [-1,1] 3xHxW <-> 8-bit display image (x/127.5 - 1 and its inverse).
Tensor chw_from_image(const RgbImage8& img);
RgbImage8 image_from_chw(const Tensor& chw);

// De-normalize {3,H,W} in [-1,1] to display range and decode to class ids.
ClassMap decode_mask_chw(const Tensor& chw, const ClassPalette& palette);

// Geometry helpers shared by the loader, metrics crops, and the SR cascade.
Tensor resize_bilinear(const Tensor& chw, int out_h, int out_w);
Tensor center_crop(const Tensor& chw, int out_h, int out_w);
ClassMap resize_nearest_ids(const ClassMap& ids, int out_h, int out_w);
ClassMap center_crop_ids(const ClassMap& ids, int out_h, int out_w);

// 2x2 box average, used to build LR/HR super-resolution pairs.
Tensor downscale2x_box(const Tensor& chw);

} // namespace cosimgen
