#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "cosimgen/tensor.hpp"

namespace cosimgen {

using Rgb = std::array<uint8_t, 3>;

// Integer class-id grid, row-major.
struct ClassMap {
    int height = 0;
    int width = 0;
    std::vector<int> ids;

    ClassMap() = default;
    ClassMap(int h, int w) : height(h), width(w), ids(static_cast<size_t>(h) * w, 0) {}

    int& at(int y, int x) { return ids[static_cast<size_t>(y) * width + x]; }
    int at(int y, int x) const { return ids[static_cast<size_t>(y) * width + x]; }
    int64_t pixel_count() const { return static_cast<int64_t>(height) * width; }
};

// 8-bit interleaved RGB image, row-major.
struct RgbImage8 {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> px; // h*w*3

    RgbImage8() = default;
    RgbImage8(int h, int w) : height(h), width(w), px(static_cast<size_t>(h) * w * 3, 0) {}

    uint8_t* pixel(int y, int x) { return &px[(static_cast<size_t>(y) * width + x) * 3]; }
    const uint8_t* pixel(int y, int x) const { return &px[(static_cast<size_t>(y) * width + x) * 3]; }
};

// Golden-angle class palette. Class 0 is background and always black; classes
// k >= 1 take hue (k * 137.50776405 deg) mod 360 at full saturation and value.
struct ClassPalette {
    int num_classes = 0;
    std::vector<Rgb> colors;
    std::vector<std::string> class_names;
    double min_pair_distance = 0.0; // smallest Euclidean distance between any two palette colors

    int index_of(const std::string& name) const; // -1 when absent
};

inline constexpr double kGoldenAngleDeg = 137.50776405;
inline constexpr int kMaxPaletteClasses = 256;

// Standard HSV -> RGB, h in degrees, s and v in [0,1]; components returned in [0,1].
std::array<double, 3> hsv_to_rgb(double h, double s, double v);

ClassPalette build_palette(int num_classes, std::vector<std::string> class_names);

// Names default to "background", "class_1", ...
ClassPalette build_palette(int num_classes);

RgbImage8 encode_mask(const ClassMap& ids, const ClassPalette& palette);

// Nearest palette color per pixel (Euclidean in RGB); ties go to the lowest
// class index. rgb is {H,W,3} in display range (0..255, real-valued).
ClassMap decode_mask(const Tensor& rgb_hwc, const ClassPalette& palette);
ClassMap decode_mask(const RgbImage8& rgb, const ClassPalette& palette);

// Class ids (background excluded) covering at least min_fraction of the pixels.
std::set<int> classes_present(const ClassMap& ids, double min_fraction = 0.001);

std::string palette_to_json(const ClassPalette& palette);
ClassPalette palette_from_json(const std::string& json_text);
void save_palette(const ClassPalette& palette, const std::string& path);
ClassPalette load_palette(const std::string& path);

} // namespace cosimgen
