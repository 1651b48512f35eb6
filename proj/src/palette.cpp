#include "cosimgen/palette.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace cosimgen {

int ClassPalette::index_of(const std::string& name) const {
    for (size_t i = 0; i < class_names.size(); ++i)
        if (class_names[i] == name) return static_cast<int>(i);
    return -1;
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
    h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0);
    const double c = v * s;
    const double hh = h / 60.0;
    const double x = c * (1.0 - std::fabs(std::fmod(hh, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hh < 1.0) {
        r = c; g = x;
    } else if (hh < 2.0) {
        r = x; g = c;
    } else if (hh < 3.0) {
        g = c; b = x;
    } else if (hh < 4.0) {
        g = x; b = c;
    } else if (hh < 5.0) {
        r = x; b = c;
    } else {
        r = c; b = x;
    }
    const double m = v - c;
    return {r + m, g + m, b + m};
}

static uint8_t to_byte(double unit) {
    long v = std::lround(unit * 255.0);
    if (v < 0) v = 0;
    if (v > 255) v = 255;
    return static_cast<uint8_t>(v);
}

static double color_distance(const Rgb& a, const Rgb& b) {
    const double dr = static_cast<double>(a[0]) - b[0];
    const double dg = static_cast<double>(a[1]) - b[1];
    const double db = static_cast<double>(a[2]) - b[2];
    return std::sqrt(dr * dr + dg * dg + db * db);
}

ClassPalette build_palette(int num_classes, std::vector<std::string> class_names) {
    require(num_classes >= 1, "palette: num_classes must be >= 1");
    if (num_classes > kMaxPaletteClasses)
        throw ValidationError("palette: more than 256 classes is unsupported (decode robustness not guaranteed)");
    require(static_cast<int>(class_names.size()) == num_classes,
            "palette: class_names length must equal num_classes");

    ClassPalette p;
    p.num_classes = num_classes;
    p.class_names = std::move(class_names);
    p.colors.resize(static_cast<size_t>(num_classes));
    p.colors[0] = {0, 0, 0};
    for (int k = 1; k < num_classes; ++k) {
        const double hue = std::fmod(static_cast<double>(k) * kGoldenAngleDeg, 360.0);
        const auto rgb = hsv_to_rgb(hue, 1.0, 1.0);
        p.colors[static_cast<size_t>(k)] = {to_byte(rgb[0]), to_byte(rgb[1]), to_byte(rgb[2])};
    }

    if (num_classes == 1) {
        // No pair to measure; any point in RGB space decodes to the single class.
        p.min_pair_distance = 255.0 * std::sqrt(3.0);
    } else {
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < num_classes; ++i)
            for (int j = i + 1; j < num_classes; ++j)
                best = std::min(best, color_distance(p.colors[static_cast<size_t>(i)],
                                                     p.colors[static_cast<size_t>(j)]));
        p.min_pair_distance = best;
    }
    return p;
}

ClassPalette build_palette(int num_classes) {
    std::vector<std::string> names;
    names.reserve(static_cast<size_t>(std::max(num_classes, 0)));
    for (int k = 0; k < num_classes; ++k)
        names.push_back(k == 0 ? "background" : "class_" + std::to_string(k));
    return build_palette(num_classes, std::move(names));
}

RgbImage8 encode_mask(const ClassMap& ids, const ClassPalette& palette) {
    RgbImage8 img(ids.height, ids.width);
    for (int y = 0; y < ids.height; ++y) {
        for (int x = 0; x < ids.width; ++x) {
            const int k = ids.at(y, x);
            require(k >= 0 && k < palette.num_classes, "encode_mask: class id out of range");
            const Rgb& c = palette.colors[static_cast<size_t>(k)];
            uint8_t* px = img.pixel(y, x);
            px[0] = c[0];
            px[1] = c[1];
            px[2] = c[2];
        }
    }
    return img;
}

static int nearest_class(double r, double g, double b, const ClassPalette& palette) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int k = 0; k < palette.num_classes; ++k) {
        const Rgb& c = palette.colors[static_cast<size_t>(k)];
        const double dr = r - c[0];
        const double dg = g - c[1];
        const double db = b - c[2];
        const double d = dr * dr + dg * dg + db * db;
        if (d < best_d) { // strict: ties keep the lowest index
            best_d = d;
            best = k;
        }
    }
    return best;
}

ClassMap decode_mask(const Tensor& rgb_hwc, const ClassPalette& palette) {
    require(rgb_hwc.rank() == 3 && rgb_hwc.dim(2) == 3, "decode_mask: expected {H,W,3} tensor");
    const int h = rgb_hwc.dim(0);
    const int w = rgb_hwc.dim(1);
    ClassMap out(h, w);
    const double* d = rgb_hwc.data();
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double* px = d + (static_cast<size_t>(y) * w + x) * 3;
            out.at(y, x) = nearest_class(px[0], px[1], px[2], palette);
        }
    return out;
}

ClassMap decode_mask(const RgbImage8& rgb, const ClassPalette& palette) {
    ClassMap out(rgb.height, rgb.width);
    for (int y = 0; y < rgb.height; ++y)
        for (int x = 0; x < rgb.width; ++x) {
            const uint8_t* px = rgb.pixel(y, x);
            out.at(y, x) = nearest_class(px[0], px[1], px[2], palette);
        }
    return out;
}

std::set<int> classes_present(const ClassMap& ids, double min_fraction) {
    std::vector<int64_t> counts;
    for (int64_t i = 0; i < ids.pixel_count(); ++i) {
        const int k = ids.ids[static_cast<size_t>(i)];
        if (k >= static_cast<int>(counts.size())) counts.resize(static_cast<size_t>(k) + 1, 0);
        ++counts[static_cast<size_t>(k)];
    }
    std::set<int> present;
    const double total = static_cast<double>(ids.pixel_count());
    for (size_t k = 1; k < counts.size(); ++k)
        if (counts[k] > 0 && static_cast<double>(counts[k]) >= min_fraction * total)
            present.insert(static_cast<int>(k));
    return present;
}

std::string palette_to_json(const ClassPalette& palette) {
    nlohmann::json j;
    j["num_classes"] = palette.num_classes;
    j["class_names"] = palette.class_names;
    auto colors = nlohmann::json::array();
    for (const Rgb& c : palette.colors) colors.push_back({c[0], c[1], c[2]});
    j["colors"] = colors;
    return j.dump(2) + "\n";
}

ClassPalette palette_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    const int n = j.at("num_classes").get<int>();
    std::vector<std::string> names = j.at("class_names").get<std::vector<std::string>>();
    ClassPalette p = build_palette(n, std::move(names));
    // Stored colors must agree with the deterministic construction.
    const auto& colors = j.at("colors");
    require(static_cast<int>(colors.size()) == n, "palette: colors length mismatch");
    for (int k = 0; k < n; ++k) {
        const auto& c = colors[static_cast<size_t>(k)];
        Rgb stored = {c.at(0).get<uint8_t>(), c.at(1).get<uint8_t>(), c.at(2).get<uint8_t>()};
        require(stored == p.colors[static_cast<size_t>(k)],
                "palette: stored colors do not match the canonical palette for this class count");
    }
    return p;
}

void save_palette(const ClassPalette& palette, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("palette: cannot write " + path);
    f << palette_to_json(palette);
}

ClassPalette load_palette(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("palette: cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return palette_from_json(text);
}

} // namespace cosimgen
