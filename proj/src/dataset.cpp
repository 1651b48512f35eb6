#include "cosimgen/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cosimgen/common.hpp"
#include "cosimgen/image_io.hpp"
#include "cosimgen/rng.hpp"

namespace fs = std::filesystem;

namespace cosimgen {

namespace {

std::map<std::string, std::string> scan_pngs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const fs::path p = entry.path();
        if (p.extension() != ".png") continue;
        out[p.stem().string()] = p.string();
    }
    return out;
}

std::map<std::string, std::string> read_prompts_tsv(const fs::path& path) {
    std::map<std::string, std::string> out;
    std::ifstream in(path);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos) continue;
        out[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return out;
}

// True when every pixel is an exact palette color.
bool rgb_matches_palette(const PngData& png, const ClassPalette& palette) {
    std::set<uint32_t> colors;
    for (const auto& c : palette.colors) colors.insert((uint32_t(c[0]) << 16) | (uint32_t(c[1]) << 8) | c[2]);
    for (size_t i = 0; i + 2 < png.px.size(); i += 3) {
        const uint32_t key = (uint32_t(png.px[i]) << 16) | (uint32_t(png.px[i + 1]) << 8) | png.px[i + 2];
        if (!colors.count(key)) return false;
    }
    return true;
}

ClassMap ids_from_mask_png(const PngData& png, const ClassPalette& palette) {
    ClassMap ids(png.height, png.width);
    if (png.channels == 1) {
        for (int64_t i = 0; i < ids.pixel_count(); ++i) {
            const int v = png.px[static_cast<size_t>(i)];
            require(v < palette.num_classes, "mask id exceeds palette class count");
            ids.ids[static_cast<size_t>(i)] = v;
        }
        return ids;
    }
    require(png.channels == 3, "mask png must be grayscale ids or rgb");
    if (rgb_matches_palette(png, palette)) {
        RgbImage8 img(png.height, png.width);
        img.px = png.px;
        return decode_mask(img, palette);
    }
    // RGB but not palette colors: accept only if it is a gray id map saved as rgb.
    for (int64_t i = 0; i < ids.pixel_count(); ++i) {
        const uint8_t r = png.px[static_cast<size_t>(i) * 3];
        const uint8_t g = png.px[static_cast<size_t>(i) * 3 + 1];
        const uint8_t b = png.px[static_cast<size_t>(i) * 3 + 2];
        require(r == g && g == b && r < palette.num_classes,
                "mask colors match neither the palette nor a grayscale id map");
        ids.ids[static_cast<size_t>(i)] = r;
    }
    return ids;
}

// Centered square crop of the id map, sized to the shorter side.
ClassMap square_crop_ids(const ClassMap& ids) {
    const int side = std::min(ids.height, ids.width);
    return center_crop_ids(ids, side, side);
}

} // namespace

DatasetManifest load_manifest(const std::string& root) {
    const fs::path base(root);
    require(fs::is_directory(base), "dataset root is not a directory: " + root);
    const fs::path palette_path = base / "palette.json";
    if (!fs::exists(palette_path))
        throw ConfigError("dataset root has no palette.json: " + palette_path.string());

    DatasetManifest m;
    m.palette = load_palette(palette_path.string());

    const auto images = scan_pngs(base / "images");
    const auto masks = scan_pngs(base / "masks");
    const auto prompts = read_prompts_tsv(base / "prompts.tsv");

    for (const auto& [stem, image_path] : images) {
        const auto it = masks.find(stem);
        if (it == masks.end()) {
            m.warnings.push_back("orphan image without mask: " + stem);
            continue;
        }
        // Header-level size audit; decode work happens in load_sample.
        const PngData img = read_png(image_path);
        const PngData msk = read_png(it->second);
        if (img.height != msk.height || img.width != msk.width) {
            std::ostringstream os;
            os << "sample " << stem << " rejected: image " << img.width << "x" << img.height << " vs mask "
               << msk.width << "x" << msk.height;
            m.warnings.push_back(os.str());
            continue;
        }
        SampleRecord rec;
        rec.stem = stem;
        rec.image_path = image_path;
        rec.mask_path = it->second;
        if (const auto pit = prompts.find(stem); pit != prompts.end()) rec.prompt_override = pit->second;
        m.records.push_back(std::move(rec));
    }
    for (const auto& [stem, path] : masks)
        if (!images.count(stem)) m.warnings.push_back("orphan mask without image: " + stem);
    return m;
}

SamplePair load_sample(const SampleRecord& record, const ClassPalette& palette, int target_size) {
    require(target_size > 0, "load_sample: target_size must be positive");
    const PngData img_png = read_png(record.image_path);
    const PngData msk_png = read_png(record.mask_path);
    require(img_png.channels == 3, "image png must be rgb: " + record.image_path);
    require(img_png.height == msk_png.height && img_png.width == msk_png.width,
            "sample " + record.stem + ": image/mask size mismatch");

    RgbImage8 img(img_png.height, img_png.width);
    img.px = img_png.px;
    Tensor image = chw_from_image(img);
    const int side = std::min(img_png.height, img_png.width);
    image = resize_bilinear(center_crop(image, side, side), target_size, target_size);

    ClassMap ids = ids_from_mask_png(msk_png, palette);
    ids = resize_nearest_ids(square_crop_ids(ids), target_size, target_size);

    SamplePair s;
    s.image = std::move(image);
    s.mask_rgb = chw_from_image(encode_mask(ids, palette));
    s.condition = derive_condition(ids, palette.num_classes);
    s.prompt = record.prompt_override ? PromptText{*record.prompt_override}
                                      : synthesize_prompt(s.condition, palette);
    s.source_id = record.stem;
    return s;
}

ConditionVector derive_condition(const ClassMap& ids, int num_classes) {
    require(num_classes >= 1, "derive_condition: need at least one class");
    ConditionVector c;
    c.bits.assign(static_cast<size_t>(num_classes), 0);
    for (int id : ids.ids) {
        require(id >= 0 && id < num_classes, "derive_condition: id out of range");
        if (id >= 1) c.bits[static_cast<size_t>(id)] = 1;
    }
    return c;
}

PromptText synthesize_prompt(const ConditionVector& condition, const ClassPalette& palette) {
    require(static_cast<int>(condition.bits.size()) == palette.num_classes,
            "synthesize_prompt: condition length mismatch");
    if (!condition.any()) throw ValidationError("synthesize_prompt: empty condition");
    std::string text = "A photo of ";
    bool first = true;
    for (size_t k = 1; k < condition.bits.size(); ++k) {
        if (!condition.bits[k]) continue;
        if (!first) text += ", ";
        text += palette.class_names[k];
        first = false;
    }
    return PromptText{text};
}

PairTensor pack_pair(const Tensor& image, const Tensor& mask_rgb) {
    require(image.rank() == 3 && image.dim(0) == 3, "pack_pair: image must be {3,H,W}");
    require(mask_rgb.rank() == 3 && mask_rgb.dim(0) == 3, "pack_pair: mask must be {3,H,W}");
    require(image.dim(1) == mask_rgb.dim(1) && image.dim(2) == mask_rgb.dim(2), "pack_pair: sizes differ");
    for (int64_t i = 0; i < image.size(); ++i)
        require(std::isfinite(image[i]) && image[i] >= -1.0 && image[i] <= 1.0, "pack_pair: image out of [-1,1]");
    for (int64_t i = 0; i < mask_rgb.size(); ++i)
        require(std::isfinite(mask_rgb[i]) && mask_rgb[i] >= -1.0 && mask_rgb[i] <= 1.0,
                "pack_pair: mask out of [-1,1]");
    PairTensor p;
    p.data = Tensor({6, image.dim(1), image.dim(2)});
    std::copy(image.data(), image.data() + image.size(), p.data.data());
    std::copy(mask_rgb.data(), mask_rgb.data() + mask_rgb.size(), p.data.data() + image.size());
    return p;
}

void unpack_pair(const PairTensor& pair, Tensor& image, Tensor& mask_rgb) {
    require(pair.data.rank() == 3 && pair.data.dim(0) == 6, "unpack_pair: data must be {6,H,W}");
    const int h = pair.data.dim(1), w = pair.data.dim(2);
    image = Tensor({3, h, w});
    mask_rgb = Tensor({3, h, w});
    std::copy(pair.data.data(), pair.data.data() + image.size(), image.data());
    std::copy(pair.data.data() + image.size(), pair.data.data() + pair.data.size(), mask_rgb.data());
}

Tensor apply_flip_rot(const Tensor& chw, bool hflip, int quarter_turns) {
    require(chw.rank() == 3, "apply_flip_rot: need {c,h,w}");
    const int c = chw.dim(0);
    Tensor cur = chw;
    if (hflip) {
        Tensor f(cur.shape());
        const int h = cur.dim(1), w = cur.dim(2);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) f.at(ch, y, x) = cur.at(ch, y, w - 1 - x);
        cur = std::move(f);
    }
    const int q = ((quarter_turns % 4) + 4) % 4;
    for (int r = 0; r < q; ++r) {
        // 90 degrees counterclockwise: (y, x) <- (x, H-1-y) of the source.
        const int h = cur.dim(1), w = cur.dim(2);
        Tensor rot({c, w, h});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < w; ++y)
                for (int x = 0; x < h; ++x) rot.at(ch, y, x) = cur.at(ch, x, w - 1 - y);
        cur = std::move(rot);
    }
    return cur;
}

SamplePair augment(const SamplePair& sample, uint64_t seed) {
    Rng rng = rng_for(seed, "augment/" + sample.source_id);
    const bool hflip = rng.next_u64() & 1;
    const int q = static_cast<int>(rng.uniform_index(4));
    SamplePair out = sample;
    out.image = apply_flip_rot(sample.image, hflip, q);
    out.mask_rgb = apply_flip_rot(sample.mask_rgb, hflip, q);
    return out;
}

ClassPalette synthesize_shapes_dataset(const std::string& root, int n_samples, int size, uint64_t seed) {
    require(n_samples >= 1 && size >= 16, "synthesize_shapes_dataset: bad arguments");
    const fs::path base(root);
    fs::create_directories(base / "images");
    fs::create_directories(base / "masks");
    ClassPalette palette = build_palette(4, {"background", "circle", "square", "triangle"});
    save_palette(palette, (base / "palette.json").string());

    for (int i = 0; i < n_samples; ++i) {
        Rng rng = rng_for(seed, "shapes/" + std::to_string(i));
        const int cls = 1 + static_cast<int>(rng.uniform_index(3));
        const double cx = size * rng.uniform(0.35, 0.65);
        const double cy = size * rng.uniform(0.35, 0.65);
        const double r = size * rng.uniform(0.18, 0.30);
        // Background shade and per-sample tint keep images visually distinct
        // from the flat mask colors.
        const double bg = rng.uniform(0.10, 0.25);
        const double tint[3] = {rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0)};

        ClassMap ids(size, size);
        RgbImage8 img(size, size);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const double dx = x - cx, dy = y - cy;
                bool inside = false;
                if (cls == 1) {
                    inside = dx * dx + dy * dy <= r * r;
                } else if (cls == 2) {
                    inside = std::abs(dx) <= r && std::abs(dy) <= r;
                } else {
                    // Upward triangle: below the apex, within the slanted sides.
                    inside = dy >= -r && dy <= r && std::abs(dx) <= (dy + r) * 0.5;
                }
                uint8_t* px = img.pixel(y, x);
                if (inside) {
                    ids.at(y, x) = cls;
                    // Radial shading so the image is not a constant patch.
                    const double d = std::sqrt(dx * dx + dy * dy) / (r + 1e-9);
                    const double shade = 1.0 - 0.35 * std::min(1.0, d);
                    for (int ch = 0; ch < 3; ++ch)
                        px[ch] = static_cast<uint8_t>(std::lround(255.0 * tint[ch] * shade));
                } else {
                    const double g = bg + 0.08 * (static_cast<double>(y) / size);
                    for (int ch = 0; ch < 3; ++ch) px[ch] = static_cast<uint8_t>(std::lround(255.0 * g));
                }
            }
        }
        char stem[32];
        std::snprintf(stem, sizeof(stem), "sample_%03d", i);
        write_png_rgb((base / "images" / (std::string(stem) + ".png")).string(), img);
        write_png_rgb((base / "masks" / (std::string(stem) + ".png")).string(), encode_mask(ids, palette));
    }
    return palette;
}

} // namespace cosimgen
