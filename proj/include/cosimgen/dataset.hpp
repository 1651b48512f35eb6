#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cosimgen/palette.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

// Binary class-presence vector; bit 0 is background and stays unset.
struct ConditionVector {
    std::vector<int> bits;

    bool any() const {
        for (int b : bits)
            if (b) return true;
        return false;
    }
    bool operator==(const ConditionVector& o) const { return bits == o.bits; }
};

struct PromptText {
    std::string text;
};

// 6-channel joint sample: channels 0-2 image, 3-5 F-RGB mask, all in [-1,1].
struct PairTensor {
    Tensor data;

    int height() const { return data.dim(1); }
    int width() const { return data.dim(2); }
};

struct SamplePair {
    Tensor image;    // {3,H,W} in [-1,1]
    Tensor mask_rgb; // {3,H,W} in [-1,1], F-RGB encoded
    ConditionVector condition;
    PromptText prompt;
    std::string source_id;
};

// One matched (image, mask) pair on disk, not yet decoded.
struct SampleRecord {
    std::string stem;
    std::string image_path;
    std::string mask_path;
    std::optional<std::string> prompt_override;
};

struct DatasetManifest {
    ClassPalette palette;
    std::vector<SampleRecord> records;
    std::vector<std::string> warnings; // orphans and per-sample rejections
};

// Scans root for images/*.png + masks/*.png matched by stem, palette.json,
// and optional prompts.tsv (stem <tab> caption). Missing palette.json raises
// ConfigError; a sample whose image and mask sizes disagree is rejected with
// a warning instead of failing the whole load.
DatasetManifest load_manifest(const std::string& root);

// Reads, decodes, normalizes, and center-crop+resizes one record. Masks may be
// stored either as grayscale id maps or as F-RGB; detection requires an exact
// palette color match for the RGB case.
SamplePair load_sample(const SampleRecord& record, const ClassPalette& palette, int target_size);

ConditionVector derive_condition(const ClassMap& ids, int num_classes);

PromptText synthesize_prompt(const ConditionVector& condition, const ClassPalette& palette);

PairTensor pack_pair(const Tensor& image, const Tensor& mask_rgb);
void unpack_pair(const PairTensor& pair, Tensor& image, Tensor& mask_rgb);

// Deterministic flip + quarter-turn applied identically to image and mask.
SamplePair augment(const SamplePair& sample, uint64_t seed);
Tensor apply_flip_rot(const Tensor& chw, bool hflip, int quarter_turns);

// Writes a tiny synthetic dataset (circle/square/triangle, one class per
// sample) under root: images/, masks/, palette.json. Returns the palette.
ClassPalette synthesize_shapes_dataset(const std::string& root, int n_samples, int size, uint64_t seed);

} // namespace cosimgen
