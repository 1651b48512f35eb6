#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cosimgen/dataset.hpp"
#include "cosimgen/palette.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

struct FeatureSet {
    Tensor matrix; // {n, f}
    std::string extractor_id;

    int n() const { return matrix.rank() == 2 ? matrix.dim(0) : 0; }
    int f() const { return matrix.rank() == 2 ? matrix.dim(1) : 0; }
};

// Deterministic fixed-seed conv feature extractor: the offline stand-in for a
// pretrained classifier backbone. Images are bilinearly resized to
// input_size() before featurization.
class MetricExtractor {
public:
    explicit MetricExtractor(int in_channels = 3, uint64_t seed = 0xfea7);

    const std::string& id() const { return id_; }
    int input_size() const { return 64; }
    int feature_dim() const;

    Tensor features(const Tensor& image_chw) const;                    // {f}
    std::vector<Tensor> layer_features(const Tensor& image_chw) const; // taps for LPIPS-style distance
    FeatureSet featurize(const std::vector<Tensor>& images_chw) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
    std::string id_;
    int in_channels_;
};

// |mu_A - mu_B|^2 + tr(S_A + S_B - 2 (S_A S_B)^{1/2}); sample covariance with
// ddof=1; matrix sqrt by symmetric eigendecomposition, negatives clipped.
double frechet_distance(const FeatureSet& a, const FeatureSet& b);

// Unbiased MMD^2 with polynomial kernel (x.y/f + 1)^3.
double kernel_distance(const FeatureSet& a, const FeatureSet& b);

// Euclidean distance between feature means.
double feature_distance(const FeatureSet& a, const FeatureSet& b);

// Per-layer unit-normalized squared feature distance, averaged over layers.
double perceptual_pair_distance_single(const MetricExtractor& extractor, const Tensor& a, const Tensor& b);
// Mean over randomly drawn cross-set pairs.
double perceptual_pair_distance(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
                                const MetricExtractor& extractor, Rng& rng, int num_pairs = 64);

struct SfidReport {
    std::map<int, double> per_class;
    std::vector<int> skipped; // classes with < 2 crops on either side
    double mean = 0.0;
};

// Connected-region crops (tight bbox, >= 8x8) per class, featurized and
// compared with per-class Frechet distance.
SfidReport semantic_fid(const std::vector<Tensor>& real_images, const std::vector<ClassMap>& real_maps,
                        const std::vector<Tensor>& gen_images, const std::vector<ClassMap>& gen_maps,
                        const ClassPalette& palette, const MetricExtractor& extractor);

// Crop extraction exposed for tests.
std::vector<Tensor> class_crops(const Tensor& image_chw, const ClassMap& ids, int class_id, int resize_to,
                                int min_side = 8);

struct PpvReport {
    double value = 0.0;  // fraction of (sample, queried class) pairs satisfied
    double strict = 0.0; // micro |present & queried| / |present|
    int64_t pairs = 0;
};
PpvReport ppv(const std::vector<ConditionVector>& queried, const std::vector<ClassMap>& generated_maps,
              double min_fraction = 0.001);

struct CoOccurrence {
    Tensor matrix; // {c,c}; (i,j) = P(j present | i queried)
    std::vector<int> undefined_rows;
};
CoOccurrence co_occurrence(const std::vector<ConditionVector>& conditions, const std::vector<ClassMap>& maps,
                           int num_classes, double min_fraction = 0.001);

struct MetricsReport {
    double fid = 0.0;
    double kid = 0.0;
    double feat_dist = 0.0;
    double perc_dist = 0.0;
    std::map<int, double> sfid_per_class;
    double sfid_mean = 0.0;
    double ppv_value = 0.0;
    double ppv_strict = 0.0;
    int n_real = 0;
    int n_gen = 0;
    std::string extractor_id;
};

std::string metrics_report_to_json(const MetricsReport& report);
std::string co_occurrence_to_csv(const CoOccurrence& co, const ClassPalette& palette);

} // namespace cosimgen
