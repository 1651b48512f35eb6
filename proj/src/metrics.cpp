#include "cosimgen/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cosimgen/common.hpp"
#include "cosimgen/image_io.hpp"
#include "cosimgen/nn/layers.hpp"

namespace cosimgen {

struct MetricExtractor::Impl {
    std::vector<nn::Conv2d> convs;
};

MetricExtractor::MetricExtractor(int in_channels, uint64_t seed) : in_channels_(in_channels) {
    Rng rng = rng_for(seed, "metric-extractor");
    auto impl = std::make_shared<Impl>();
    const int widths[4] = {8, 16, 32, 64};
    int cin = in_channels;
    for (int w : widths) {
        impl->convs.emplace_back(cin, w, 3, 2, 1, rng, std::sqrt(2.0));
        cin = w;
    }
    impl_ = std::move(impl);
    std::ostringstream os;
    os << "ci-conv-v1/" << seed << "/" << in_channels;
    id_ = os.str();
}

int MetricExtractor::feature_dim() const { return 64; }

std::vector<Tensor> MetricExtractor::layer_features(const Tensor& image_chw) const {
    require(image_chw.rank() == 3 && image_chw.dim(0) == in_channels_, "MetricExtractor: channel mismatch");
    Tensor h = resize_bilinear(image_chw, input_size(), input_size());
    std::vector<Tensor> taps;
    for (const auto& conv : impl_->convs) {
        h = nn::silu(conv.forward(h));
        taps.push_back(h);
    }
    return taps;
}

Tensor MetricExtractor::features(const Tensor& image_chw) const {
    const std::vector<Tensor> taps = layer_features(image_chw);
    return nn::global_avg_pool(taps.back());
}

FeatureSet MetricExtractor::featurize(const std::vector<Tensor>& images_chw) const {
    require(!images_chw.empty(), "featurize: empty image set");
    FeatureSet set;
    set.extractor_id = id_;
    set.matrix = Tensor({static_cast<int>(images_chw.size()), feature_dim()});
    for (size_t i = 0; i < images_chw.size(); ++i) {
        const Tensor f = features(images_chw[i]);
        require(f.size() == feature_dim(), "featurize: unexpected feature width");
        for (int j = 0; j < feature_dim(); ++j) set.matrix[static_cast<int64_t>(i) * feature_dim() + j] = f[j];
    }
    return set;
}

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

void check_compatible(const FeatureSet& a, const FeatureSet& b, int min_n) {
    require(a.matrix.rank() == 2 && b.matrix.rank() == 2, "feature sets must be {n,f} matrices");
    require(a.f() == b.f(), "feature sets have different widths");
    require(a.extractor_id == b.extractor_id, "feature sets come from different extractors");
    require(a.n() >= min_n && b.n() >= min_n, "feature set too small for this metric");
    require(a.matrix.all_finite() && b.matrix.all_finite(), "feature sets must be finite");
}

Vec mean_of(const FeatureSet& s) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(s.matrix.data(),
                                                                                               s.n(), s.f());
    return m.colwise().mean();
}

// Sample covariance, ddof = 1.
Mat covariance_of(const FeatureSet& s) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(s.matrix.data(),
                                                                                               s.n(), s.f());
    const Mat centered = m.rowwise() - m.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(s.n() - 1);
}

// Symmetric PSD square root with negative-eigenvalue clipping.
Mat sqrtm_psd(const Mat& m) {
    Eigen::SelfAdjointEigenSolver<Mat> es(m);
    Vec vals = es.eigenvalues();
    for (int i = 0; i < vals.size(); ++i) vals[i] = vals[i] > 0.0 ? std::sqrt(vals[i]) : 0.0;
    return es.eigenvectors() * vals.asDiagonal() * es.eigenvectors().transpose();
}

double poly3_kernel(const double* x, const double* y, int f) {
    double d = 0.0;
    for (int i = 0; i < f; ++i) d += x[i] * y[i];
    const double base = d / static_cast<double>(f) + 1.0;
    return base * base * base;
}

} // namespace

double frechet_distance(const FeatureSet& a, const FeatureSet& b) {
    check_compatible(a, b, 2);
    const Vec mu_a = mean_of(a), mu_b = mean_of(b);
    const Mat sig_a = covariance_of(a), sig_b = covariance_of(b);
    // tr((S_A S_B)^{1/2}) via the symmetric form sqrt(sqrt(S_A) S_B sqrt(S_A)),
    // which keeps everything in self-adjoint territory.
    const Mat root_a = sqrtm_psd(sig_a);
    const Mat cross = sqrtm_psd(root_a * sig_b * root_a);
    const double mean_term = (mu_a - mu_b).squaredNorm();
    const double trace_term = sig_a.trace() + sig_b.trace() - 2.0 * cross.trace();
    const double fid = mean_term + trace_term;
    return fid > 0.0 ? fid : 0.0;
}

double kernel_distance(const FeatureSet& a, const FeatureSet& b) {
    check_compatible(a, b, 2);
    const int m = a.n(), n = b.n(), f = a.f();
    const double* am = a.matrix.data();
    const double* bm = b.matrix.data();
    double term_aa = 0.0, term_bb = 0.0, term_ab = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            if (i != j) term_aa += poly3_kernel(am + static_cast<size_t>(i) * f, am + static_cast<size_t>(j) * f, f);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) term_bb += poly3_kernel(bm + static_cast<size_t>(i) * f, bm + static_cast<size_t>(j) * f, f);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            term_ab += poly3_kernel(am + static_cast<size_t>(i) * f, bm + static_cast<size_t>(j) * f, f);
    return term_aa / (static_cast<double>(m) * (m - 1)) + term_bb / (static_cast<double>(n) * (n - 1)) -
           2.0 * term_ab / (static_cast<double>(m) * n);
}

double feature_distance(const FeatureSet& a, const FeatureSet& b) {
    check_compatible(a, b, 1);
    return (mean_of(a) - mean_of(b)).norm();
}

double perceptual_pair_distance_single(const MetricExtractor& extractor, const Tensor& a, const Tensor& b) {
    const std::vector<Tensor> fa = extractor.layer_features(a);
    const std::vector<Tensor> fb = extractor.layer_features(b);
    double acc = 0.0;
    for (size_t l = 0; l < fa.size(); ++l) {
        // Unit-normalize each layer's feature vector before comparing.
        double na = 0.0, nb = 0.0;
        for (int64_t i = 0; i < fa[l].size(); ++i) {
            na += fa[l][i] * fa[l][i];
            nb += fb[l][i] * fb[l][i];
        }
        na = std::sqrt(na);
        nb = std::sqrt(nb);
        const double inv_a = na > 0.0 ? 1.0 / na : 0.0;
        const double inv_b = nb > 0.0 ? 1.0 / nb : 0.0;
        double d = 0.0;
        for (int64_t i = 0; i < fa[l].size(); ++i) {
            const double diff = fa[l][i] * inv_a - fb[l][i] * inv_b;
            d += diff * diff;
        }
        acc += d / static_cast<double>(fa[l].size());
    }
    return acc / static_cast<double>(fa.size());
}

double perceptual_pair_distance(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
                                const MetricExtractor& extractor, Rng& rng, int num_pairs) {
    if (set_a.empty() || set_b.empty()) throw ValidationError("perceptual_pair_distance: empty set");
    require(num_pairs >= 1, "perceptual_pair_distance: need at least one pair");
    double acc = 0.0;
    for (int p = 0; p < num_pairs; ++p) {
        const auto& a = set_a[rng.uniform_index(set_a.size())];
        const auto& b = set_b[rng.uniform_index(set_b.size())];
        acc += perceptual_pair_distance_single(extractor, a, b);
    }
    return acc / static_cast<double>(num_pairs);
}

std::vector<Tensor> class_crops(const Tensor& image_chw, const ClassMap& ids, int class_id, int resize_to,
                                int min_side) {
    require(image_chw.rank() == 3 && image_chw.dim(1) == ids.height && image_chw.dim(2) == ids.width,
            "class_crops: image and map sizes differ");
    std::vector<Tensor> crops;
    std::vector<char> seen(static_cast<size_t>(ids.pixel_count()), 0);
    for (int sy = 0; sy < ids.height; ++sy) {
        for (int sx = 0; sx < ids.width; ++sx) {
            const size_t start = static_cast<size_t>(sy) * ids.width + sx;
            if (seen[start] || ids.ids[start] != class_id) continue;
            // Flood fill one 4-connected region, tracking its bounding box.
            int y0 = sy, y1 = sy, x0 = sx, x1 = sx;
            std::deque<std::pair<int, int>> queue{{sy, sx}};
            seen[start] = 1;
            while (!queue.empty()) {
                const auto [cy, cx] = queue.front();
                queue.pop_front();
                y0 = std::min(y0, cy);
                y1 = std::max(y1, cy);
                x0 = std::min(x0, cx);
                x1 = std::max(x1, cx);
                const int dys[4] = {-1, 1, 0, 0};
                const int dxs[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    const int ny = cy + dys[d], nx = cx + dxs[d];
                    if (ny < 0 || ny >= ids.height || nx < 0 || nx >= ids.width) continue;
                    const size_t ni = static_cast<size_t>(ny) * ids.width + nx;
                    if (seen[ni] || ids.ids[ni] != class_id) continue;
                    seen[ni] = 1;
                    queue.emplace_back(ny, nx);
                }
            }
            const int bh = y1 - y0 + 1, bw = x1 - x0 + 1;
            if (bh < min_side || bw < min_side) continue;
            Tensor crop({image_chw.dim(0), bh, bw});
            for (int ch = 0; ch < image_chw.dim(0); ++ch)
                for (int y = 0; y < bh; ++y)
                    for (int x = 0; x < bw; ++x) crop.at(ch, y, x) = image_chw.at(ch, y0 + y, x0 + x);
            crops.push_back(resize_bilinear(crop, resize_to, resize_to));
        }
    }
    return crops;
}

SfidReport semantic_fid(const std::vector<Tensor>& real_images, const std::vector<ClassMap>& real_maps,
                        const std::vector<Tensor>& gen_images, const std::vector<ClassMap>& gen_maps,
                        const ClassPalette& palette, const MetricExtractor& extractor) {
    require(real_images.size() == real_maps.size() && gen_images.size() == gen_maps.size(),
            "semantic_fid: images and maps must align");
    SfidReport report;
    double total = 0.0;
    int evaluable = 0;
    for (int cls = 1; cls < palette.num_classes; ++cls) {
        std::vector<Tensor> real_crops, gen_crops;
        for (size_t i = 0; i < real_images.size(); ++i) {
            auto c = class_crops(real_images[i], real_maps[i], cls, extractor.input_size());
            real_crops.insert(real_crops.end(), c.begin(), c.end());
        }
        for (size_t i = 0; i < gen_images.size(); ++i) {
            auto c = class_crops(gen_images[i], gen_maps[i], cls, extractor.input_size());
            gen_crops.insert(gen_crops.end(), c.begin(), c.end());
        }
        if (real_crops.size() < 2 || gen_crops.size() < 2) {
            report.skipped.push_back(cls);
            continue;
        }
        const double d = frechet_distance(extractor.featurize(real_crops), extractor.featurize(gen_crops));
        report.per_class[cls] = d;
        total += d;
        ++evaluable;
    }
    if (evaluable == 0) throw ValidationError("semantic_fid: no class has enough crops on both sides");
    report.mean = total / static_cast<double>(evaluable);
    return report;
}

PpvReport ppv(const std::vector<ConditionVector>& queried, const std::vector<ClassMap>& generated_maps,
              double min_fraction) {
    require(queried.size() == generated_maps.size(), "ppv: lists must align");
    require(!queried.empty(), "ppv: empty input");
    int64_t satisfied = 0, pairs = 0;
    int64_t present_total = 0, present_and_queried = 0;
    for (size_t i = 0; i < queried.size(); ++i) {
        const auto present = classes_present(generated_maps[i], min_fraction);
        for (size_t k = 1; k < queried[i].bits.size(); ++k) {
            if (!queried[i].bits[k]) continue;
            ++pairs;
            if (present.count(static_cast<int>(k))) ++satisfied;
        }
        for (int cls : present) {
            ++present_total;
            if (cls < static_cast<int>(queried[i].bits.size()) && queried[i].bits[static_cast<size_t>(cls)])
                ++present_and_queried;
        }
    }
    require(pairs > 0, "ppv: no queried classes");
    PpvReport report;
    report.pairs = pairs;
    report.value = static_cast<double>(satisfied) / static_cast<double>(pairs);
    report.strict =
        present_total > 0 ? static_cast<double>(present_and_queried) / static_cast<double>(present_total) : 1.0;
    return report;
}

CoOccurrence co_occurrence(const std::vector<ConditionVector>& conditions, const std::vector<ClassMap>& maps,
                           int num_classes, double min_fraction) {
    require(conditions.size() == maps.size(), "co_occurrence: lists must align");
    require(num_classes >= 1, "co_occurrence: bad class count");
    CoOccurrence co;
    co.matrix = Tensor({num_classes, num_classes});
    std::vector<int64_t> queries(static_cast<size_t>(num_classes), 0);
    std::vector<int64_t> joint(static_cast<size_t>(num_classes) * num_classes, 0);
    for (size_t s = 0; s < conditions.size(); ++s) {
        const auto present = classes_present(maps[s], min_fraction);
        for (size_t i = 1; i < conditions[s].bits.size() && i < static_cast<size_t>(num_classes); ++i) {
            if (!conditions[s].bits[i]) continue;
            ++queries[i];
            for (int j : present) joint[i * static_cast<size_t>(num_classes) + static_cast<size_t>(j)] += 1;
        }
    }
    for (int i = 0; i < num_classes; ++i) {
        if (queries[static_cast<size_t>(i)] == 0) {
            co.undefined_rows.push_back(i);
            continue;
        }
        for (int j = 0; j < num_classes; ++j)
            co.matrix[static_cast<int64_t>(i) * num_classes + j] =
                static_cast<double>(joint[static_cast<size_t>(i) * num_classes + static_cast<size_t>(j)]) /
                static_cast<double>(queries[static_cast<size_t>(i)]);
    }
    return co;
}

std::string metrics_report_to_json(const MetricsReport& report) {
    nlohmann::json j;
    j["fid"] = report.fid;
    j["kid"] = report.kid;
    j["feat_dist"] = report.feat_dist;
    j["perc_dist"] = report.perc_dist;
    j["sfid_mean"] = report.sfid_mean;
    nlohmann::json per;
    for (const auto& [cls, v] : report.sfid_per_class) per[std::to_string(cls)] = v;
    j["sfid_per_class"] = per;
    j["ppv"] = report.ppv_value;
    j["ppv_strict"] = report.ppv_strict;
    j["n_real"] = report.n_real;
    j["n_gen"] = report.n_gen;
    j["extractor_id"] = report.extractor_id;
    return j.dump(2);
}

std::string co_occurrence_to_csv(const CoOccurrence& co, const ClassPalette& palette) {
    const int c = co.matrix.dim(0);
    std::ostringstream os;
    os << "queried";
    for (int j = 0; j < c; ++j) os << "," << palette.class_names[static_cast<size_t>(j)];
    os << "\n";
    for (int i = 0; i < c; ++i) {
        os << palette.class_names[static_cast<size_t>(i)];
        const bool undefined =
            std::find(co.undefined_rows.begin(), co.undefined_rows.end(), i) != co.undefined_rows.end();
        for (int j = 0; j < c; ++j) {
            if (undefined)
                os << ",nan";
            else
                os << "," << co.matrix[static_cast<int64_t>(i) * c + j];
        }
        os << "\n";
    }
    return os.str();
}

} // namespace cosimgen
