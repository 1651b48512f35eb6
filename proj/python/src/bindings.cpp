// Python surface over the core: palette codec, forward-process algebra,
// fusion primitives, losses, distribution metrics, and checkpoint-driven
// sampling / super-resolution. Arrays cross the boundary as copies.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cosimgen/common.hpp"
#include "cosimgen/dataset.hpp"
#include "cosimgen/diffusion.hpp"
#include "cosimgen/encoders.hpp"
#include "cosimgen/image_io.hpp"
#include "cosimgen/losses.hpp"
#include "cosimgen/metrics.hpp"
#include "cosimgen/palette.hpp"
#include "cosimgen/superres.hpp"
#include "cosimgen/trainer.hpp"
#include "cosimgen/unet.hpp"

namespace py = pybind11;
using namespace cosimgen;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor tensor_from_array(const DoubleArray& arr) {
    std::vector<int> shape(static_cast<size_t>(arr.ndim()));
    for (py::ssize_t i = 0; i < arr.ndim(); ++i) shape[static_cast<size_t>(i)] = static_cast<int>(arr.shape(i));
    Tensor t(shape);
    std::copy(arr.data(), arr.data() + t.size(), t.data());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(static_cast<size_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) shape[static_cast<size_t>(i)] = t.dim(i);
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.size(), arr.mutable_data());
    return arr;
}

ClassMap classmap_from_array(const py::array_t<int, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 2) throw ValidationError("class map must be a 2-d array");
    ClassMap m(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + m.pixel_count(), m.ids.begin());
    return m;
}

py::array_t<int> array_from_classmap(const ClassMap& m) {
    py::array_t<int> arr({static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width)});
    std::copy(m.ids.begin(), m.ids.end(), arr.mutable_data());
    return arr;
}

py::array_t<uint8_t> array_from_rgb(const RgbImage8& img) {
    py::array_t<uint8_t> arr({static_cast<py::ssize_t>(img.height), static_cast<py::ssize_t>(img.width),
                              static_cast<py::ssize_t>(3)});
    std::copy(img.px.begin(), img.px.end(), arr.mutable_data());
    return arr;
}

RgbImage8 rgb_from_array(const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& arr) {
    if (arr.ndim() != 3 || arr.shape(2) != 3) throw ValidationError("rgb image must be {H,W,3} uint8");
    RgbImage8 img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
    std::copy(arr.data(), arr.data() + img.px.size(), img.px.begin());
    return img;
}

ConditionVector condition_from_bits(const std::vector<int>& bits) {
    ConditionVector c;
    c.bits = bits;
    return c;
}

FeatureSet featureset_from_array(const DoubleArray& arr) {
    if (arr.ndim() != 2) throw ValidationError("feature set must be a {n,f} array");
    FeatureSet fs;
    fs.matrix = tensor_from_array(arr);
    fs.extractor_id = "external";
    return fs;
}

// Checkpoint-driven class- or text-conditioned sampling.
class DiffusionSampler {
public:
    explicit DiffusionSampler(const std::string& checkpoint_path)
        : model_(diffusion_model_from_checkpoint(load_checkpoint(checkpoint_path))) {}

    int input_size() const { return model_.cfg.input_size; }
    int num_classes() const { return model_.palette.num_classes; }
    std::vector<std::string> class_names() const { return model_.palette.class_names; }

    py::dict sample_with(const Tensor& sem_emb, uint64_t seed, int index) {
        Rng rng = rng_for(seed, "sample/" + std::to_string(index));
        const int s = model_.cfg.input_size;
        SampleResult res = sample(make_eps_fn(model_, sem_emb), model_.schedule, 6, s, s,
                                  model_.schedule.T, rng);
        Tensor image({3, s, s}), mask({3, s, s});
        unpack_pair(res.output, image, mask);
        py::dict out;
        out["image"] = array_from_rgb(image_from_chw(image));
        out["mask"] = array_from_rgb(image_from_chw(mask));
        out["classmap"] = array_from_classmap(decode_mask_chw(mask, model_.palette));
        out["pair"] = array_from_tensor(res.output.data);
        return out;
    }

    py::dict sample_classes(const std::vector<int>& class_ids, uint64_t seed, int index) {
        ConditionVector cond;
        cond.bits.assign(static_cast<size_t>(model_.palette.num_classes), 0);
        for (int id : class_ids) {
            require(id >= 1 && id < model_.palette.num_classes, "class id out of range");
            cond.bits[static_cast<size_t>(id)] = 1;
        }
        return sample_with(model_.class_enc.encode(cond).vec, seed, index);
    }

    py::dict sample_prompt(const std::string& prompt, uint64_t seed, int index) {
        return sample_with(model_.text_enc.encode(PromptText{prompt}).vec, seed, index);
    }

private:
    DiffusionModel model_;
};

class SrUpscaler {
public:
    explicit SrUpscaler(const std::string& checkpoint_path)
        : model_(sr_model_from_checkpoint(load_checkpoint(checkpoint_path))) {}

    py::array_t<double> upscale(const DoubleArray& pair) { return array_from_tensor(model_.forward(tensor_from_array(pair))); }

    py::array_t<double> upscale_cascade2(const DoubleArray& pair) {
        return array_from_tensor(upscale_cascade(model_, tensor_from_array(pair)));
    }

private:
    SrModel model_;
};

} // namespace

PYBIND11_MODULE(_cosimgen, m) {
    m.doc() = "joint image + segmentation mask generation core";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_RuntimeError);

    py::class_<ClassPalette>(m, "Palette")
        .def_readonly("num_classes", &ClassPalette::num_classes)
        .def_readonly("class_names", &ClassPalette::class_names)
        .def_readonly("min_pair_distance", &ClassPalette::min_pair_distance)
        .def_property_readonly("colors",
                               [](const ClassPalette& p) {
                                   std::vector<std::vector<int>> out;
                                   for (const Rgb& c : p.colors) out.push_back({c[0], c[1], c[2]});
                                   return out;
                               })
        .def("index_of", &ClassPalette::index_of)
        .def("to_json", [](const ClassPalette& p) { return palette_to_json(p); })
        .def_static("from_json", [](const std::string& text) { return palette_from_json(text); })
        .def_static("load", [](const std::string& path) { return load_palette(path); });

    m.def("build_palette", [](int n, std::vector<std::string> names) {
              return names.empty() ? build_palette(n) : build_palette(n, std::move(names));
          },
          py::arg("num_classes"), py::arg("class_names") = std::vector<std::string>{});
    m.def("encode_mask",
          [](const py::array_t<int, py::array::c_style | py::array::forcecast>& ids, const ClassPalette& p) {
              return array_from_rgb(encode_mask(classmap_from_array(ids), p));
          });
    m.def("decode_mask",
          [](const py::array_t<uint8_t, py::array::c_style | py::array::forcecast>& rgb, const ClassPalette& p) {
              return array_from_classmap(decode_mask(rgb_from_array(rgb), p));
          });
    m.def("golden_angle_deg", [] { return kGoldenAngleDeg; });

    m.def("pack_pair", [](const DoubleArray& image, const DoubleArray& mask) {
        return array_from_tensor(pack_pair(tensor_from_array(image), tensor_from_array(mask)).data);
    });
    m.def("unpack_pair", [](const DoubleArray& pair) {
        Tensor t = tensor_from_array(pair);
        Tensor image({3, t.dim(1), t.dim(2)}), mask({3, t.dim(1), t.dim(2)});
        PairTensor pt{std::move(t)};
        unpack_pair(pt, image, mask);
        return py::make_tuple(array_from_tensor(image), array_from_tensor(mask));
    });

    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def_readonly("betas", &NoiseSchedule::betas)
        .def_readonly("alphas", &NoiseSchedule::alphas)
        .def_readonly("alpha_bars", &NoiseSchedule::alpha_bars);
    m.def("make_schedule", &make_schedule, py::arg("T"), py::arg("beta_start"), py::arg("beta_end"));
    m.def("q_sample", [](const DoubleArray& x0, const NoiseSchedule& s, int t, const DoubleArray& eps) {
        return array_from_tensor(q_sample(tensor_from_array(x0), s, t, tensor_from_array(eps)));
    });
    m.def("predict_x0", [](const DoubleArray& x_t, const NoiseSchedule& s, int t, const DoubleArray& eps_hat) {
        return array_from_tensor(predict_x0(tensor_from_array(x_t), s, t, tensor_from_array(eps_hat)));
    });

    m.def("spatial_fuse", [](const DoubleArray& f, const DoubleArray& c_map) {
        return array_from_tensor(spatial_fuse(tensor_from_array(f), tensor_from_array(c_map)));
    });
    m.def("spectral_fuse", [](const DoubleArray& f, const DoubleArray& t_map) {
        return array_from_tensor(spectral_fuse(tensor_from_array(f), tensor_from_array(t_map)));
    });

    m.def("hashed_bow_embedding", [](const std::string& text, int dim) {
        return array_from_tensor(hashed_bow_embedding(text, dim));
    });

    m.def("triplet_loss", [](const DoubleArray& a, const DoubleArray& p, const DoubleArray& n) {
        return triplet_loss(tensor_from_array(a), tensor_from_array(p), tensor_from_array(n));
    });
    m.def("adversarial_loss_from_score", &adversarial_loss_from_score);
    m.def("discriminator_loss_from_scores", &discriminator_loss_from_scores);
    m.def("total_loss", [](double l_diff, double l_trip, double l_adv, double beta) {
              LossReport r = total_loss(l_diff, l_trip, l_adv, beta);
              py::dict d;
              d["l_diff"] = r.l_diff;
              d["l_trip"] = r.l_trip;
              d["l_adv"] = r.l_adv;
              d["l_total"] = r.l_total;
              d["beta"] = r.beta;
              return d;
          },
          py::arg("l_diff"), py::arg("l_trip"), py::arg("l_adv"), py::arg("beta") = 0.1);

    m.def("frechet_distance", [](const DoubleArray& a, const DoubleArray& b) {
        return frechet_distance(featureset_from_array(a), featureset_from_array(b));
    });
    m.def("kernel_distance", [](const DoubleArray& a, const DoubleArray& b) {
        return kernel_distance(featureset_from_array(a), featureset_from_array(b));
    });
    m.def("feature_distance", [](const DoubleArray& a, const DoubleArray& b) {
        return feature_distance(featureset_from_array(a), featureset_from_array(b));
    });
    m.def("ppv", [](const std::vector<std::vector<int>>& queried,
                    const std::vector<py::array_t<int, py::array::c_style | py::array::forcecast>>& maps) {
        std::vector<ConditionVector> conds;
        for (const auto& q : queried) conds.push_back(condition_from_bits(q));
        std::vector<ClassMap> cms;
        for (const auto& a : maps) cms.push_back(classmap_from_array(a));
        PpvReport r = ppv(conds, cms);
        py::dict d;
        d["value"] = r.value;
        d["strict"] = r.strict;
        d["pairs"] = r.pairs;
        return d;
    });

    m.def("synthesize_shapes_dataset",
          [](const std::string& root, int n, int size, uint64_t seed) {
              return synthesize_shapes_dataset(root, n, size, seed);
          },
          py::arg("root"), py::arg("n_samples"), py::arg("size"), py::arg("seed"));

    py::class_<DiffusionSampler>(m, "DiffusionSampler")
        .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
        .def_property_readonly("input_size", &DiffusionSampler::input_size)
        .def_property_readonly("num_classes", &DiffusionSampler::num_classes)
        .def_property_readonly("class_names", &DiffusionSampler::class_names)
        .def("sample_classes", &DiffusionSampler::sample_classes, py::arg("class_ids"), py::arg("seed") = 0,
             py::arg("index") = 0)
        .def("sample_prompt", &DiffusionSampler::sample_prompt, py::arg("prompt"), py::arg("seed") = 0,
             py::arg("index") = 0);

    py::class_<SrUpscaler>(m, "SrUpscaler")
        .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
        .def("upscale", &SrUpscaler::upscale)
        .def("upscale_cascade2", &SrUpscaler::upscale_cascade2);
}
