#include "cosimgen/unet.hpp"

#include <cmath>

#include "cosimgen/common.hpp"

namespace cosimgen {

namespace {
constexpr double kNearZeroGain = 1e-3; // keeps residual tails alive for gradient audits
}

ResolutionSpec ResolutionSpec::make(int base_width, const std::vector<int>& multipliers, int input_size) {
    require(base_width > 0 && !multipliers.empty() && input_size > 0, "ResolutionSpec: bad arguments");
    ResolutionSpec spec;
    spec.base_width = base_width;
    spec.multipliers = multipliers;
    int size = input_size;
    for (size_t i = 0; i < multipliers.size(); ++i) {
        require(multipliers[i] > 0, "ResolutionSpec: multipliers must be positive");
        require(i == 0 || multipliers[i] >= multipliers[i - 1], "ResolutionSpec: multipliers must be non-decreasing");
        require(size >= 1, "ResolutionSpec: input too small for level count");
        spec.levels.push_back({base_width * multipliers[i], size, size});
        if (i + 1 < multipliers.size()) {
            require(size % 2 == 0, "ResolutionSpec: size must halve cleanly");
            size /= 2;
        }
    }
    return spec;
}

Tensor spatial_fuse(const Tensor& f, const Tensor& c_map) {
    require(f.rank() == 3, "spatial_fuse: feature must be {c,h,w}");
    require(c_map.rank() == 3 && c_map.dim(0) == 1 && c_map.dim(1) == f.dim(1) && c_map.dim(2) == f.dim(2),
            "spatial_fuse: map must be {1,h,w} matching the feature");
    Tensor out(f.shape());
    const long plane = static_cast<long>(f.dim(1)) * f.dim(2);
    for (int ch = 0; ch < f.dim(0); ++ch) {
        const double* src = f.data() + static_cast<size_t>(ch) * plane;
        double* dst = out.data() + static_cast<size_t>(ch) * plane;
        for (long i = 0; i < plane; ++i) dst[i] = src[i] + c_map[i];
    }
    return out;
}

Tensor spectral_fuse(const Tensor& f, const Tensor& t_map) {
    require(f.rank() == 3, "spectral_fuse: feature must be {c,h,w}");
    require(t_map.rank() == 3 && t_map.dim(0) == f.dim(0) && t_map.dim(1) == 1 && t_map.dim(2) == 1,
            "spectral_fuse: map must be {c,1,1} matching the feature");
    Tensor out(f.shape());
    const long plane = static_cast<long>(f.dim(1)) * f.dim(2);
    for (int ch = 0; ch < f.dim(0); ++ch) {
        const double add = t_map[ch];
        const double* src = f.data() + static_cast<size_t>(ch) * plane;
        double* dst = out.data() + static_cast<size_t>(ch) * plane;
        for (long i = 0; i < plane; ++i) dst[i] = src[i] + add;
    }
    return out;
}

ResBlock::ResBlock(int cin_, int cout_, int h_, int w_, int embed_dim, int gn_groups, Rng& rng)
    : cin(cin_),
      cout(cout_),
      h(h_),
      w(w_),
      gn1(cin_, gn_groups),
      spatial(embed_dim, h_ * w_, rng),
      spectral(embed_dim, cin_, rng),
      conv1(cin_, cout_, 3, 1, 1, rng, std::sqrt(2.0)),
      gn2(cout_, gn_groups),
      conv2(cout_, cout_, 3, 1, 1, rng, kNearZeroGain) {
    if (cin_ != cout_) skip.emplace(cin_, cout_, 1, 1, 0, rng);
}

Tensor ResBlock::project_spatial(const Tensor& c_emb) const {
    Tensor flat = spatial.forward(c_emb);
    return Tensor({1, h, w}, std::vector<double>(flat.data(), flat.data() + flat.size()));
}

Tensor ResBlock::project_spectral(const Tensor& t_emb) const {
    Tensor flat = spectral.forward(t_emb);
    return Tensor({cin, 1, 1}, std::vector<double>(flat.data(), flat.data() + flat.size()));
}

Tensor ResBlock::forward(const Tensor& x, const Tensor& t_emb, const Tensor& c_emb, Cache& cache) const {
    require(x.rank() == 3 && x.dim(0) == cin && x.dim(1) == h && x.dim(2) == w, "ResBlock: input shape mismatch");
    cache.x = x;
    cache.n1 = gn1.forward(x);
    cache.cmap = project_spatial(c_emb);
    cache.tmap = project_spectral(t_emb);
    cache.fused = spectral_fuse(spatial_fuse(cache.n1, cache.cmap), cache.tmap);
    cache.a1 = nn::silu(cache.fused);
    cache.c1 = conv1.forward(cache.a1);
    cache.n2 = gn2.forward(cache.c1);
    cache.a2 = nn::silu(cache.n2);
    Tensor y = conv2.forward(cache.a2);
    if (skip)
        y += skip->forward(x);
    else
        y += x;
    return y;
}

Tensor ResBlock::backward(const Cache& cache, const Tensor& t_emb, const Tensor& c_emb, const Tensor& gy,
                          Tensor& g_temb, Tensor& g_cemb, bool acc) {
    Tensor g = conv2.backward(cache.a2, gy, acc);
    g = nn::silu_backward(cache.n2, g);
    g = gn2.backward(cache.c1, g, acc);
    g = conv1.backward(cache.a1, g, acc);
    Tensor g_fused = nn::silu_backward(cache.fused, g);

    // Both fusions are plain adds: the feature grad passes through, the maps
    // collect reductions over channels (spatial) and space (spectral).
    const long plane = static_cast<long>(h) * w;
    Tensor g_cmap({h * w});
    Tensor g_tmap({cin});
    for (int ch = 0; ch < cin; ++ch) {
        const double* src = g_fused.data() + static_cast<size_t>(ch) * plane;
        double s = 0.0;
        for (long i = 0; i < plane; ++i) {
            g_cmap[i] += src[i];
            s += src[i];
        }
        g_tmap[ch] = s;
    }
    {
        Tensor gc = spatial.backward(c_emb, g_cmap, acc);
        Tensor gt = spectral.backward(t_emb, g_tmap, acc);
        g_cemb += gc;
        g_temb += gt;
    }

    Tensor gx = gn1.backward(cache.x, g_fused, acc);
    if (skip)
        gx += skip->backward(cache.x, gy, acc);
    else
        gx += gy;
    return gx;
}

void ResBlock::append_params(const std::string& prefix, nn::ParamRefs& out) {
    gn1.append_params(prefix + ".gn1", out);
    spatial.append_params(prefix + ".spatial", out);
    spectral.append_params(prefix + ".spectral", out);
    conv1.append_params(prefix + ".conv1", out);
    gn2.append_params(prefix + ".gn2", out);
    conv2.append_params(prefix + ".conv2", out);
    if (skip) skip->append_params(prefix + ".skip", out);
}

UNet::UNet(const UNetConfig& cfg, Rng& rng)
    : cfg_(cfg),
      stem_(cfg.in_channels, cfg.base_width * cfg.multipliers.at(0), 3, 1, 1, rng, std::sqrt(2.0)),
      out_gn_(cfg.base_width * cfg.multipliers.at(0), cfg.gn_groups),
      out_conv_(cfg.base_width * cfg.multipliers.at(0), cfg.in_channels, 3, 1, 1, rng, kNearZeroGain) {
    const int levels = static_cast<int>(cfg.multipliers.size());
    require(levels >= 1, "UNet: need at least one level");
    const ResolutionSpec spec = ResolutionSpec::make(cfg.base_width, cfg.multipliers, cfg.input_size);

    for (int i = 0; i < levels; ++i) {
        const int w_i = spec.levels[static_cast<size_t>(i)][0];
        const int s_i = spec.levels[static_cast<size_t>(i)][1];
        const int cin = (i == 0) ? cfg.base_width * cfg.multipliers[0] : spec.levels[static_cast<size_t>(i - 1)][0];
        enc_.emplace_back(cin, w_i, s_i, s_i, cfg.embed_dim, cfg.gn_groups, rng);
        if (i < levels - 1) downs_.emplace_back(w_i, w_i, 3, 2, 1, rng, std::sqrt(2.0));
    }
    {
        const int w_b = spec.levels.back()[0];
        const int s_b = spec.levels.back()[1];
        mid_.emplace(w_b, w_b, s_b, s_b, cfg.embed_dim, cfg.gn_groups, rng);
    }
    for (int i = 0; i < levels; ++i) {
        const int w_i = spec.levels[static_cast<size_t>(i)][0];
        const int s_i = spec.levels[static_cast<size_t>(i)][1];
        dec_.emplace_back(2 * w_i, w_i, s_i, s_i, cfg.embed_dim, cfg.gn_groups, rng);
        if (i >= 1) {
            const int w_prev = spec.levels[static_cast<size_t>(i - 1)][0];
            ups_.emplace_back(w_i, w_prev, 3, 1, 1, rng, std::sqrt(2.0));
        }
    }
}

Tensor UNet::forward(const Tensor& x, const Tensor& t_emb, const Tensor& c_emb, Cache& cache) const {
    require(x.rank() == 3 && x.dim(0) == cfg_.in_channels && x.dim(1) == cfg_.input_size &&
                x.dim(2) == cfg_.input_size,
            "unet_forward: input shape mismatch");
    require(t_emb.size() == cfg_.embed_dim && c_emb.size() == cfg_.embed_dim,
            "unet_forward: embedding width mismatch");
    const int levels = num_levels();
    cache.x = x;
    cache.enc.assign(static_cast<size_t>(levels), ResBlock::Cache{});
    cache.skips.assign(static_cast<size_t>(levels), Tensor());
    cache.down_in.assign(static_cast<size_t>(levels), Tensor());
    cache.dec.assign(static_cast<size_t>(levels), ResBlock::Cache{});
    cache.up_in.assign(static_cast<size_t>(levels), Tensor());

    cache.stem_out = stem_.forward(x);
    Tensor h = cache.stem_out;
    for (int i = 0; i < levels; ++i) {
        h = enc_[static_cast<size_t>(i)].forward(h, t_emb, c_emb, cache.enc[static_cast<size_t>(i)]);
        cache.skips[static_cast<size_t>(i)] = h;
        if (i < levels - 1) {
            cache.down_in[static_cast<size_t>(i)] = h;
            h = downs_[static_cast<size_t>(i)].forward(h);
        }
    }
    h = mid_->forward(h, t_emb, c_emb, cache.mid);
    for (int i = levels - 1; i >= 0; --i) {
        Tensor cat = nn::concat_channels(h, cache.skips[static_cast<size_t>(i)]);
        h = dec_[static_cast<size_t>(i)].forward(cat, t_emb, c_emb, cache.dec[static_cast<size_t>(i)]);
        if (i >= 1) {
            Tensor up = nn::nearest_upsample2(h);
            cache.up_in[static_cast<size_t>(i)] = up;
            h = ups_[static_cast<size_t>(i - 1)].forward(up);
        }
    }
    cache.head_in = h;
    cache.head_n = out_gn_.forward(h);
    cache.head_a = nn::silu(cache.head_n);
    return out_conv_.forward(cache.head_a);
}

Tensor UNet::forward(const Tensor& x, const Tensor& t_emb, const Tensor& c_emb) const {
    Cache cache;
    return forward(x, t_emb, c_emb, cache);
}

Tensor UNet::backward(const Cache& cache, const Tensor& t_emb, const Tensor& c_emb, const Tensor& gy,
                      Tensor& g_temb, Tensor& g_cemb, bool acc) {
    const int levels = num_levels();
    Tensor g = out_conv_.backward(cache.head_a, gy, acc);
    g = nn::silu_backward(cache.head_n, g);
    g = out_gn_.backward(cache.head_in, g, acc);

    // Decoder ran i = levels-1 .. 0, so its backward visits i = 0 .. levels-1.
    std::vector<Tensor> g_skip(static_cast<size_t>(levels));
    Tensor g_mid_out;
    for (int i = 0; i < levels; ++i) {
        Tensor g_cat = dec_[static_cast<size_t>(i)].backward(cache.dec[static_cast<size_t>(i)], t_emb, c_emb, g,
                                                             g_temb, g_cemb, acc);
        const int w_i = dec_[static_cast<size_t>(i)].cout;
        Tensor g_cur, g_sk;
        nn::split_channels(g_cat, w_i, g_cur, g_sk);
        g_skip[static_cast<size_t>(i)] = std::move(g_sk);
        if (i < levels - 1) {
            Tensor g_up = ups_[static_cast<size_t>(i)].backward(cache.up_in[static_cast<size_t>(i + 1)], g_cur, acc);
            g = nn::nearest_upsample2_backward(g_up);
        } else {
            g_mid_out = std::move(g_cur);
        }
    }

    Tensor gh = mid_->backward(cache.mid, t_emb, c_emb, g_mid_out, g_temb, g_cemb, acc);
    for (int i = levels - 1; i >= 0; --i) {
        Tensor g_e = (i < levels - 1)
                         ? downs_[static_cast<size_t>(i)].backward(cache.down_in[static_cast<size_t>(i)], gh, acc)
                         : std::move(gh);
        g_e += g_skip[static_cast<size_t>(i)];
        gh = enc_[static_cast<size_t>(i)].backward(cache.enc[static_cast<size_t>(i)], t_emb, c_emb, g_e, g_temb,
                                                   g_cemb, acc);
    }
    return stem_.backward(cache.x, gh, acc);
}

void UNet::append_params(const std::string& prefix, nn::ParamRefs& out) {
    stem_.append_params(prefix + ".stem", out);
    for (size_t i = 0; i < enc_.size(); ++i) enc_[i].append_params(prefix + ".enc" + std::to_string(i), out);
    for (size_t i = 0; i < downs_.size(); ++i) downs_[i].append_params(prefix + ".down" + std::to_string(i), out);
    mid_->append_params(prefix + ".mid", out);
    for (size_t i = 0; i < dec_.size(); ++i) dec_[i].append_params(prefix + ".dec" + std::to_string(i), out);
    for (size_t i = 0; i < ups_.size(); ++i) ups_[i].append_params(prefix + ".up" + std::to_string(i + 1), out);
    out_gn_.append_params(prefix + ".out_gn", out);
    out_conv_.append_params(prefix + ".out", out);
}

ResolutionSpec UNet::resolution_spec() const {
    return ResolutionSpec::make(cfg_.base_width, cfg_.multipliers, cfg_.input_size);
}

} // namespace cosimgen
