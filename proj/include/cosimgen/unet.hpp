#pragma once

#include <array>
#include <optional>
#include <vector>

#include "cosimgen/nn/layers.hpp"
#include "cosimgen/tensor.hpp"

namespace cosimgen {

struct UNetConfig {
    int in_channels = 6;
    int base_width = 64;
    std::vector<int> multipliers = {1, 2, 4, 8};
    int embed_dim = 512; // D, shared by all conditioning embeddings
    int input_size = 128;
    int gn_groups = 8;
};

struct ResolutionSpec {
    int base_width = 0;
    std::vector<int> multipliers;
    std::vector<std::array<int, 3>> levels; // (c_i, h_i, w_i)

    static ResolutionSpec make(int base_width, const std::vector<int>& multipliers, int input_size);
};

// Eq-style fusion primitives. spatial adds a 1 x h x w map across channels,
// spectral adds a c x 1 x 1 map across space; both are pure.
Tensor spatial_fuse(const Tensor& f, const Tensor& c_map);
Tensor spectral_fuse(const Tensor& f, const Tensor& t_map);

// Residual block with Spectron fusion after the first normalization:
// gn1 -> +spatial(C_emb) -> +spectral(T_emb) -> silu -> conv1 -> gn2 -> silu
// -> conv2 -> + shortcut. conv2 starts near zero so fresh blocks are almost
// the identity.
struct ResBlock {
    ResBlock(int cin, int cout, int h, int w, int embed_dim, int gn_groups, Rng& rng);

    Tensor project_spatial(const Tensor& c_emb) const;  // {1,h,w}
    Tensor project_spectral(const Tensor& t_emb) const; // {cin,1,1}

    struct Cache {
        Tensor x, n1, fused, a1, c1, n2, a2;
        Tensor cmap, tmap;
    };
    Tensor forward(const Tensor& x, const Tensor& t_emb, const Tensor& c_emb, Cache& cache) const;
    // Accumulates into parameter grads and the two embedding grads.
    Tensor backward(const Cache& cache, const Tensor& t_emb, const Tensor& c_emb, const Tensor& gy,
                    Tensor& g_temb, Tensor& g_cemb, bool acc = true);
    void append_params(const std::string& prefix, nn::ParamRefs& out);

    int cin, cout, h, w;
    nn::GroupNorm gn1;
    nn::Dense spatial;  // D -> h*w
    nn::Dense spectral; // D -> cin
    nn::Conv2d conv1;
    nn::GroupNorm gn2;
    nn::Conv2d conv2;
    std::optional<nn::Conv2d> skip; // 1x1 when cin != cout
};

// Conditional residual U-Net epsilon-predictor. Every block (encoder,
// bottleneck, decoder) applies spatial then spectral fusion on its input.
class UNet {
public:
    UNet(const UNetConfig& cfg, Rng& rng);

    struct Cache {
        Tensor x;
        Tensor stem_out;
        std::vector<ResBlock::Cache> enc;
        std::vector<Tensor> skips;
        std::vector<Tensor> down_in;
        ResBlock::Cache mid;
        std::vector<ResBlock::Cache> dec;
        std::vector<Tensor> up_in; // nearest-upsampled input to up conv, index i-1
        Tensor head_in, head_n, head_a;
    };

    Tensor forward(const Tensor& x, const Tensor& t_emb, const Tensor& c_emb, Cache& cache) const;
    Tensor forward(const Tensor& x, const Tensor& t_emb, const Tensor& c_emb) const;
    Tensor backward(const Cache& cache, const Tensor& t_emb, const Tensor& c_emb, const Tensor& gy,
                    Tensor& g_temb, Tensor& g_cemb, bool acc = true);

    void append_params(const std::string& prefix, nn::ParamRefs& out);
    ResolutionSpec resolution_spec() const;
    const UNetConfig& config() const { return cfg_; }

    int num_levels() const { return static_cast<int>(cfg_.multipliers.size()); }
    const ResBlock& enc_block(int i) const { return enc_[static_cast<size_t>(i)]; }
    const ResBlock& mid_block() const { return *mid_; }
    const ResBlock& dec_block(int i) const { return dec_[static_cast<size_t>(i)]; }

private:
    UNetConfig cfg_;
    nn::Conv2d stem_;
    std::vector<ResBlock> enc_;
    std::vector<nn::Conv2d> downs_; // downs_[i] after encoder level i, stride 2
    std::optional<ResBlock> mid_;
    std::vector<ResBlock> dec_;
    std::vector<nn::Conv2d> ups_; // ups_[i-1] lifts level i output to level i-1 width
    nn::GroupNorm out_gn_;
    nn::Conv2d out_conv_;
};

} // namespace cosimgen
