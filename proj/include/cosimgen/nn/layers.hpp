#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cosimgen/tensor.hpp"

namespace cosimgen::nn {

// A trainable tensor plus its gradient accumulator. Names are assigned when a
// model collects its parameters and double as checkpoint keys.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    void init(std::vector<int> shape) {
        value = Tensor(shape);
        grad = Tensor(std::move(shape));
    }
    void zero_grad() { grad.fill(0.0); }
};

using ParamRefs = std::vector<Parameter*>;

// C(m,n) = alpha * op(A) * op(B) + beta * C, row-major storage.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, const double* b,
          double beta, double* c);

// y = W x + b with W stored out x in.
class Dense {
public:
    Dense() = default;
    Dense(int in_dim, int out_dim, Rng& rng, double gain = 1.0);

    Tensor forward(const Tensor& x) const;
    // Returns gx; accumulates parameter gradients unless acc is false.
    Tensor backward(const Tensor& x, const Tensor& gy, bool acc = true);

    void append_params(const std::string& prefix, ParamRefs& out);
    int in_dim() const { return in_; }
    int out_dim() const { return out_; }

    Parameter w, b;

private:
    int in_ = 0, out_ = 0;
};

// 3x3-style convolution over {C,H,W} via im2col + GEMM.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, Rng& rng, double gain = 1.0);

    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& gy, bool acc = true);

    void append_params(const std::string& prefix, ParamRefs& out);
    int out_size(int in_size) const { return (in_size + 2 * pad_ - k_) / stride_ + 1; }
    int in_channels() const { return cin_; }
    int out_channels() const { return cout_; }

    Parameter w, b; // w: {cout, cin*k*k}

private:
    int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 0, pad_ = 0;
};

// Group normalization over {C,H,W} with per-channel affine.
class GroupNorm {
public:
    GroupNorm() = default;
    GroupNorm(int channels, int groups, double eps = 1e-5);

    Tensor forward(const Tensor& x) const;
    Tensor backward(const Tensor& x, const Tensor& gy, bool acc = true);

    void append_params(const std::string& prefix, ParamRefs& out);
    int channels() const { return channels_; }

    Parameter gamma, beta;

private:
    int channels_ = 0, groups_ = 0;
    double eps_ = 1e-5;
};

Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& x, const Tensor& gy);

double sigmoid(double x);

Tensor nearest_upsample2(const Tensor& x);
Tensor nearest_upsample2_backward(const Tensor& gy);

// {c*r*r, h, w} -> {c, r*h, r*w}; output channel c at (r*y+a, r*x+b) reads
// input channel c*r*r + a*r + b at (y, x).
Tensor pixel_shuffle(const Tensor& x, int r);
Tensor pixel_shuffle_backward(const Tensor& gy, int r);

Tensor global_avg_pool(const Tensor& x); // {C,H,W} -> {C}
Tensor global_avg_pool_backward(const Tensor& gy, int h, int w);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

} // namespace cosimgen::nn
