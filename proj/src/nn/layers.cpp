#include "cosimgen/nn/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "cosimgen/common.hpp"

namespace cosimgen::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Gathers conv patches into a (cin*k*k) x (ho*wo) matrix.
void im2col(const double* x, int cin, int h, int w, int k, int stride, int pad, int ho, int wo, double* col) {
    const int cols = ho * wo;
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = col + (static_cast<size_t>(c) * k * k + static_cast<size_t>(ky) * k + kx) * cols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) {
                        std::fill(row + static_cast<size_t>(oy) * wo, row + static_cast<size_t>(oy + 1) * wo, 0.0);
                        continue;
                    }
                    const double* src = x + (static_cast<size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        row[static_cast<size_t>(oy) * wo + ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

// Scatter-adds a column matrix back onto the input layout.
void col2im(const double* col, int cin, int h, int w, int k, int stride, int pad, int ho, int wo, double* x) {
    const int cols = ho * wo;
    for (int c = 0; c < cin; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row = col + (static_cast<size_t>(c) * k * k + static_cast<size_t>(ky) * k + kx) * cols;
                for (int oy = 0; oy < ho; ++oy) {
                    const int iy = oy * stride + ky - pad;
                    if (iy < 0 || iy >= h) continue;
                    double* dst = x + (static_cast<size_t>(c) * h + iy) * w;
                    for (int ox = 0; ox < wo; ++ox) {
                        const int ix = ox * stride + kx - pad;
                        if (ix >= 0 && ix < w) dst[ix] += row[static_cast<size_t>(oy) * wo + ox];
                    }
                }
            }
        }
    }
}

} // namespace

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, const double* b,
          double beta, double* c) {
    MapMat cm(c, m, n);
    if (beta == 0.0)
        cm.setZero();
    else if (beta != 1.0)
        cm *= beta;
    if (!trans_a && !trans_b) {
        CMapMat am(a, m, k), bm(b, k, n);
        cm.noalias() += alpha * am * bm;
    } else if (trans_a && !trans_b) {
        CMapMat am(a, k, m), bm(b, k, n);
        cm.noalias() += alpha * am.transpose() * bm;
    } else if (!trans_a && trans_b) {
        CMapMat am(a, m, k), bm(b, n, k);
        cm.noalias() += alpha * am * bm.transpose();
    } else {
        CMapMat am(a, k, m), bm(b, n, k);
        cm.noalias() += alpha * am.transpose() * bm.transpose();
    }
}

Dense::Dense(int in_dim, int out_dim, Rng& rng, double gain) : in_(in_dim), out_(out_dim) {
    require(in_dim > 0 && out_dim > 0, "Dense dims must be positive");
    w.init({out_, in_});
    b.init({out_});
    const double std = gain / std::sqrt(static_cast<double>(in_));
    for (int64_t i = 0; i < w.value.size(); ++i) w.value[i] = rng.normal() * std;
}

Tensor Dense::forward(const Tensor& x) const {
    require(x.size() == in_, "Dense: input size mismatch");
    Tensor y({out_});
    gemm(false, false, out_, 1, in_, 1.0, w.value.data(), x.data(), 0.0, y.data());
    for (int o = 0; o < out_; ++o) y[o] += b.value[o];
    return y;
}

Tensor Dense::backward(const Tensor& x, const Tensor& gy, bool acc) {
    require(x.size() == in_ && gy.size() == out_, "Dense backward: size mismatch");
    if (acc) {
        // gw += gy (out x 1) * x^T (1 x in)
        gemm(false, false, out_, in_, 1, 1.0, gy.data(), x.data(), 1.0, w.grad.data());
        for (int o = 0; o < out_; ++o) b.grad[o] += gy[o];
    }
    Tensor gx({in_});
    gemm(true, false, in_, 1, out_, 1.0, w.value.data(), gy.data(), 0.0, gx.data());
    return gx;
}

void Dense::append_params(const std::string& prefix, ParamRefs& out) {
    w.name = prefix + ".w";
    b.name = prefix + ".b";
    out.push_back(&w);
    out.push_back(&b);
}

Conv2d::Conv2d(int in_ch, int out_ch, int ksize, int stride, int pad, Rng& rng, double gain)
    : cin_(in_ch), cout_(out_ch), k_(ksize), stride_(stride), pad_(pad) {
    require(in_ch > 0 && out_ch > 0 && ksize > 0 && stride > 0 && pad >= 0, "Conv2d: bad geometry");
    w.init({cout_, cin_ * k_ * k_});
    b.init({cout_});
    const double std = gain / std::sqrt(static_cast<double>(cin_ * k_ * k_));
    for (int64_t i = 0; i < w.value.size(); ++i) w.value[i] = rng.normal() * std;
}

Tensor Conv2d::forward(const Tensor& x) const {
    require(x.rank() == 3 && x.dim(0) == cin_, "Conv2d: input must be {cin,h,w}");
    const int h = x.dim(1), w_in = x.dim(2);
    const int ho = out_size(h), wo = out_size(w_in);
    require(ho > 0 && wo > 0, "Conv2d: output would be empty");
    std::vector<double> col(static_cast<size_t>(cin_ * k_ * k_) * ho * wo);
    im2col(x.data(), cin_, h, w_in, k_, stride_, pad_, ho, wo, col.data());
    Tensor y({cout_, ho, wo});
    gemm(false, false, cout_, ho * wo, cin_ * k_ * k_, 1.0, w.value.data(), col.data(), 0.0, y.data());
    for (int c = 0; c < cout_; ++c) {
        const double bias = b.value[c];
        double* plane = y.data() + static_cast<size_t>(c) * ho * wo;
        for (int i = 0; i < ho * wo; ++i) plane[i] += bias;
    }
    return y;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy, bool acc) {
    require(x.rank() == 3 && x.dim(0) == cin_, "Conv2d backward: x shape mismatch");
    const int h = x.dim(1), w_in = x.dim(2);
    const int ho = out_size(h), wo = out_size(w_in);
    require(gy.rank() == 3 && gy.dim(0) == cout_ && gy.dim(1) == ho && gy.dim(2) == wo,
            "Conv2d backward: gy shape mismatch");
    const int patch = cin_ * k_ * k_;
    std::vector<double> col(static_cast<size_t>(patch) * ho * wo);
    im2col(x.data(), cin_, h, w_in, k_, stride_, pad_, ho, wo, col.data());
    if (acc) {
        gemm(false, true, cout_, patch, ho * wo, 1.0, gy.data(), col.data(), 1.0, w.grad.data());
        for (int c = 0; c < cout_; ++c) {
            const double* plane = gy.data() + static_cast<size_t>(c) * ho * wo;
            double s = 0.0;
            for (int i = 0; i < ho * wo; ++i) s += plane[i];
            b.grad[c] += s;
        }
    }
    std::vector<double> gcol(col.size());
    gemm(true, false, patch, ho * wo, cout_, 1.0, w.value.data(), gy.data(), 0.0, gcol.data());
    Tensor gx(x.shape());
    col2im(gcol.data(), cin_, h, w_in, k_, stride_, pad_, ho, wo, gx.data());
    return gx;
}

void Conv2d::append_params(const std::string& prefix, ParamRefs& out) {
    w.name = prefix + ".w";
    b.name = prefix + ".b";
    out.push_back(&w);
    out.push_back(&b);
}

GroupNorm::GroupNorm(int channels, int groups, double eps) : channels_(channels), groups_(groups), eps_(eps) {
    require(channels > 0 && groups > 0 && channels % groups == 0, "GroupNorm: channels must divide into groups");
    gamma.init({channels_});
    beta.init({channels_});
    gamma.value.fill(1.0);
}

Tensor GroupNorm::forward(const Tensor& x) const {
    require(x.rank() == 3 && x.dim(0) == channels_, "GroupNorm: input must be {c,h,w}");
    const long plane = static_cast<long>(x.dim(1)) * x.dim(2);
    const int per = channels_ / groups_;
    Tensor y(x.shape());
    for (int g = 0; g < groups_; ++g) {
        const double* xs = x.data() + static_cast<size_t>(g) * per * plane;
        const long n = per * plane;
        double mean = 0.0;
        for (long i = 0; i < n; ++i) mean += xs[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (long i = 0; i < n; ++i) {
            const double d = xs[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps_);
        for (int cc = 0; cc < per; ++cc) {
            const int c = g * per + cc;
            const double a = gamma.value[c] * inv;
            const double off = beta.value[c] - a * mean;
            const double* src = x.data() + static_cast<size_t>(c) * plane;
            double* dst = y.data() + static_cast<size_t>(c) * plane;
            for (long i = 0; i < plane; ++i) dst[i] = a * src[i] + off;
        }
    }
    return y;
}

Tensor GroupNorm::backward(const Tensor& x, const Tensor& gy, bool acc) {
    require(x.same_shape(gy) && x.rank() == 3 && x.dim(0) == channels_, "GroupNorm backward: shape mismatch");
    const long plane = static_cast<long>(x.dim(1)) * x.dim(2);
    const int per = channels_ / groups_;
    Tensor gx(x.shape());
    for (int g = 0; g < groups_; ++g) {
        const double* xs = x.data() + static_cast<size_t>(g) * per * plane;
        const long n = per * plane;
        double mean = 0.0;
        for (long i = 0; i < n; ++i) mean += xs[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (long i = 0; i < n; ++i) {
            const double d = xs[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps_);
        // Reduce dxhat = gy*gamma and dxhat*xhat over the group, then distribute.
        double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
        for (int cc = 0; cc < per; ++cc) {
            const int c = g * per + cc;
            const double gam = gamma.value[c];
            const double* xsrc = x.data() + static_cast<size_t>(c) * plane;
            const double* gsrc = gy.data() + static_cast<size_t>(c) * plane;
            double gsum = 0.0, gxsum = 0.0;
            for (long i = 0; i < plane; ++i) {
                const double xhat = (xsrc[i] - mean) * inv;
                gsum += gsrc[i];
                gxsum += gsrc[i] * xhat;
            }
            if (acc) {
                gamma.grad[c] += gxsum;
                beta.grad[c] += gsum;
            }
            sum_dxhat += gam * gsum;
            sum_dxhat_xhat += gam * gxsum;
        }
        const double inv_n = 1.0 / static_cast<double>(n);
        for (int cc = 0; cc < per; ++cc) {
            const int c = g * per + cc;
            const double gam = gamma.value[c];
            const double* xsrc = x.data() + static_cast<size_t>(c) * plane;
            const double* gsrc = gy.data() + static_cast<size_t>(c) * plane;
            double* dst = gx.data() + static_cast<size_t>(c) * plane;
            for (long i = 0; i < plane; ++i) {
                const double xhat = (xsrc[i] - mean) * inv;
                dst[i] = inv * (gam * gsrc[i] - inv_n * (sum_dxhat + xhat * sum_dxhat_xhat));
            }
        }
    }
    return gx;
}

void GroupNorm::append_params(const std::string& prefix, ParamRefs& out) {
    gamma.name = prefix + ".gamma";
    beta.name = prefix + ".beta";
    out.push_back(&gamma);
    out.push_back(&beta);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Tensor silu(const Tensor& x) {
    Tensor y(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid(x[i]);
    return y;
}

Tensor silu_backward(const Tensor& x, const Tensor& gy) {
    require(x.same_shape(gy), "silu backward: shape mismatch");
    Tensor gx(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
        const double s = sigmoid(x[i]);
        gx[i] = gy[i] * s * (1.0 + x[i] * (1.0 - s));
    }
    return gx;
}

Tensor nearest_upsample2(const Tensor& x) {
    require(x.rank() == 3, "nearest_upsample2: need {c,h,w}");
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor y({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx) y.at(ch, yy, xx) = x.at(ch, yy / 2, xx / 2);
    return y;
}

Tensor nearest_upsample2_backward(const Tensor& gy) {
    require(gy.rank() == 3 && gy.dim(1) % 2 == 0 && gy.dim(2) % 2 == 0, "nearest backward: bad shape");
    const int c = gy.dim(0), h = gy.dim(1) / 2, w = gy.dim(2) / 2;
    Tensor gx({c, h, w});
    for (int ch = 0; ch < c; ++ch)
        for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx) gx.at(ch, yy / 2, xx / 2) += gy.at(ch, yy, xx);
    return gx;
}

Tensor pixel_shuffle(const Tensor& x, int r) {
    require(x.rank() == 3 && r >= 1 && x.dim(0) % (r * r) == 0, "pixel_shuffle: channels must divide r^2");
    const int c = x.dim(0) / (r * r), h = x.dim(1), w = x.dim(2);
    Tensor y({c, r * h, r * w});
    for (int cc = 0; cc < c; ++cc)
        for (int a = 0; a < r; ++a)
            for (int b2 = 0; b2 < r; ++b2) {
                const int src_c = cc * r * r + a * r + b2;
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx) y.at(cc, r * yy + a, r * xx + b2) = x.at(src_c, yy, xx);
            }
    return y;
}

Tensor pixel_shuffle_backward(const Tensor& gy, int r) {
    require(gy.rank() == 3 && gy.dim(1) % r == 0 && gy.dim(2) % r == 0, "pixel_shuffle backward: bad shape");
    const int c = gy.dim(0), h = gy.dim(1) / r, w = gy.dim(2) / r;
    Tensor gx({c * r * r, h, w});
    for (int cc = 0; cc < c; ++cc)
        for (int a = 0; a < r; ++a)
            for (int b2 = 0; b2 < r; ++b2) {
                const int src_c = cc * r * r + a * r + b2;
                for (int yy = 0; yy < h; ++yy)
                    for (int xx = 0; xx < w; ++xx) gx.at(src_c, yy, xx) = gy.at(cc, r * yy + a, r * xx + b2);
            }
    return gx;
}

Tensor global_avg_pool(const Tensor& x) {
    require(x.rank() == 3, "global_avg_pool: need {c,h,w}");
    const int c = x.dim(0);
    const long plane = static_cast<long>(x.dim(1)) * x.dim(2);
    Tensor y({c});
    for (int ch = 0; ch < c; ++ch) {
        const double* src = x.data() + static_cast<size_t>(ch) * plane;
        double s = 0.0;
        for (long i = 0; i < plane; ++i) s += src[i];
        y[ch] = s / static_cast<double>(plane);
    }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, int h, int w) {
    const int c = gy.dim(0);
    Tensor gx({c, h, w});
    const double scale = 1.0 / (static_cast<double>(h) * w);
    for (int ch = 0; ch < c; ++ch) {
        double* dst = gx.data() + static_cast<size_t>(ch) * h * w;
        const double v = gy[ch] * scale;
        for (long i = 0; i < static_cast<long>(h) * w; ++i) dst[i] = v;
    }
    return gx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require(a.rank() == 3 && b.rank() == 3 && a.dim(1) == b.dim(1) && a.dim(2) == b.dim(2),
            "concat_channels: spatial dims must match");
    Tensor y({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
    std::copy(a.data(), a.data() + a.size(), y.data());
    std::copy(b.data(), b.data() + b.size(), y.data() + a.size());
    return y;
}

void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
    require(g.rank() == 3 && ca > 0 && ca < g.dim(0), "split_channels: bad split point");
    ga = Tensor({ca, g.dim(1), g.dim(2)});
    gb = Tensor({g.dim(0) - ca, g.dim(1), g.dim(2)});
    std::copy(g.data(), g.data() + ga.size(), ga.data());
    std::copy(g.data() + ga.size(), g.data() + g.size(), gb.data());
}

} // namespace cosimgen::nn
