#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "cosimgen/common.hpp"
#include "cosimgen/rng.hpp"

namespace cosimgen {

// Dense row-major tensor of doubles. Small, value-semantic, no view machinery.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(count(shape_), 0.0) {}
    Tensor(std::vector<int> shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        require(static_cast<int64_t>(data_.size()) == count(shape_), "tensor: data size does not match shape");
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = stddev * rng.normal();
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // (c,h,w) accessors for the common 3-d case
    double& at(int c, int y, int x) {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }
    double at(int c, int y, int x) const {
        return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    Tensor& operator+=(const Tensor& o) {
        require(same_shape(o), "tensor: shape mismatch in +=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& operator*=(double s) {
        for (auto& v : data_) v *= s;
        return *this;
    }

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }

    double min() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = std::min(m, v);
        return m;
    }
    double max() const {
        double m = data_.empty() ? 0.0 : data_[0];
        for (double v : data_) m = std::max(m, v);
        return m;
    }

    static int64_t count(const std::vector<int>& shape) {
        int64_t n = 1;
        for (int d : shape) {
            require(d >= 0, "tensor: negative dimension");
            n *= d;
        }
        return n;
    }

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

inline Tensor operator+(Tensor a, const Tensor& b) {
    a += b;
    return a;
}

inline Tensor operator*(Tensor a, double s) {
    a *= s;
    return a;
}

// Mean squared difference over all elements.
inline double mse(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mse: shape mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

inline double dot(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), "dot: size mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline double squared_distance(const Tensor& a, const Tensor& b) {
    require(a.size() == b.size(), "squared_distance: size mismatch");
    double acc = 0.0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

} // namespace cosimgen
