#pragma once

#include <cmath>
#include <functional>

#include "cosimgen/tensor.hpp"

namespace cosimgen::testutil {

// Projection loss L(y) = sum(p * y): turns a tensor-valued function into a
// scalar one with known dL/dy = p.
inline double project(const Tensor& y, const Tensor& p) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) s += y[i] * p[i];
    return s;
}

// Central finite difference of a scalar function with respect to one slot.
inline double central_diff(double& slot, const std::function<double()>& f, double h = 1e-5) {
    const double saved = slot;
    slot = saved + h;
    const double up = f();
    slot = saved - h;
    const double down = f();
    slot = saved;
    return (up - down) / (2.0 * h);
}

inline double rel_err(double got, double want) {
    const double denom = std::max({std::fabs(got), std::fabs(want), 1e-8});
    return std::fabs(got - want) / denom;
}

// Bitwise equality, shape included.
inline bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return false;
    for (int64_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

} // namespace cosimgen::testutil
