#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dynreg/errors.hpp"

namespace dynreg {

using Vec = std::vector<double>;
using VecView = std::span<const double>;

[[noreturn, gnu::cold, gnu::noinline]] inline void throw_dim_mismatch(std::size_t a, std::size_t b, const char* what) {
    throw InputError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

inline void require_same_dim(VecView x, VecView y, const char* what) {
    if (x.size() != y.size()) throw_dim_mismatch(x.size(), y.size(), what);
}

inline double dot(VecView x, VecView y) {
    require_same_dim(x, y, "dot");
    return std::inner_product(x.begin(), x.end(), y.begin(), 0.0);
}

inline double norm_l2(VecView x) { return std::sqrt(dot(x, x)); }

inline double norm_l1(VecView x) {
    double s = 0.0;
    for (double v : x) s += std::abs(v);
    return s;
}

inline double norm_linf(VecView x) {
    double s = 0.0;
    for (double v : x) s = std::max(s, std::abs(v));
    return s;
}

inline Vec sub(VecView x, VecView y) {
    require_same_dim(x, y, "sub");
    Vec out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
    return out;
}

inline double dist_l2(VecView x, VecView y) {
    require_same_dim(x, y, "dist_l2");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    return std::sqrt(s);
}

inline double dist_l1(VecView x, VecView y) {
    require_same_dim(x, y, "dist_l1");
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s;
}

inline bool all_finite(VecView x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

inline double soft_threshold(double v, double kappa) {
    return std::copysign(std::max(std::abs(v) - kappa, 0.0), v);
}

}  // namespace dynreg
