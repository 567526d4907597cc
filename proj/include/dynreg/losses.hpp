#pragma once

// Structured convex losses. Every base family is a scalar convex function of a
// single projection s = <a, x>:
//   linear     f(s) = s                      (a plays the role of the gradient g)
//   quadratic  f(s) = 0.5 (s - y)^2
//   absolute   f(s) = |s - y|
//   hinge      f(s) = max(0, 1 - y s),  y in {-1, +1}
// A composite loss adds l1_weight * ||x||_1 to one of these.

#include <cmath>
#include <optional>
#include <string>

#include "dynreg/errors.hpp"
#include "dynreg/vec.hpp"

namespace dynreg {

enum class LossKind { linear, quadratic, absolute, hinge };

inline std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::linear: return "linear";
        case LossKind::quadratic: return "quadratic";
        case LossKind::absolute: return "absolute";
        case LossKind::hinge: return "hinge";
    }
    return "?";
}

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "linear") return LossKind::linear;
    if (s == "quadratic") return LossKind::quadratic;
    if (s == "absolute") return LossKind::absolute;
    if (s == "hinge") return LossKind::hinge;
    throw InputError("unknown loss kind '" + s + "'");
}

/// Value of the scalar base function at s = <a, x>.
inline double scalar_value(LossKind kind, double s, double y) {
    switch (kind) {
        case LossKind::linear: return s;
        case LossKind::quadratic: return 0.5 * (s - y) * (s - y);
        case LossKind::absolute: return std::abs(s - y);
        case LossKind::hinge: return std::max(0.0, 1.0 - y * s);
    }
    return 0.0;
}

/// Zero-selection derivative of the scalar base function (0 at kinks).
inline double scalar_slope(LossKind kind, double s, double y) {
    switch (kind) {
        case LossKind::linear: return 1.0;
        case LossKind::quadratic: return s - y;
        case LossKind::absolute: return s > y ? 1.0 : (s < y ? -1.0 : 0.0);
        case LossKind::hinge: return 1.0 - y * s > 0.0 ? -y : 0.0;
    }
    return 0.0;
}

/// Location of the (single) kink of the scalar base function, if any.
inline std::optional<double> scalar_kink(LossKind kind, double y) {
    switch (kind) {
        case LossKind::absolute: return y;
        case LossKind::hinge: return y;  // 1 - y s = 0  <=>  s = y  since y^2 = 1
        default: return std::nullopt;
    }
}

struct Loss {
    LossKind kind = LossKind::linear;
    Vec a;
    double y = 0.0;
    bool composite = false;
    double l1_weight = 0.0;

    static Loss linear(Vec g) { return Loss{LossKind::linear, std::move(g), 0.0, false, 0.0}; }
    static Loss quadratic(Vec a, double y) { return Loss{LossKind::quadratic, std::move(a), y, false, 0.0}; }
    static Loss absolute(Vec a, double y) { return Loss{LossKind::absolute, std::move(a), y, false, 0.0}; }
    static Loss hinge(Vec a, double y) {
        if (y != 1.0 && y != -1.0) throw InputError("hinge label must be -1 or +1");
        return Loss{LossKind::hinge, std::move(a), y, false, 0.0};
    }
    static Loss with_l1(const Loss& base, double l1_weight) {
        if (base.composite) throw InputError("composite loss base must itself be non-composite");
        if (!(l1_weight >= 0.0)) throw InputError("composite l1_weight must be >= 0");
        Loss out = base;
        out.composite = true;
        out.l1_weight = l1_weight;
        return out;
    }

    std::size_t dim() const { return a.size(); }

    /// The variable (non-regularizer) part of a composite loss; identity otherwise.
    Loss base() const {
        Loss out = *this;
        out.composite = false;
        out.l1_weight = 0.0;
        return out;
    }

    std::string describe() const {
        return composite ? "composite(" + to_string(kind) + ")" : to_string(kind);
    }
};

inline double eval(const Loss& loss, VecView x) {
    if (x.size() != loss.dim()) throw InputError("eval: dimension mismatch");
    double v = scalar_value(loss.kind, dot(loss.a, x), loss.y);
    if (loss.composite) v += loss.l1_weight * norm_l1(x);
    return v;
}

/// An element of the subdifferential; at kinks the zero selection is returned.
inline Vec subgradient(const Loss& loss, VecView x) {
    if (x.size() != loss.dim()) throw InputError("subgradient: dimension mismatch");
    const double slope = scalar_slope(loss.kind, dot(loss.a, x), loss.y);
    Vec g(loss.a.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = slope * loss.a[i];
    if (loss.composite) {
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] != 0.0) g[i] += loss.l1_weight * (x[i] > 0.0 ? 1.0 : -1.0);
    }
    return g;
}

}  // namespace dynreg
