#pragma once

// Brute-force reference minimiser of the prox objective l(x) + lambda * B_psi(x, x_t).
// Used only to certify implicit_update; it shares evaluation primitives with the
// library but none of the solver routes.

#include <cmath>
#include <limits>

#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

enum class OracleMode { grid, descent };

struct OracleOptions {
    OracleMode mode = OracleMode::grid;
    std::size_t zoom_passes = 2;      // grid: refinements around the incumbent
    std::size_t zoom_halfwidth = 3;   // grid: cells kept on each side when zooming
    std::size_t descent_steps = 1000000;
};

namespace detail {

inline double oracle_objective(const Loss& loss, const Geometry& geom, VecView x_t, double lambda, VecView x) {
    double v = eval(loss, x);
    if (lambda > 0.0) v += lambda * bregman(geom, x, x_t);
    return v;
}

// Free coordinates of the search: the full point for box-like domains, the first
// dim-1 coordinates for the simplex.
struct SearchBox {
    Vec lo, hi;
};

inline SearchBox initial_search_box(const Domain& dom) {
    struct V {
        SearchBox operator()(const Interval& i) const { return {{i.lo}, {i.hi}}; }
        SearchBox operator()(const Box& b) const { return {b.lo, b.hi}; }
        SearchBox operator()(const Ball& b) const {
            SearchBox s{b.center, b.center};
            for (std::size_t k = 0; k < s.lo.size(); ++k) {
                s.lo[k] -= b.radius;
                s.hi[k] += b.radius;
            }
            return s;
        }
        SearchBox operator()(const ClippedSimplex& s) const {
            const double fl = s.floor();
            const double top = 1.0 - fl * static_cast<double>(s.dim - 1);
            return {Vec(s.dim - 1, fl), Vec(s.dim - 1, top)};
        }
    };
    return std::visit(V{}, dom);
}

// Map a search coordinate to a feasible point; false when it has no feasible image.
inline bool lift(const Geometry& geom, const Vec& free, Vec& x) {
    if (const auto* s = std::get_if<ClippedSimplex>(&geom.domain())) {
        double rest = 1.0;
        for (std::size_t k = 0; k < free.size(); ++k) {
            x[k] = free[k];
            rest -= free[k];
        }
        if (rest < s->floor() - 1e-15) return false;
        x[s->dim - 1] = std::max(rest, s->floor());
        return true;
    }
    if (std::holds_alternative<Ball>(geom.domain())) {
        x = project(geom, free);
        return true;
    }
    x = free;
    return true;
}

}  // namespace detail

inline Vec prox_oracle(const Loss& loss, const Geometry& geom, VecView x_t, double lambda, std::size_t budget,
                       const OracleOptions& opts = {}) {
    if (budget < 2) throw InputError("prox_oracle: budget must be at least 2");
    const std::size_t d = geom.dim();
    if (opts.mode == OracleMode::descent) {
        // Projected gradient with constant step 1/(L + lambda): exact for smooth objectives.
        const double aa = dot(loss.a, loss.a);
        const double lip = loss.kind == LossKind::quadratic ? aa : 0.0;
        if (lip + lambda <= 0.0) throw InputError("prox_oracle: descent mode needs lambda > 0 or a curved loss");
        const double step = 1.0 / (lip + lambda);
        Vec x(x_t.begin(), x_t.end());
        Vec next(d);
        for (std::size_t k = 0; k < opts.descent_steps; ++k) {
            const Vec g = subgradient(loss, x);
            if (geom.mirror() == Mirror::euclidean) {
                for (std::size_t i = 0; i < d; ++i) next[i] = x[i] - step * (g[i] + lambda * (x[i] - x_t[i]));
                next = project(geom, next);
            } else {
                for (std::size_t i = 0; i < d; ++i)
                    next[i] = std::log(x[i]) - step * (g[i] + lambda * std::log(x[i] / x_t[i]));
                next = project_log_weights(std::get<ClippedSimplex>(geom.domain()), next);
            }
            const double moved = dist_l2(next, x);
            x.swap(next);
            if (moved < 1e-15) break;
        }
        return x;
    }

    const std::size_t free_dim = std::holds_alternative<ClippedSimplex>(geom.domain()) ? d - 1 : d;
    if (free_dim > 3) throw InputError("prox_oracle: grid mode supports at most 3 free dimensions");
    detail::SearchBox box = detail::initial_search_box(geom.domain());
    const detail::SearchBox outer = box;

    Vec best_x(d), x(d), free(free_dim);
    if (free_dim == 0) return center_point(geom.domain());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t pass = 0; pass <= opts.zoom_passes; ++pass) {
        Vec h(free_dim);
        for (std::size_t k = 0; k < free_dim; ++k) h[k] = (box.hi[k] - box.lo[k]) / static_cast<double>(budget - 1);
        std::size_t total = 1;
        for (std::size_t k = 0; k < free_dim; ++k) total *= budget;
        Vec best_free;
        for (std::size_t idx = 0; idx < total; ++idx) {
            std::size_t rem = idx;
            for (std::size_t k = 0; k < free_dim; ++k) {
                const std::size_t j = rem % budget;
                rem /= budget;
                free[k] = j + 1 == budget ? box.hi[k] : box.lo[k] + static_cast<double>(j) * h[k];
            }
            if (!detail::lift(geom, free, x)) continue;
            const double v = detail::oracle_objective(loss, geom, x_t, lambda, x);
            if (v < best) {
                best = v;
                best_x = x;
                best_free = free;
            }
        }
        if (best_free.empty()) break;
        const double hw = static_cast<double>(opts.zoom_halfwidth);
        for (std::size_t k = 0; k < free_dim; ++k) {
            box.lo[k] = std::max(outer.lo[k], best_free[k] - hw * h[k]);
            box.hi[k] = std::min(outer.hi[k], best_free[k] + hw * h[k]);
        }
    }
    return best_x;
}

}  // namespace dynreg
