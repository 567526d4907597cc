#pragma once

// Non-stationarity measures: temporal variability V_T of a loss sequence and the
// path-length C_T of a comparator sequence.
//
// V_T needs max_x (l_t(x) - l_{t-1}(x)) over the domain for every consecutive pair.
// Each base loss is f(<a,x>) with f scalar convex, so the difference of two of them is
// h(s1, s2) = f1(s1) - f2(s2), which is convex in s1 for fixed s2. Its maximum over the
// image polygon P = {(<a1,x>, <a2,x>) : x in domain} is therefore attained on the
// boundary of P, and along each edge h is piecewise quadratic with known breakpoints.
// Boxes map to zonotopes and simplices to the convex hull of the columns, so both are
// handled exactly. One-dimensional domains (including composite losses) are handled
// exactly by the same piecewise-quadratic scan directly in x. Balls are scanned along
// the boundary of their elliptical image, and any remaining case falls back to a grid;
// both report exact = false.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "dynreg/geometry.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

enum class VariabilityMode { absolute, signed_ };

struct VariabilityOptions {
    std::size_t grid_points_per_axis = 10000;
    std::size_t max_grid_points = 1000000;
    std::size_t boundary_samples = 10000;
};

struct PairVariation {
    double max_increase = 0.0;  // max_x l_cur(x) - l_prev(x)
    double max_decrease = 0.0;  // max_x l_prev(x) - l_cur(x)
    bool exact = true;
    std::size_t resolution = 0;
};

struct VariabilityResult {
    double value = 0.0;
    bool exact = true;
    std::size_t resolution = 0;  // grid/sample count used by inexact pairs, 0 when exact
};

namespace detail {

using P2 = std::array<double, 2>;

// Maximum over t in [0,1] of a function that is quadratic between consecutive breakpoints.
template <class F>
double max_piecewise_quadratic(F&& h, std::vector<double> breaks) {
    breaks.push_back(0.0);
    breaks.push_back(1.0);
    std::erase_if(breaks, [](double b) { return !(b >= 0.0 && b <= 1.0); });
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < breaks.size(); ++k) best = std::max(best, h(breaks[k]));
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double t0 = breaks[k], t1 = breaks[k + 1];
        const double w = t1 - t0;
        if (w <= 0.0) continue;
        const double h0 = h(t0), h1 = h(t1), hm = h(0.5 * (t0 + t1));
        // h(t0 + w u) = c0 + c1 u + c2 u^2 on u in [0,1]
        const double c2 = 2.0 * (h0 + h1 - 2.0 * hm);
        const double c1 = h1 - h0 - c2;
        if (c2 < 0.0) {
            const double u = -c1 / (2.0 * c2);
            if (u > 0.0 && u < 1.0) best = std::max(best, h(t0 + w * u));
        }
    }
    return best;
}

struct ScalarPart {
    LossKind kind;
    double y;
};

inline double part_value(const ScalarPart& p, double s) { return scalar_value(p.kind, s, p.y); }

// max over the segment P0 -> P1 of f_up(s_up) - f_down(s_down) where the segment lives in
// (s_up, s_down) coordinates.
inline double max_on_edge(const ScalarPart& up, const ScalarPart& down, const P2& p0, const P2& p1) {
    std::vector<double> breaks;
    auto add_break = [&](double from, double to, std::optional<double> kink) {
        if (!kink || to == from) return;
        breaks.push_back((*kink - from) / (to - from));
    };
    add_break(p0[0], p1[0], scalar_kink(up.kind, up.y));
    add_break(p0[1], p1[1], scalar_kink(down.kind, down.y));
    auto h = [&](double t) {
        const double s_up = p0[0] + t * (p1[0] - p0[0]);
        const double s_down = p0[1] + t * (p1[1] - p0[1]);
        return part_value(up, s_up) - part_value(down, s_down);
    };
    return max_piecewise_quadratic(h, std::move(breaks));
}

inline double max_on_polygon(const ScalarPart& up, const ScalarPart& down, const std::vector<P2>& poly) {
    if (poly.size() == 1) return part_value(up, poly[0][0]) - part_value(down, poly[0][1]);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < poly.size(); ++k)
        best = std::max(best, max_on_edge(up, down, poly[k], poly[(k + 1) % poly.size()]));
    return best;
}

inline std::vector<P2> zonotope(const Box& box, VecView a1, VecView a2) {
    P2 c{0.0, 0.0};
    std::vector<P2> gens;
    for (std::size_t k = 0; k < a1.size(); ++k) {
        const double mid = 0.5 * (box.lo[k] + box.hi[k]);
        const double half = 0.5 * (box.hi[k] - box.lo[k]);
        c[0] += mid * a1[k];
        c[1] += mid * a2[k];
        P2 g{half * a1[k], half * a2[k]};
        if (g[0] == 0.0 && g[1] == 0.0) continue;
        if (g[1] < 0.0 || (g[1] == 0.0 && g[0] < 0.0)) g = {-g[0], -g[1]};
        gens.push_back(g);
    }
    if (gens.empty()) return {c};
    std::sort(gens.begin(), gens.end(),
              [](const P2& u, const P2& v) { return std::atan2(u[1], u[0]) < std::atan2(v[1], v[0]); });
    P2 p = c;
    for (const auto& g : gens) p = {p[0] - g[0], p[1] - g[1]};
    std::vector<P2> poly;
    poly.reserve(2 * gens.size());
    for (const auto& g : gens) {
        poly.push_back(p);
        p = {p[0] + 2.0 * g[0], p[1] + 2.0 * g[1]};
    }
    for (const auto& g : gens) {
        poly.push_back(p);
        p = {p[0] - 2.0 * g[0], p[1] - 2.0 * g[1]};
    }
    return poly;
}

inline std::vector<P2> convex_hull(std::vector<P2> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    if (pts.size() <= 2) return pts;
    auto cross = [](const P2& o, const P2& a, const P2& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<P2> hull(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
        hull[k++] = pts[i];
    }
    hull.resize(k - 1);
    return hull;
}

inline std::vector<P2> ellipse_boundary(const Ball& ball, VecView a1, VecView a2, std::size_t samples) {
    const P2 c{dot(a1, ball.center), dot(a2, ball.center)};
    // M = A A^T for the 2 x d matrix A with rows a1, a2.
    const double m11 = dot(a1, a1), m12 = dot(a1, a2), m22 = dot(a2, a2);
    std::vector<P2> pts;
    pts.reserve(samples);
    const double two_pi = 2.0 * std::acos(-1.0);
    for (std::size_t k = 0; k < samples; ++k) {
        const double th = two_pi * static_cast<double>(k) / static_cast<double>(samples);
        const double w1 = std::cos(th), w2 = std::sin(th);
        const double mw1 = m11 * w1 + m12 * w2, mw2 = m12 * w1 + m22 * w2;
        const double q = w1 * mw1 + w2 * mw2;
        if (q <= 0.0) {
            pts.push_back(c);
            continue;
        }
        const double sc = ball.radius / std::sqrt(q);
        pts.push_back({c[0] + sc * mw1, c[1] + sc * mw2});
    }
    return pts;
}

// Exact pair variation on a one-dimensional domain [lo, hi], scanning directly in x.
inline PairVariation pair_variation_1d(const Loss& cur, const Loss& prev, double lo, double hi) {
    std::vector<double> breaks;
    auto add = [&](const Loss& l) {
        if (auto k = scalar_kink(l.kind, l.y); k && l.a[0] != 0.0) breaks.push_back((*k / l.a[0] - lo) / (hi - lo));
        if (l.composite) breaks.push_back((0.0 - lo) / (hi - lo));
    };
    add(cur);
    add(prev);
    auto at = [&](double t) {
        const double x = lo + t * (hi - lo);
        return std::array<double, 1>{x};
    };
    auto up = [&](double t) { auto x = at(t); return eval(cur, x) - eval(prev, x); };
    auto down = [&](double t) { auto x = at(t); return eval(prev, x) - eval(cur, x); };
    return {max_piecewise_quadratic(up, breaks), max_piecewise_quadratic(down, breaks), true, 0};
}

inline void sample_domain(const Domain& dom, const VariabilityOptions& opts, std::vector<Vec>& out,
                          std::size_t& resolution) {
    const std::size_t d = dimension(dom);
    if (d <= 2 && !std::holds_alternative<ClippedSimplex>(dom)) {
        Vec lo(d), hi(d);
        if (const auto* b = std::get_if<Box>(&dom)) {
            lo = b->lo;
            hi = b->hi;
        } else if (const auto* ball = std::get_if<Ball>(&dom)) {
            for (std::size_t k = 0; k < d; ++k) {
                lo[k] = ball->center[k] - ball->radius;
                hi[k] = ball->center[k] + ball->radius;
            }
        }
        std::size_t per_axis = opts.grid_points_per_axis;
        if (d == 2) per_axis = std::min(per_axis, static_cast<std::size_t>(std::sqrt(double(opts.max_grid_points))));
        resolution = per_axis;
        for (std::size_t i = 0; i < per_axis; ++i) {
            const double xi = lo[0] + (hi[0] - lo[0]) * double(i) / double(per_axis - 1);
            if (d == 1) {
                out.push_back({xi});
                continue;
            }
            for (std::size_t j = 0; j < per_axis; ++j) {
                Vec x{xi, lo[1] + (hi[1] - lo[1]) * double(j) / double(per_axis - 1)};
                if (contains(dom, x)) out.push_back(std::move(x));
            }
        }
        return;
    }
    // Higher dimensions: seeded random points plus the canonical vertices.
    std::mt19937_64 rng(0x5eedULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const std::size_t n = std::min<std::size_t>(opts.max_grid_points / std::max<std::size_t>(d, 1), 100000);
    resolution = n;
    for (std::size_t i = 0; i < n; ++i) {
        Vec x(d);
        if (const auto* b = std::get_if<Box>(&dom)) {
            // Alternate random vertices and uniform interior points.
            for (std::size_t k = 0; k < d; ++k) {
                const double u = unif(rng);
                x[k] = i % 2 ? (u < 0.5 ? b->lo[k] : b->hi[k]) : b->lo[k] + u * (b->hi[k] - b->lo[k]);
            }
        } else if (std::holds_alternative<ClippedSimplex>(dom)) {
            double s = 0.0;
            for (auto& v : x) s += (v = -std::log(1.0 - unif(rng)));
            for (auto& v : x) v /= s;
        } else {
            const auto& ball = std::get<Ball>(dom);
            std::normal_distribution<double> nrm;
            double s = 0.0;
            for (auto& v : x) {
                v = nrm(rng);
                s += v * v;
            }
            const double r = ball.radius * std::pow(unif(rng), 1.0 / double(d)) / std::sqrt(s);
            for (std::size_t k = 0; k < d; ++k) x[k] = ball.center[k] + r * x[k];
        }
        out.push_back(std::move(x));
    }
    if (std::holds_alternative<ClippedSimplex>(dom)) {
        for (std::size_t k = 0; k < d; ++k) {
            Vec e(d, 0.0);
            e[k] = 1.0;
            out.push_back(std::move(e));
        }
    }
}

}  // namespace detail

/// max over the domain of l_cur - l_prev and of l_prev - l_cur. Simplex domains are
/// evaluated over the full (unclipped) simplex.
inline PairVariation pair_variation(const Loss& cur, const Loss& prev, const Domain& dom,
                                    const VariabilityOptions& opts = {}) {
    const std::size_t d = dimension(dom);
    if (cur.dim() != d || prev.dim() != d) throw InputError("temporal_variability: dimension mismatch");

    if (d == 1 && !std::holds_alternative<ClippedSimplex>(dom)) {
        double lo = 0.0, hi = 0.0;
        if (const auto* i = std::get_if<Interval>(&dom)) {
            lo = i->lo;
            hi = i->hi;
        } else if (const auto* b = std::get_if<Box>(&dom)) {
            lo = b->lo[0];
            hi = b->hi[0];
        } else {
            const auto& ball = std::get<Ball>(dom);
            lo = ball.center[0] - ball.radius;
            hi = ball.center[0] + ball.radius;
        }
        return detail::pair_variation_1d(cur, prev, lo, hi);
    }

    const bool l1_cancels = cur.composite == prev.composite && (!cur.composite || cur.l1_weight == prev.l1_weight);
    if (l1_cancels) {
        const detail::ScalarPart pc{cur.kind, cur.y}, pp{prev.kind, prev.y};
        std::vector<detail::P2> poly;
        if (const auto* b = std::get_if<Box>(&dom)) {
            poly = detail::zonotope(*b, cur.a, prev.a);
        } else if (std::holds_alternative<ClippedSimplex>(dom)) {
            std::vector<detail::P2> cols(d);
            for (std::size_t k = 0; k < d; ++k) cols[k] = {cur.a[k], prev.a[k]};
            poly = detail::convex_hull(std::move(cols));
        } else if (const auto* ball = std::get_if<Ball>(&dom)) {
            // Dense scan of the elliptical boundary: pointwise, not an exact maximum.
            const auto pts = detail::ellipse_boundary(*ball, cur.a, prev.a, opts.boundary_samples);
            PairVariation pv{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), false,
                             pts.size()};
            for (const auto& p : pts) {
                const double h = detail::part_value(pc, p[0]) - detail::part_value(pp, p[1]);
                pv.max_increase = std::max(pv.max_increase, h);
                pv.max_decrease = std::max(pv.max_decrease, -h);
            }
            return pv;
        }
        std::vector<detail::P2> swapped(poly.size());
        for (std::size_t k = 0; k < poly.size(); ++k) swapped[k] = {poly[k][1], poly[k][0]};
        return {detail::max_on_polygon(pc, pp, poly), detail::max_on_polygon(pp, pc, swapped), true, 0};
    }

    std::vector<Vec> pts;
    std::size_t resolution = 0;
    detail::sample_domain(dom, opts, pts, resolution);
    PairVariation pv{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(), false,
                     resolution};
    for (const auto& x : pts) {
        const double h = eval(cur, x) - eval(prev, x);
        pv.max_increase = std::max(pv.max_increase, h);
        pv.max_decrease = std::max(pv.max_decrease, -h);
    }
    return pv;
}

/// V_T = sum_{t>=2} max_x |l_t - l_{t-1}| (absolute) or max(0, max_x l_t - l_{t-1}) (signed).
inline VariabilityResult temporal_variability(std::span<const Loss> seq, const Domain& dom, VariabilityMode mode,
                                              const VariabilityOptions& opts = {}) {
    if (seq.empty()) throw InputError("temporal_variability: empty loss sequence");
    VariabilityResult out;
    for (std::size_t t = 1; t < seq.size(); ++t) {
        const PairVariation pv = pair_variation(seq[t], seq[t - 1], dom, opts);
        const double term = mode == VariabilityMode::absolute ? std::max({pv.max_increase, pv.max_decrease, 0.0})
                                                             : std::max(pv.max_increase, 0.0);
        out.value += term;
        if (!pv.exact) {
            out.exact = false;
            out.resolution = std::max(out.resolution, pv.resolution);
        }
    }
    return out;
}

/// C_T = sum_{t>=2} ||u_t - u_{t-1}|| in the given norm.
inline double path_length(std::span<const Vec> seq, Norm norm) {
    double total = 0.0;
    for (std::size_t t = 1; t < seq.size(); ++t)
        total += norm == Norm::l2 ? dist_l2(seq[t], seq[t - 1]) : dist_l1(seq[t], seq[t - 1]);
    return total;
}

}  // namespace dynreg
