#pragma once

// Implicit (proximal) update
//     x_next = argmin_{x in V}  l(x) + lambda * B_psi(x, x_t)
// and the progress certificate delta = l(x_t) - l(x_next) - lambda * B_psi(x_next, x_t).
//
// Routes, in order of preference:
//   closed-form   linear losses (projection / multiplicative update), base losses whose
//                 unconstrained closed form is feasible or can be clipped in 1-d, and
//                 lambda = 0 minimisation when the nearest minimiser is feasible.
//   bisection     euclidean prox over boxes/intervals for every loss of the form
//                 f(<a,x>) + w ||x||_1. For fixed dual variable theta the problem is
//                 separable, x(theta)_i = clip(soft(x_t,i - theta a_i / lambda, w / lambda)),
//                 and the optimal theta is the root of a monotone scalar equation.
//   numeric       projected (proximal) descent on the prox objective; used for balls,
//                 lambda = 0 composite problems and entropy geometry with non-linear losses.

#include <cmath>
#include <limits>
#include <string>

#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

enum class SolverKind { closed_form, bisection, numeric_descent };

inline std::string to_string(SolverKind s) {
    switch (s) {
        case SolverKind::closed_form: return "closed-form";
        case SolverKind::bisection: return "bisection";
        case SolverKind::numeric_descent: return "numeric-descent";
    }
    return "?";
}

struct ProxResult {
    Vec x_next;
    double delta = 0.0;
    SolverKind solver = SolverKind::closed_form;
    double residual = 0.0;  // solver certificate: bracket width or last iterate movement
};

struct SolverOptions {
    double bisection_tol = 1e-10;
    double descent_tol = 1e-9;
    std::size_t max_descent_iters = 100000;
};

inline double compute_delta(const Loss& loss, const Geometry& geom, VecView x_t, VecView x_next, double lambda) {
    double d = eval(loss, x_t) - eval(loss, x_next);
    if (lambda > 0.0 && std::isfinite(lambda)) d -= lambda * bregman(geom, x_next, x_t);
    return d;
}

namespace detail {

struct BoxBounds {
    VecView lo;
    VecView hi;
};

inline std::optional<BoxBounds> box_bounds(const Domain& dom, Vec& lo_store, Vec& hi_store) {
    if (const auto* i = std::get_if<Interval>(&dom)) {
        lo_store = {i->lo};
        hi_store = {i->hi};
        return BoxBounds{lo_store, hi_store};
    }
    if (const auto* b = std::get_if<Box>(&dom)) return BoxBounds{b->lo, b->hi};
    return std::nullopt;
}

// Nearest-to-x_t point of the unconstrained prox (or, for inv_lambda = inf, of the
// unconstrained minimiser set) for a non-composite base loss.
inline Vec unconstrained_base_step(const Loss& loss, VecView x_t, double inv_lambda) {
    const double aa = dot(loss.a, loss.a);
    const double s = dot(loss.a, x_t);
    double coef = 0.0;  // x = x_t + coef * a
    switch (loss.kind) {
        case LossKind::linear: coef = -inv_lambda; break;
        case LossKind::quadratic:
            coef = std::isinf(inv_lambda) ? -(s - loss.y) / aa : -(s - loss.y) / (1.0 / inv_lambda + aa);
            break;
        case LossKind::absolute: {
            const double r = s - loss.y;
            const double mag = std::min(inv_lambda, std::abs(r) / aa);
            coef = r > 0.0 ? -mag : (r < 0.0 ? mag : 0.0);
            break;
        }
        case LossKind::hinge: {
            const double l = std::max(0.0, 1.0 - loss.y * s);
            coef = std::min(inv_lambda, l / aa) * loss.y;
            break;
        }
    }
    if (aa == 0.0) coef = 0.0;
    Vec x(x_t.begin(), x_t.end());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += coef * loss.a[i];
    return x;
}

inline Vec linear_argmin(const Domain& dom, VecView g, VecView x_t) {
    struct V {
        VecView g, x_t;
        Vec operator()(const Interval& i) const {
            return {g[0] > 0.0 ? i.lo : (g[0] < 0.0 ? i.hi : x_t[0])};
        }
        Vec operator()(const Box& b) const {
            Vec x(g.size());
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = g[k] > 0.0 ? b.lo[k] : (g[k] < 0.0 ? b.hi[k] : x_t[k]);
            return x;
        }
        Vec operator()(const Ball& b) const {
            const double n = norm_l2(g);
            if (n == 0.0) return Vec(x_t.begin(), x_t.end());
            Vec x(g.size());
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = b.center[k] - b.radius * g[k] / n;
            return x;
        }
        Vec operator()(const ClippedSimplex& s) const {
            // Ties share the free mass evenly (the lambda -> 0 limit of the entropic prox).
            const double gmin = *std::min_element(g.begin(), g.end());
            std::size_t n_min = 0;
            for (double v : g) n_min += (v == gmin);
            const double fl = s.floor();
            const double share = (1.0 - fl * static_cast<double>(s.dim - n_min)) / static_cast<double>(n_min);
            Vec x(s.dim);
            for (std::size_t k = 0; k < s.dim; ++k) x[k] = g[k] == gmin ? share : fl;
            return x;
        }
    };
    return std::visit(V{g, x_t}, dom);
}

// lambda = 0 on a box for phi(<a, x>): minimise phi over the reachable range of <a, x>,
// then take the box point nearest x_t on that level set, x = clip(x_t - theta a).
inline ProxResult box_level_set_argmin(const Loss& loss, VecView x_t, const BoxBounds& box, const SolverOptions& opts) {
    const std::size_t d = x_t.size();
    double smin = 0.0, smax = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        smin += loss.a[i] * (loss.a[i] > 0.0 ? box.lo[i] : box.hi[i]);
        smax += loss.a[i] * (loss.a[i] > 0.0 ? box.hi[i] : box.lo[i]);
    }
    double lo_s = smin, hi_s = smax;
    if (loss.kind == LossKind::hinge) {
        if (loss.y > 0.0) lo_s = smax >= 1.0 / loss.y ? std::max(1.0 / loss.y, smin) : smax;
        if (loss.y < 0.0) hi_s = smin <= 1.0 / loss.y ? std::min(1.0 / loss.y, smax) : smin;
    } else {
        lo_s = hi_s = std::clamp(loss.y, smin, smax);
    }
    const double target = std::clamp(dot(loss.a, x_t), lo_s, hi_s);
    Vec x(x_t.begin(), x_t.end());
    auto level = [&](double theta) {
        for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(x_t[i] - theta * loss.a[i], box.lo[i], box.hi[i]);
        return dot(loss.a, x) - target;
    };
    if (level(0.0) == 0.0) return {x, 0.0, SolverKind::closed_form, 0.0};
    // level() is non-increasing in theta.
    double lo = -1.0, hi = 1.0;
    for (int k = 0; level(hi) > 0.0; ++k) {
        if (k > 200) throw SolverError("box level set: failed to bracket from above");
        hi *= 2.0;
    }
    for (int k = 0; level(lo) < 0.0; ++k) {
        if (k > 200) throw SolverError("box level set: failed to bracket from below");
        lo *= 2.0;
    }
    for (int it = 0; it < 400 && hi - lo > opts.bisection_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (level(mid) > 0.0 ? lo : hi) = mid;
    }
    const double width = hi - lo;
    level(0.5 * (lo + hi));
    return {x, 0.0, SolverKind::bisection, width};
}

// theta -> x(theta) for the separable box problem.
inline void dual_point(const Loss& loss, VecView x_t, double lambda, const BoxBounds& box, double theta, Vec& x) {
    const double kappa = loss.composite ? loss.l1_weight / lambda : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double v = x_t[i] - theta * loss.a[i] / lambda;
        if (kappa > 0.0) v = soft_threshold(v, kappa);
        x[i] = std::clamp(v, box.lo[i], box.hi[i]);
    }
}

inline ProxResult scalar_dual_solve(const Loss& loss, VecView x_t, double lambda, const BoxBounds& box,
                                    const SolverOptions& opts) {
    Vec x(x_t.size());
    auto point = [&](double theta) -> const Vec& {
        dual_point(loss, x_t, lambda, box, theta, x);
        return x;
    };
    if (loss.kind == LossKind::linear) {
        point(1.0);
        return {x, 0.0, SolverKind::closed_form, 0.0};
    }
    // G(theta) is non-increasing; the quadratic variant subtracts theta and is strictly decreasing.
    const bool quad = loss.kind == LossKind::quadratic;
    auto G = [&](double theta) {
        const double s = dot(loss.a, point(theta));
        return quad ? s - loss.y - theta : s - loss.y;
    };
    double lo = -1.0, hi = 1.0;
    if (loss.kind == LossKind::hinge) {
        lo = std::min(0.0, -loss.y);
        hi = std::max(0.0, -loss.y);
    }
    double g_lo = G(lo), g_hi = G(hi);
    if (quad) {
        for (int k = 0; g_hi > 0.0; ++k) {
            if (k > 200) throw SolverError("scalar dual: failed to bracket root from above (hi=" + std::to_string(hi) + ")");
            lo = hi;
            g_lo = g_hi;
            hi *= 2.0;
            g_hi = G(hi);
        }
        for (int k = 0; g_lo < 0.0; ++k) {
            if (k > 200) throw SolverError("scalar dual: failed to bracket root from below (lo=" + std::to_string(lo) + ")");
            hi = lo;
            g_hi = g_lo;
            lo *= 2.0;
            g_lo = G(lo);
        }
    } else {
        if (g_hi >= 0.0) {
            point(hi);
            return {x, 0.0, SolverKind::bisection, 0.0};
        }
        if (g_lo <= 0.0) {
            point(lo);
            return {x, 0.0, SolverKind::bisection, 0.0};
        }
    }
    const double mono_tol = 1e-9 * (1.0 + std::abs(g_lo) + std::abs(g_hi));
    for (int it = 0; it < 400 && hi - lo > opts.bisection_tol; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double g_mid = G(mid);
        if (g_mid > g_lo + mono_tol || g_mid < g_hi - mono_tol)
            throw SolverError("scalar dual: monotonicity violated at theta=" + std::to_string(mid));
        if (g_mid > 0.0) {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    const double width = hi - lo;
    point(0.5 * (lo + hi));
    return {x, 0.0, SolverKind::bisection, width};
}

inline double prox_objective(const Loss& loss, const Geometry& geom, VecView x_t, double lambda, VecView x) {
    double v = eval(loss, x);
    if (lambda > 0.0) v += lambda * bregman(geom, x, x_t);
    return v;
}

inline ProxResult numeric_descent(const Loss& loss, const Geometry& geom, VecView x_t, double lambda,
                                  const SolverOptions& opts) {
    const double aa = dot(loss.a, loss.a);
    const double lip = loss.kind == LossKind::quadratic ? aa : std::sqrt(aa);
    const bool entropy = geom.mirror() == Mirror::negative_entropy;
    Vec lo_store, hi_store;
    const auto box = box_bounds(geom.domain(), lo_store, hi_store);
    // On the simplex ||x||_1 is constant, so the l1 term can be dropped there.
    const bool prox_l1 = loss.composite && box.has_value();
    const bool smooth = (loss.kind == LossKind::quadratic || loss.kind == LossKind::linear) &&
                        (!loss.composite || prox_l1 || entropy);
    const Loss smooth_part = prox_l1 || entropy ? loss.base() : loss;

    Vec x = project(geom, x_t);
    Vec best = x;
    double best_obj = prox_objective(loss, geom, x_t, lambda, x);
    double movement = std::numeric_limits<double>::infinity();
    Vec next(x.size());
    for (std::size_t k = 1; k <= opts.max_descent_iters; ++k) {
        double step;
        if (smooth && (lip + lambda) > 0.0) {
            step = 1.0 / (lip + lambda);
        } else if (lambda > 0.0) {
            step = 1.0 / (lambda * static_cast<double>(k) + std::max(lip, 1e-12));
        } else {
            step = 1.0 / (std::max(lip, 1.0) * std::sqrt(static_cast<double>(k)));
        }
        Vec g = subgradient(smooth_part, x);
        if (entropy) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double grad = g[i] + (lambda > 0.0 ? lambda * std::log(x[i] / x_t[i]) : 0.0);
                next[i] = std::log(x[i]) - step * grad;
            }
            next = project_log_weights(std::get<ClippedSimplex>(geom.domain()), next);
        } else {
            for (std::size_t i = 0; i < x.size(); ++i) next[i] = x[i] - step * (g[i] + lambda * (x[i] - x_t[i]));
            if (prox_l1) {
                for (std::size_t i = 0; i < x.size(); ++i)
                    next[i] = std::clamp(soft_threshold(next[i], step * loss.l1_weight), box->lo[i], box->hi[i]);
            } else {
                next = project(geom, next);
            }
        }
        movement = geom.primal_dist(next, x);
        x.swap(next);
        const double obj = prox_objective(loss, geom, x_t, lambda, x);
        if (obj < best_obj) {
            best_obj = obj;
            best = x;
        }
        if (movement < opts.descent_tol) break;
    }
    // The best iterate seen includes the start x_t, so delta >= 0 by construction.
    return {best, 0.0, SolverKind::numeric_descent, movement};
}

}  // namespace detail

inline ProxResult implicit_update(const Loss& loss, const Geometry& geom, VecView x_t, double lambda,
                                  const SolverOptions& opts = {}) {
    if (x_t.size() != geom.dim() || loss.dim() != geom.dim()) throw InputError("implicit_update: dimension mismatch");
    if (!(lambda >= 0.0)) throw InputError("implicit_update: lambda must be >= 0");
    if (!all_finite(x_t)) throw InputError("implicit_update: non-finite iterate");

    auto finish = [&](ProxResult r) {
        r.delta = compute_delta(loss, geom, x_t, r.x_next, lambda);
        return r;
    };
    if (std::isinf(lambda)) return finish({Vec(x_t.begin(), x_t.end()), 0.0, SolverKind::closed_form, 0.0});

    const Domain& dom = geom.domain();
    if (geom.mirror() == Mirror::negative_entropy) {
        const auto& simplex = std::get<ClippedSimplex>(dom);
        if (loss.kind != LossKind::linear) return finish(detail::numeric_descent(loss, geom, x_t, lambda, opts));
        // ||x||_1 == 1 on the simplex, so an l1 term only shifts the objective.
        if (lambda == 0.0) return finish({detail::linear_argmin(dom, loss.a, x_t), 0.0, SolverKind::closed_form, 0.0});
        Vec log_w(x_t.size());
        for (std::size_t i = 0; i < log_w.size(); ++i) {
            if (!(x_t[i] > 0.0)) throw DomainError("implicit_update: entropy iterate must be strictly positive");
            log_w[i] = std::log(x_t[i]) - loss.a[i] / lambda;
        }
        return finish({project_log_weights(simplex, log_w), 0.0, SolverKind::closed_form, 0.0});
    }

    Vec lo_store, hi_store;
    auto box_of = [&] { return detail::box_bounds(dom, lo_store, hi_store); };

    if (lambda == 0.0) {
        if (loss.kind == LossKind::linear && !loss.composite)
            return finish({detail::linear_argmin(dom, loss.a, x_t), 0.0, SolverKind::closed_form, 0.0});
        if (!loss.composite) {
            Vec z = detail::unconstrained_base_step(loss, x_t, std::numeric_limits<double>::infinity());
            if (contains(dom, z, 0.0)) return finish({std::move(z), 0.0, SolverKind::closed_form, 0.0});
            if (geom.dim() == 1) return finish({project(geom, z), 0.0, SolverKind::closed_form, 0.0});
            if (const auto box = box_of()) return finish(detail::box_level_set_argmin(loss, x_t, *box, opts));
        }
        return finish(detail::numeric_descent(loss, geom, x_t, lambda, opts));
    }

    const double inv_lambda = 1.0 / lambda;
    if (!loss.composite) {
        if (loss.kind == LossKind::linear) {
            Vec p(x_t.begin(), x_t.end());
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= loss.a[i] * inv_lambda;
            return finish({project(geom, p), 0.0, SolverKind::closed_form, 0.0});
        }
        Vec z = detail::unconstrained_base_step(loss, x_t, inv_lambda);
        if (contains(dom, z, 0.0)) return finish({std::move(z), 0.0, SolverKind::closed_form, 0.0});
        if (geom.dim() == 1) return finish({project(geom, z), 0.0, SolverKind::closed_form, 0.0});
    }
    if (const auto box = box_of()) return finish(detail::scalar_dual_solve(loss, x_t, lambda, *box, opts));
    return finish(detail::numeric_descent(loss, geom, x_t, lambda, opts));
}

}  // namespace dynreg
