#pragma once

// Mirror maps, Bregman divergences, feasible domains and the constants
// (squared diameter D^2, Bregman Lipschitz constant gamma) used by every
// regret bound in the library.

#include <cmath>
#include <limits>
#include <string>
#include <variant>

#include "dynreg/errors.hpp"
#include "dynreg/vec.hpp"

namespace dynreg {

inline constexpr double kMembershipTol = 1e-9;

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

struct Box {
    Vec lo;
    Vec hi;
};

/// Probability simplex with every coordinate floored at alpha/dim.
/// alpha == 0 is the plain simplex (allowed as a domain, but its KL diameter is unbounded).
struct ClippedSimplex {
    std::size_t dim = 2;
    double alpha = 0.0;

    double floor() const { return alpha / static_cast<double>(dim); }
};

struct Ball {
    Vec center;
    double radius = 1.0;
};

using Domain = std::variant<Interval, Box, ClippedSimplex, Ball>;

enum class Mirror { euclidean, negative_entropy };
enum class Norm { l2, l1 };

inline std::string to_string(Mirror m) {
    return m == Mirror::euclidean ? "euclidean" : "negative-entropy";
}
inline std::string to_string(Norm n) { return n == Norm::l2 ? "l2" : "l1"; }

inline std::size_t dimension(const Domain& dom) {
    struct V {
        std::size_t operator()(const Interval&) const { return 1; }
        std::size_t operator()(const Box& b) const { return b.lo.size(); }
        std::size_t operator()(const ClippedSimplex& s) const { return s.dim; }
        std::size_t operator()(const Ball& b) const { return b.center.size(); }
    };
    return std::visit(V{}, dom);
}

inline void validate(const Domain& dom) {
    struct V {
        void operator()(const Interval& i) const {
            if (!(i.lo < i.hi)) throw ConfigError("interval: lo must be < hi");
        }
        void operator()(const Box& b) const {
            if (b.lo.empty() || b.lo.size() != b.hi.size())
                throw ConfigError("box: lo/hi must be non-empty and of equal length");
            for (std::size_t k = 0; k < b.lo.size(); ++k)
                if (!(b.lo[k] < b.hi[k])) throw ConfigError("box: lo must be < hi coordinate-wise");
        }
        void operator()(const ClippedSimplex& s) const {
            if (s.dim < 1) throw ConfigError("clipped-simplex: dim must be >= 1");
            if (!(s.alpha >= 0.0 && s.alpha < 1.0))
                throw ConfigError("clipped-simplex: alpha must lie in [0,1)");
        }
        void operator()(const Ball& b) const {
            if (b.center.empty()) throw ConfigError("ball: empty center");
            if (!(b.radius > 0.0)) throw ConfigError("ball: radius must be > 0");
        }
    };
    std::visit(V{}, dom);
}

inline bool contains(const Domain& dom, VecView x, double tol = kMembershipTol) {
    if (x.size() != dimension(dom)) return false;
    struct V {
        VecView x;
        double tol;
        bool operator()(const Interval& i) const { return x[0] >= i.lo - tol && x[0] <= i.hi + tol; }
        bool operator()(const Box& b) const {
            for (std::size_t k = 0; k < x.size(); ++k)
                if (x[k] < b.lo[k] - tol || x[k] > b.hi[k] + tol) return false;
            return true;
        }
        bool operator()(const ClippedSimplex& s) const {
            double sum = 0.0;
            for (double v : x) {
                if (v < s.floor() - tol) return false;
                sum += v;
            }
            return std::abs(sum - 1.0) <= tol;
        }
        bool operator()(const Ball& b) const { return dist_l2(x, b.center) <= b.radius + tol; }
    };
    return std::visit(V{x, tol}, dom);
}

/// A canonical interior starting point: centre of interval/box/ball, uniform on the simplex.
inline Vec center_point(const Domain& dom) {
    struct V {
        Vec operator()(const Interval& i) const { return {0.5 * (i.lo + i.hi)}; }
        Vec operator()(const Box& b) const {
            Vec c(b.lo.size());
            for (std::size_t k = 0; k < c.size(); ++k) c[k] = 0.5 * (b.lo[k] + b.hi[k]);
            return c;
        }
        Vec operator()(const ClippedSimplex& s) const {
            return Vec(s.dim, 1.0 / static_cast<double>(s.dim));
        }
        Vec operator()(const Ball& b) const { return b.center; }
    };
    return std::visit(V{}, dom);
}

struct GeometryConstants {
    double diameter_sq = 0.0;
    double gamma = 0.0;
};

/// D^2 = max Bregman divergence over the domain and the Bregman Lipschitz constant gamma.
/// Throws ConfigError for pairings whose KL diameter is unbounded (alpha == 0) or that
/// have no well-defined strong-convexity pairing.
inline GeometryConstants derive_constants(Mirror mirror, const Domain& dom) {
    validate(dom);
    if (mirror == Mirror::negative_entropy) {
        const auto* s = std::get_if<ClippedSimplex>(&dom);
        if (s == nullptr) throw ConfigError("negative-entropy mirror requires a clipped-simplex domain");
        if (s->alpha <= 0.0)
            throw ConfigError("negative-entropy on the unclipped simplex has unbounded KL diameter");
        const double log_ratio = std::log(static_cast<double>(s->dim) / s->alpha);
        return {log_ratio, log_ratio};
    }
    struct V {
        double operator()(const Interval& i) const { return (i.hi - i.lo) * (i.hi - i.lo); }
        double operator()(const Box& b) const {
            double s = 0.0;
            for (std::size_t k = 0; k < b.lo.size(); ++k) s += (b.hi[k] - b.lo[k]) * (b.hi[k] - b.lo[k]);
            return s;
        }
        double operator()(const ClippedSimplex&) const {
            throw ConfigError("euclidean mirror on a simplex domain is not supported");
        }
        double operator()(const Ball& b) const { return 4.0 * b.radius * b.radius; }
    };
    const double l2_diam_sq = std::visit(V{}, dom);
    const double diameter_sq = 0.5 * l2_diam_sq;
    return {diameter_sq, std::sqrt(2.0) * std::sqrt(diameter_sq)};
}

/// Immutable pairing of a mirror map with a domain, plus its bound constants.
class Geometry {
public:
    Geometry(Mirror mirror, Domain dom) : mirror_(mirror), domain_(std::move(dom)) {
        validate(domain_);
        if (mirror_ == Mirror::negative_entropy && !std::holds_alternative<ClippedSimplex>(domain_))
            throw ConfigError("negative-entropy mirror requires a clipped-simplex domain");
        if (mirror_ == Mirror::euclidean && std::holds_alternative<ClippedSimplex>(domain_))
            throw ConfigError("euclidean mirror on a simplex domain is not supported");
        const auto* s = std::get_if<ClippedSimplex>(&domain_);
        if (s != nullptr && s->alpha <= 0.0) {
            constants_ = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
        } else {
            constants_ = derive_constants(mirror_, domain_);
        }
    }

    static Geometry euclidean(Domain dom) { return Geometry(Mirror::euclidean, std::move(dom)); }
    static Geometry entropy(std::size_t dim, double alpha) {
        return Geometry(Mirror::negative_entropy, ClippedSimplex{dim, alpha});
    }

    Mirror mirror() const { return mirror_; }
    const Domain& domain() const { return domain_; }
    std::size_t dim() const { return dimension(domain_); }
    Norm primal_norm() const { return mirror_ == Mirror::euclidean ? Norm::l2 : Norm::l1; }
    double diameter_sq() const { return constants_.diameter_sq; }
    double diameter() const { return std::sqrt(constants_.diameter_sq); }
    double gamma() const { return constants_.gamma; }
    bool bounded() const { return std::isfinite(constants_.diameter_sq); }

    double primal(VecView v) const { return mirror_ == Mirror::euclidean ? norm_l2(v) : norm_l1(v); }
    double dual(VecView g) const { return mirror_ == Mirror::euclidean ? norm_l2(g) : norm_linf(g); }
    double primal_dist(VecView x, VecView y) const {
        return mirror_ == Mirror::euclidean ? dist_l2(x, y) : dist_l1(x, y);
    }

private:
    Mirror mirror_;
    Domain domain_;
    GeometryConstants constants_;
};

/// B_psi(x, y). Euclidean: 0.5*||x-y||^2. Negative entropy: sum x ln(x/y) - x + y
/// (equal to KL on the simplex), with 0 ln 0 = 0 and y required strictly positive.
inline double bregman(const Geometry& geom, VecView x, VecView y) {
    require_same_dim(x, y, "bregman");
    if (geom.mirror() == Mirror::euclidean) {
        const double d = dist_l2(x, y);
        return 0.5 * d * d;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(y[i] > 0.0)) throw DomainError("bregman: entropy divergence needs y strictly positive");
        if (x[i] < 0.0) throw DomainError("bregman: entropy divergence needs x non-negative");
        if (x[i] > 0.0) s += x[i] * std::log(x[i] / y[i]);
        s += y[i] - x[i];
    }
    return std::max(s, 0.0);
}

namespace detail {

// Cap-and-renormalize KL projection of non-negative weights onto the clipped simplex:
// x_i = max(floor, c * w_i) with c chosen so that the coordinates sum to one. Each pass
// freezes the coordinates that fall under the floor; c only decreases, so at most
// dim passes are needed.
inline Vec kl_project_weights(const ClippedSimplex& s, VecView w) {
    const std::size_t d = s.dim;
    const double fl = s.floor();
    std::vector<char> fixed(d, 0);
    std::size_t n_fixed = 0;
    Vec x(d, fl);
    for (std::size_t pass = 0; pass <= d; ++pass) {
        double free_sum = 0.0;
        for (std::size_t i = 0; i < d; ++i)
            if (!fixed[i]) free_sum += w[i];
        const double mass = 1.0 - fl * static_cast<double>(n_fixed);
        if (free_sum <= 0.0) {
            // Every remaining weight is zero: spread the remaining mass evenly.
            const std::size_t n_free = d - n_fixed;
            for (std::size_t i = 0; i < d; ++i)
                x[i] = fixed[i] ? fl : mass / static_cast<double>(n_free);
            return x;
        }
        const double c = mass / free_sum;
        bool changed = false;
        for (std::size_t i = 0; i < d; ++i) {
            if (fixed[i]) continue;
            if (c * w[i] < fl) {
                fixed[i] = 1;
                ++n_fixed;
                changed = true;
            }
        }
        if (!changed) {
            for (std::size_t i = 0; i < d; ++i) x[i] = fixed[i] ? fl : c * w[i];
            return x;
        }
    }
    return x;  // unreachable: every pass fixes at least one coordinate
}

}  // namespace detail

/// KL projection of log-weights (numerically safe for very negative entries).
inline Vec project_log_weights(const ClippedSimplex& s, VecView log_w) {
    if (log_w.size() != s.dim) throw InputError("project_log_weights: dimension mismatch");
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : log_w) {
        if (std::isnan(v)) throw InputError("project_log_weights: NaN input");
        mx = std::max(mx, v);
    }
    if (!std::isfinite(mx)) throw InputError("project_log_weights: no finite weight");
    Vec w(s.dim);
    for (std::size_t i = 0; i < s.dim; ++i) w[i] = std::exp(log_w[i] - mx);
    return detail::kl_project_weights(s, w);
}

/// Bregman projection of p onto the geometry's domain. Euclidean: clipping for
/// intervals and boxes, radial scaling for balls. Entropy: p is read as non-negative
/// weights and KL-projected onto the clipped simplex.
inline Vec project(const Geometry& geom, VecView p) {
    if (p.size() != geom.dim()) throw InputError("project: dimension mismatch");
    if (!all_finite(p)) throw InputError("project: non-finite input");
    struct V {
        VecView p;
        Vec operator()(const Interval& i) const { return {std::clamp(p[0], i.lo, i.hi)}; }
        Vec operator()(const Box& b) const {
            Vec x(p.size());
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = std::clamp(p[k], b.lo[k], b.hi[k]);
            return x;
        }
        Vec operator()(const ClippedSimplex& s) const {
            for (double v : p)
                if (v < 0.0) throw InputError("project: simplex weights must be non-negative");
            return detail::kl_project_weights(s, p);
        }
        Vec operator()(const Ball& b) const {
            const double r = dist_l2(p, b.center);
            if (r <= b.radius) return Vec(p.begin(), p.end());
            Vec x(p.size());
            const double scale = b.radius / r;
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = b.center[k] + scale * (p[k] - b.center[k]);
            return x;
        }
    };
    return std::visit(V{p}, geom.domain());
}

}  // namespace dynreg
