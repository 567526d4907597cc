#pragma once

// Synthetic non-stationary environments with known comparator sequences. Every
// environment precomputes its whole loss sequence from (kind, parameters, seed, T),
// so a run is reproducible bit for bit from the trace header.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/implicit_solve.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

inline constexpr const char* kGeneratorName = "mt19937_64";

/// Portable draws on top of std::mt19937_64 (whose output sequence is fixed by the standard;
/// the std distributions are not, so they are avoided).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    /// Uniform on [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Uniform on {0, ..., n-1} by rejection.
    std::size_t index(std::size_t n) {
        if (n == 0) throw InputError("rng: empty range");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do v = eng_();
        while (v >= limit);
        return static_cast<std::size_t>(v % n);
    }
    bool coin() { return (eng_() >> 63) != 0; }

private:
    std::mt19937_64 eng_;
};

enum class EnvKind {
    lower_bound,
    alternating_experts,
    shifting_experts,
    drifting_quadratic,
    switching_quadratic,
    fixed_loss,
    sparse_regression
};

inline std::string to_string(EnvKind k) {
    switch (k) {
        case EnvKind::lower_bound: return "lower-bound";
        case EnvKind::alternating_experts: return "alternating-experts";
        case EnvKind::shifting_experts: return "shifting-experts";
        case EnvKind::drifting_quadratic: return "drifting-quadratic";
        case EnvKind::switching_quadratic: return "switching-quadratic";
        case EnvKind::fixed_loss: return "fixed-loss";
        case EnvKind::sparse_regression: return "sparse-regression";
    }
    return "?";
}

inline EnvKind env_kind_from_string(const std::string& s) {
    for (EnvKind k : {EnvKind::lower_bound, EnvKind::alternating_experts, EnvKind::shifting_experts,
                      EnvKind::drifting_quadratic, EnvKind::switching_quadratic, EnvKind::fixed_loss,
                      EnvKind::sparse_regression})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown environment kind '" + s + "'");
}

struct EnvSpec {
    EnvKind kind = EnvKind::fixed_loss;
    std::size_t horizon = 1;
    std::uint64_t seed = 0;
    double sigma = 0.1;          // lower-bound
    std::size_t dim = 2;         // shifting-experts, fixed-loss, sparse-regression
    std::size_t shifts = 0;      // shifting-experts, switching-quadratic, sparse-regression
    bool stochastic = true;      // shifting-experts: fresh losses each round vs piecewise constant
    double tau = 1.0;            // drifting-quadratic
    LossKind loss = LossKind::quadratic;  // fixed-loss
    double l1_weight = 0.0;      // sparse-regression
    double noise = 0.0;          // sparse-regression
};

class Environment {
public:
    explicit Environment(const EnvSpec& spec) : spec_(spec) {
        if (spec.horizon < 1) throw ConfigError("environment: horizon must be >= 1");
        Rng rng(spec.seed);
        switch (spec.kind) {
            case EnvKind::lower_bound: make_lower_bound(rng); break;
            case EnvKind::alternating_experts: make_alternating(); break;
            case EnvKind::shifting_experts: make_shifting(rng); break;
            case EnvKind::drifting_quadratic: make_drifting(rng); break;
            case EnvKind::switching_quadratic: make_switching(rng); break;
            case EnvKind::fixed_loss: make_fixed(rng); break;
            case EnvKind::sparse_regression: make_sparse(rng); break;
        }
    }

    const EnvSpec& spec() const { return spec_; }
    std::size_t horizon() const { return spec_.horizon; }
    const Domain& domain() const { return domain_; }
    std::size_t dim() const { return dimension(domain_); }
    bool experts() const { return std::holds_alternative<ClippedSimplex>(domain_); }

    const Loss& loss(std::size_t t) const { return losses_.at(check(t) - 1); }
    const Vec& comparator(std::size_t t) const { return comparators_.at(check(t) - 1); }
    const std::vector<Loss>& losses() const { return losses_; }
    const std::vector<Vec>& comparators() const { return comparators_; }

private:
    std::size_t check(std::size_t t) const {
        if (t < 1 || t > spec_.horizon)
            throw InputError("environment: round " + std::to_string(t) + " outside [1, " + std::to_string(spec_.horizon) + "]");
        return t;
    }

    // S distinct change rounds in {2..T}: partial Fisher-Yates over the candidates.
    std::vector<bool> change_rounds(Rng& rng) const {
        const std::size_t T = spec_.horizon;
        std::vector<std::size_t> cand(T - 1);
        for (std::size_t i = 0; i < cand.size(); ++i) cand[i] = i + 2;
        std::vector<bool> change(T + 1, false);
        for (std::size_t i = 0; i < spec_.shifts; ++i) {
            const std::size_t j = i + rng.index(cand.size() - i);
            std::swap(cand[i], cand[j]);
            change[cand[i]] = true;
        }
        return change;
    }

    void make_lower_bound(Rng& rng) {
        const double T = static_cast<double>(spec_.horizon);
        if (!(spec_.sigma < 1.0) || !(spec_.sigma * std::sqrt(T) > 1.0))
            throw ConfigError("lower-bound: sigma must lie in (1/sqrt(T), 1)");
        domain_ = Interval{-1.0, 1.0};
        for (std::size_t t = 0; t < spec_.horizon; ++t) {
            const double eps = rng.coin() ? spec_.sigma : -spec_.sigma;
            losses_.push_back(Loss::quadratic({1.0}, eps));
            comparators_.push_back({eps});
        }
    }

    void make_alternating() {
        domain_ = ClippedSimplex{2, 0.0};
        for (std::size_t t = 1; t <= spec_.horizon; ++t) {
            const bool even = t % 2 == 0;
            losses_.push_back(Loss::linear(even ? Vec{1.0, 0.0} : Vec{0.0, 1.0}));
            comparators_.push_back(even ? Vec{0.0, 1.0} : Vec{1.0, 0.0});
        }
    }

    void make_shifting(Rng& rng) {
        const std::size_t d = spec_.dim, T = spec_.horizon;
        if (d < 2) throw ConfigError("shifting-experts: need d >= 2");
        if (spec_.shifts >= T) throw ConfigError("shifting-experts: need 0 <= S < T");
        domain_ = ClippedSimplex{d, 0.0};
        const std::vector<bool> change = change_rounds(rng);
        std::size_t best = rng.index(d);
        Vec segment;
        for (std::size_t t = 1; t <= T; ++t) {
            const bool shift = change[t];
            if (shift) best = (best + 1 + rng.index(d - 1)) % d;
            Vec g(d);
            if (spec_.stochastic) {
                for (std::size_t i = 0; i < d; ++i) g[i] = i == best ? rng.uniform(0.0, 0.5) : rng.uniform();
            } else {
                if (t == 1 || shift) {
                    segment.assign(d, 0.0);
                    for (std::size_t i = 0; i < d; ++i) segment[i] = i == best ? 0.0 : rng.uniform(0.5, 1.0);
                }
                g = segment;
            }
            Vec u(d, 0.0);
            u[best] = 1.0;
            losses_.push_back(Loss::linear(std::move(g)));
            comparators_.push_back(std::move(u));
        }
    }

    void make_drifting(Rng& rng) {
        if (!(spec_.tau >= 0.0)) throw ConfigError("drifting-quadratic: tau must be >= 0");
        domain_ = Interval{-1.0, 1.0};
        const std::size_t T = spec_.horizon;
        const double step = T > 1 ? std::min(spec_.tau / static_cast<double>(T - 1), 1.0) : 0.0;
        double m = rng.uniform(-1.0, 1.0);
        for (std::size_t t = 0; t < T; ++t) {
            if (t > 0) {
                double next = rng.coin() ? m + step : m - step;
                if (next > 1.0 || next < -1.0) next = 2.0 * m - next;
                m = next;
            }
            losses_.push_back(Loss::quadratic({1.0}, m));
            comparators_.push_back({m});
        }
    }

    // Quadratic with a minimiser that jumps to a fresh uniform target at S seeded rounds.
    void make_switching(Rng& rng) {
        if (spec_.shifts >= spec_.horizon) throw ConfigError("switching-quadratic: need 0 <= S < T");
        domain_ = Interval{-1.0, 1.0};
        const std::vector<bool> change = change_rounds(rng);
        double m = rng.uniform(-1.0, 1.0);
        for (std::size_t t = 1; t <= spec_.horizon; ++t) {
            if (change[t]) m = rng.uniform(-1.0, 1.0);
            losses_.push_back(Loss::quadratic({1.0}, m));
            comparators_.push_back({m});
        }
    }

    void make_fixed(Rng& rng) {
        const std::size_t d = spec_.dim;
        if (d < 1) throw ConfigError("fixed-loss: dim must be >= 1");
        domain_ = d == 1 ? Domain{Interval{-1.0, 1.0}} : Domain{Box{Vec(d, -1.0), Vec(d, 1.0)}};
        Vec a(d);
        for (double& v : a) v = rng.uniform(-1.0, 1.0);
        Loss loss;
        switch (spec_.loss) {
            case LossKind::linear: loss = Loss::linear(a); break;
            case LossKind::quadratic: loss = Loss::quadratic(a, rng.uniform(-0.5, 0.5)); break;
            case LossKind::absolute: loss = Loss::absolute(a, rng.uniform(-0.5, 0.5)); break;
            case LossKind::hinge: loss = Loss::hinge(a, rng.coin() ? 1.0 : -1.0); break;
        }
        const Geometry geom = Geometry::euclidean(domain_);
        const Vec u = implicit_update(loss, geom, center_point(domain_), 0.0).x_next;
        losses_.assign(spec_.horizon, loss);
        comparators_.assign(spec_.horizon, u);
    }

    void make_sparse(Rng& rng) {
        const std::size_t d = spec_.dim, T = spec_.horizon;
        if (d < 1) throw ConfigError("sparse-regression: dim must be >= 1");
        if (spec_.shifts >= T) throw ConfigError("sparse-regression: need 0 <= S < T");
        if (!(spec_.l1_weight >= 0.0)) throw ConfigError("sparse-regression: l1_weight must be >= 0");
        domain_ = Box{Vec(d, -1.0), Vec(d, 1.0)};
        const std::size_t nnz = std::max<std::size_t>(1, d / 5);
        auto draw_target = [&] {
            Vec th(d, 0.0);
            for (std::size_t i = 0; i < nnz; ++i) th[rng.index(d)] = rng.uniform(-1.0, 1.0);
            return th;
        };
        // Shifts at evenly spaced rounds keep the sequence independent of the draw order.
        Vec theta = draw_target();
        const std::size_t gap = T / (spec_.shifts + 1);
        for (std::size_t t = 1; t <= T; ++t) {
            if (spec_.shifts > 0 && t > 1 && (t - 1) % gap == 0 && (t - 1) / gap <= spec_.shifts) theta = draw_target();
            Vec a(d);
            for (double& v : a) v = rng.uniform(-1.0, 1.0);
            const double y = dot(a, theta) + spec_.noise * rng.uniform(-1.0, 1.0);
            losses_.push_back(Loss::with_l1(Loss::quadratic(std::move(a), y), spec_.l1_weight));
            comparators_.push_back(theta);
        }
    }

    EnvSpec spec_;
    Domain domain_ = Interval{};
    std::vector<Loss> losses_;
    std::vector<Vec> comparators_;
};

}  // namespace dynreg
