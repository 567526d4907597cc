#pragma once

// Per-round online learners sharing one interface:
//   GreedyLearner     plays the minimiser of the previous loss
//   DiomdLearner      implicit mirror descent with a fixed or adaptive schedule
//   DoublingLearner   adaptive implicit mirror descent restarted on a doubling
//                     path-length threshold
//   OgdLearner        projected online gradient descent baseline

#include <cmath>
#include <memory>
#include <optional>
#include <string>

#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/implicit_solve.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

struct RoundContext {
    std::size_t t = 1;
    // ||u_t - u_{t-1}|| in the learner's primal norm, when the comparator is observable.
    std::optional<double> path_increment;
};

/// What a learner reports about one round besides the point it played.
struct StepInfo {
    std::optional<double> delta;
    std::optional<double> lambda;
    std::size_t epoch = 0;
    bool restart = false;
    std::string solver;
    double residual = 0.0;
    // Combiner diagnostics.
    std::optional<double> p_a, loss_a, loss_b, r, eta, k;
    std::optional<std::size_t> active;
};

class OnlineLearner {
public:
    virtual ~OnlineLearner() = default;
    virtual std::string name() const = 0;
    /// x_t, the point played in the current round.
    virtual const Vec& play() const = 0;
    /// Observe l_t and move to x_{t+1}.
    virtual StepInfo observe(const Loss& loss, const RoundContext& ctx) = 0;
    /// lambda_{T+1} after the last observed round, for learners that have one.
    virtual std::optional<double> lambda_next() const { return std::nullopt; }
};

// ---------------------------------------------------------------------------
// Schedules

struct Schedule {
    enum class Kind { fixed, adaptive };
    Kind kind = Kind::adaptive;
    Vec eta;              // fixed: eta_1..eta_T
    double beta_sq = 1.0; // adaptive
    double tau = 0.0;     // adaptive: path-length budget the bound is stated for

    static Schedule fixed(Vec eta) {
        if (eta.empty()) throw ConfigError("fixed schedule: empty eta list");
        for (std::size_t t = 0; t < eta.size(); ++t) {
            if (!(eta[t] > 0.0) || !std::isfinite(eta[t]))
                throw ConfigError("fixed schedule: eta must be finite and > 0 (round " + std::to_string(t + 1) + ")");
            if (t > 0 && eta[t] > eta[t - 1])
                throw ConfigError("fixed schedule: eta must be non-increasing (round " + std::to_string(t + 1) + ")");
        }
        Schedule s;
        s.kind = Kind::fixed;
        s.eta = std::move(eta);
        return s;
    }
    static Schedule constant(double eta, std::size_t horizon) { return fixed(Vec(horizon, eta)); }
    static Schedule inv_sqrt(double eta0, std::size_t horizon) {
        Vec e(horizon);
        for (std::size_t t = 0; t < horizon; ++t) e[t] = eta0 / std::sqrt(static_cast<double>(t + 1));
        return fixed(std::move(e));
    }
    static Schedule inv_t(double eta0, std::size_t horizon) {
        Vec e(horizon);
        for (std::size_t t = 0; t < horizon; ++t) e[t] = eta0 / static_cast<double>(t + 1);
        return fixed(std::move(e));
    }
    static Schedule adaptive(double beta_sq, double tau = 0.0) {
        if (!(beta_sq > 0.0) || !std::isfinite(beta_sq)) throw ConfigError("adaptive schedule: beta^2 must be > 0");
        if (!(tau >= 0.0)) throw ConfigError("adaptive schedule: tau must be >= 0");
        Schedule s;
        s.kind = Kind::adaptive;
        s.beta_sq = beta_sq;
        s.tau = tau;
        return s;
    }
    /// beta^2 = D^2 + gamma * tau.
    static Schedule adaptive_for(const Geometry& geom, double tau) {
        return adaptive(geom.diameter_sq() + geom.gamma() * tau, tau);
    }
};

// ---------------------------------------------------------------------------

class GreedyLearner final : public OnlineLearner {
public:
    explicit GreedyLearner(Geometry geom) : GreedyLearner(geom, center_point(geom.domain())) {}
    GreedyLearner(Geometry geom, Vec x1) : geom_(std::move(geom)), x_(std::move(x1)) {
        if (!contains(geom_.domain(), x_)) throw InputError("greedy: initial point outside the domain");
    }

    std::string name() const override { return "greedy"; }
    const Vec& play() const override { return x_; }

    StepInfo observe(const Loss& loss, const RoundContext&) override {
        ProxResult r = implicit_update(loss, geom_, x_, 0.0);
        StepInfo info;
        info.delta = r.delta;
        info.lambda = 0.0;
        info.solver = to_string(r.solver);
        info.residual = r.residual;
        x_ = std::move(r.x_next);
        return info;
    }
    std::optional<double> lambda_next() const override { return 0.0; }

private:
    Geometry geom_;
    Vec x_;
};

class DiomdLearner final : public OnlineLearner {
public:
    DiomdLearner(Geometry geom, Schedule sched) : DiomdLearner(geom, std::move(sched), center_point(geom.domain())) {}
    DiomdLearner(Geometry geom, Schedule sched, Vec x1)
        : geom_(std::move(geom)), sched_(std::move(sched)), x_(std::move(x1)) {
        if (!contains(geom_.domain(), x_)) throw InputError("diomd: initial point outside the domain");
        if (sched_.kind == Schedule::Kind::adaptive && !geom_.bounded())
            throw ConfigError("diomd: adaptive schedule needs a bounded Bregman diameter");
    }

    std::string name() const override { return "diomd"; }
    const Vec& play() const override { return x_; }

    double current_lambda() const {
        if (sched_.kind == Schedule::Kind::adaptive) return delta_sum_ / sched_.beta_sq;
        if (round_ >= sched_.eta.size())
            throw ConfigError("diomd: fixed schedule exhausted at round " + std::to_string(round_ + 1));
        return 1.0 / sched_.eta[round_];
    }

    StepInfo observe(const Loss& loss, const RoundContext&) override {
        const double lambda = current_lambda();
        ProxResult r = implicit_update(loss, geom_, x_, lambda);
        ++round_;
        // Clamping rounding noise keeps lambda non-decreasing; the raw value is reported.
        delta_sum_ += std::max(r.delta, 0.0);
        StepInfo info;
        info.delta = r.delta;
        info.lambda = lambda;
        info.solver = to_string(r.solver);
        info.residual = r.residual;
        x_ = std::move(r.x_next);
        return info;
    }

    std::optional<double> lambda_next() const override {
        if (sched_.kind == Schedule::Kind::adaptive) return delta_sum_ / sched_.beta_sq;
        if (round_ < sched_.eta.size()) return 1.0 / sched_.eta[round_];
        return std::nullopt;
    }

    double delta_sum() const { return delta_sum_; }
    std::size_t round() const { return round_; }
    const Schedule& schedule() const { return sched_; }

private:
    Geometry geom_;
    Schedule sched_;
    Vec x_;
    double delta_sum_ = 0.0;
    std::size_t round_ = 0;
};

class DoublingLearner final : public OnlineLearner {
public:
    explicit DoublingLearner(Geometry geom) : DoublingLearner(geom, center_point(geom.domain())) {}
    DoublingLearner(Geometry geom, Vec x1) : geom_(std::move(geom)), x_(std::move(x1)) {
        if (!geom_.bounded()) throw ConfigError("doubling: needs a bounded Bregman diameter");
        if (!contains(geom_.domain(), x_)) throw InputError("doubling: initial point outside the domain");
        q_ = threshold(0);
        beta_sq_ = geom_.diameter_sq() + geom_.gamma() * q_;
    }

    std::string name() const override { return "doubling"; }
    const Vec& play() const override { return x_; }

    double threshold(std::size_t i) const { return std::sqrt(2.0) * geom_.diameter() * std::ldexp(1.0, static_cast<int>(i)); }

    StepInfo observe(const Loss& loss, const RoundContext& ctx) override {
        if (!ctx.path_increment)
            throw ConfigError("doubling: the comparator path increment must be observable");
        const double inc = *ctx.path_increment;
        if (!(inc >= 0.0)) throw InputError("doubling: negative path increment at round " + std::to_string(ctx.t));
        c_ += inc;
        StepInfo info;
        if (c_ > q_) {
            ++epoch_;
            q_ = threshold(epoch_);
            delta_sum_ = 0.0;
            c_ = 0.0;
            beta_sq_ = geom_.diameter_sq() + geom_.gamma() * q_;
            info.delta = 0.0;
            info.lambda = 0.0;
            info.epoch = epoch_;
            info.restart = true;
            info.solver = "none";
            return info;  // x_{t+1} = x_t
        }
        const double lambda = delta_sum_ / beta_sq_;
        ProxResult r = implicit_update(loss, geom_, x_, lambda);
        delta_sum_ += std::max(r.delta, 0.0);
        info.delta = r.delta;
        info.lambda = lambda;
        info.epoch = epoch_;
        info.solver = to_string(r.solver);
        info.residual = r.residual;
        x_ = std::move(r.x_next);
        return info;
    }

    std::optional<double> lambda_next() const override { return delta_sum_ / beta_sq_; }

    std::size_t epoch() const { return epoch_; }
    double threshold() const { return q_; }
    double accumulated_path() const { return c_; }
    double beta_sq() const { return beta_sq_; }

private:
    Geometry geom_;
    Vec x_;
    std::size_t epoch_ = 0;
    double q_ = 0.0;
    double c_ = 0.0;
    double beta_sq_ = 0.0;
    double delta_sum_ = 0.0;
};

/// One projected subgradient step x - eta * g.
inline Vec ogd_step(const Geometry& geom, const Loss& loss, VecView x, double eta) {
    if (geom.mirror() != Mirror::euclidean) throw ConfigError("ogd: euclidean geometry only");
    const Vec g = subgradient(loss, x);
    Vec p(x.begin(), x.end());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * g[i];
    return project(geom, p);
}

class OgdLearner final : public OnlineLearner {
public:
    OgdLearner(Geometry geom, Schedule sched) : OgdLearner(geom, std::move(sched), center_point(geom.domain())) {}
    OgdLearner(Geometry geom, Schedule sched, Vec x1) : geom_(std::move(geom)), sched_(std::move(sched)), x_(std::move(x1)) {
        if (geom_.mirror() != Mirror::euclidean) throw ConfigError("ogd: euclidean geometry only");
        if (sched_.kind != Schedule::Kind::fixed) throw ConfigError("ogd: needs a fixed step-size schedule");
    }

    std::string name() const override { return "ogd"; }
    const Vec& play() const override { return x_; }

    StepInfo observe(const Loss& loss, const RoundContext&) override {
        if (round_ >= sched_.eta.size())
            throw ConfigError("ogd: step-size schedule exhausted at round " + std::to_string(round_ + 1));
        const double eta = sched_.eta[round_++];
        x_ = ogd_step(geom_, loss, x_, eta);
        StepInfo info;
        info.lambda = 1.0 / eta;
        info.solver = "gradient";
        return info;
    }

private:
    Geometry geom_;
    Schedule sched_;
    Vec x_;
    std::size_t round_ = 0;
};

}  // namespace dynreg
