#pragma once

// Combiners over base learners:
//   AbProd / AbProdLearner   anytime (A,B)-Prod, near-constant regret against B
//   AdaptMlProd              second-order multiplicative weights over d experts
//   SleepingMlProd           the same update over a changing set of awake experts
//   SaScaffold               strongly adaptive learner over geometric covering intervals
// plus the path-length interval breaking used in the strongly adaptive analysis.

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <vector>

#include "dynreg/algorithms.hpp"
#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/losses.hpp"

namespace dynreg {

inline constexpr double kRangeTol = 1e-9;

[[noreturn, gnu::cold, gnu::noinline]] inline void throw_out_of_range(double v, const char* what) {
    throw RangeError(std::string(what) + ": loss value " + std::to_string(v) + " outside [0,1]");
}

inline void require_unit_range(double v, const char* what) {
    if (!(v >= -kRangeTol && v <= 1.0 + kRangeTol)) throw_out_of_range(v, what);
}

/// Affine map of a known loss range [lo, hi] onto [0,1].
struct LossNormalizer {
    double lo = 0.0;
    double hi = 1.0;

    LossNormalizer() = default;
    LossNormalizer(double lo_, double hi_) : lo(lo_), hi(hi_) {
        if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi))
            throw ConfigError("loss range must satisfy lo < hi");
    }

    double operator()(double v) const {
        const double s = (v - lo) / (hi - lo);
        require_unit_range(s, "normalizer");
        return std::clamp(s, 0.0, 1.0);
    }
};

// ---------------------------------------------------------------------------
// (A,B)-Prod

class AbProd {
public:
    double w_a() const { return w_a_; }
    double w_b() const { return kWb; }
    double eta() const { return eta_; }
    double r_sq_sum() const { return r_sq_sum_; }
    double k() const { return k_; }

    double p_a() const { return eta_ * w_a_ / (eta_ * w_a_ + kWb / 2.0); }

    /// Observe normalised losses of A and B; returns r_t = l(b) - l(a).
    double update(double loss_a, double loss_b) {
        require_unit_range(loss_a, "ab-prod");
        require_unit_range(loss_b, "ab-prod");
        const double r = std::clamp(loss_b, 0.0, 1.0) - std::clamp(loss_a, 0.0, 1.0);
        const double base = 1.0 + eta_ * r;
        if (!(base > 0.0)) throw SolverError("ab-prod: 1 + eta*r must be positive");
        r_sq_sum_ += r * r;
        const double eta_next = std::min(0.5, 1.0 / std::sqrt(1.0 + r_sq_sum_));
        w_a_ *= std::pow(base, eta_next / eta_);
        k_ += (eta_ / eta_next - 1.0) / std::numbers::e;
        eta_ = eta_next;
        return r;
    }

private:
    static constexpr double kWb = 0.5;
    double w_a_ = 0.5;
    double eta_ = 0.5;
    double r_sq_sum_ = 0.0;
    double k_ = 1.0;
};

/// Plays p_A * a_t + (1 - p_A) * b_t over two learners sharing a convex domain.
class AbProdLearner final : public OnlineLearner {
public:
    AbProdLearner(std::unique_ptr<OnlineLearner> a, std::unique_ptr<OnlineLearner> b, LossNormalizer norm)
        : a_(std::move(a)), b_(std::move(b)), norm_(norm) {
        if (!a_ || !b_) throw ConfigError("ab-prod: both learners are required");
        if (a_->play().size() != b_->play().size()) throw ConfigError("ab-prod: learners play in different dimensions");
        mix();
    }

    std::string name() const override { return "ab-prod"; }
    const Vec& play() const override { return x_; }

    StepInfo observe(const Loss& loss, const RoundContext& ctx) override {
        const double la = norm_(eval(loss, a_->play()));
        const double lb = norm_(eval(loss, b_->play()));
        StepInfo info;
        info.p_a = prod_.p_a();
        info.eta = prod_.eta();
        a_->observe(loss, ctx);
        b_->observe(loss, ctx);
        info.r = prod_.update(la, lb);
        info.loss_a = la;
        info.loss_b = lb;
        info.k = prod_.k();
        info.solver = "mixture";
        mix();
        return info;
    }

    const AbProd& state() const { return prod_; }

private:
    void mix() {
        const double p = prod_.p_a();
        const Vec& a = a_->play();
        const Vec& b = b_->play();
        x_.resize(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) x_[i] = p * a[i] + (1.0 - p) * b[i];
    }

    std::unique_ptr<OnlineLearner> a_, b_;
    LossNormalizer norm_;
    AbProd prod_;
    Vec x_;
};

// ---------------------------------------------------------------------------
// Adapt-ML-Prod. Weights are kept as logarithms so long runs cannot overflow.

class AdaptMlProd {
public:
    explicit AdaptMlProd(std::size_t d) : AdaptMlProd(Vec(d, 1.0 / static_cast<double>(d))) {}
    explicit AdaptMlProd(const Vec& prior) : log_w_(prior.size()), eta_(prior.size()), r_sq_(prior.size(), 0.0) {
        if (prior.size() < 2) throw ConfigError("adapt-ml-prod: need at least two experts");
        double s = 0.0;
        for (double p : prior) {
            if (!(p > 0.0)) throw ConfigError("adapt-ml-prod: prior weights must be positive");
            s += p;
        }
        log_d_ = std::log(static_cast<double>(prior.size()));
        for (std::size_t i = 0; i < prior.size(); ++i) {
            log_w_[i] = std::log(prior[i] / s);
            eta_[i] = rate(0.0);
        }
    }

    std::size_t size() const { return log_w_.size(); }
    double rate(double r_sq) const { return std::min(0.5, std::sqrt(log_d_ / (1.0 + r_sq))); }

    /// p_i proportional to eta_i w_i.
    Vec weights() const {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < size(); ++i) mx = std::max(mx, log_w_[i] + std::log(eta_[i]));
        Vec p(size());
        double s = 0.0;
        for (std::size_t i = 0; i < size(); ++i) s += p[i] = std::exp(log_w_[i] + std::log(eta_[i]) - mx);
        for (double& v : p) v /= s;
        return p;
    }

    /// Returns the mixture loss <p_t, losses>.
    double update(VecView losses) {
        if (losses.size() != size()) throw InputError("adapt-ml-prod: expected one loss per expert");
        for (double v : losses) require_unit_range(v, "adapt-ml-prod");
        const Vec p = weights();
        const double mix = dot(p, losses);
        for (std::size_t i = 0; i < size(); ++i) {
            const double r = mix - std::clamp(losses[i], 0.0, 1.0);
            r_sq_[i] += r * r;
            const double eta_new = rate(r_sq_[i]);
            log_w_[i] = (eta_new / eta_[i]) * (log_w_[i] + std::log1p(eta_[i] * r));
            k_ += (eta_[i] / eta_new - 1.0) / std::numbers::e;
            eta_[i] = eta_new;
        }
        return mix;
    }

    double weight(std::size_t i) const { return std::exp(log_w_[i]); }
    double log_weight(std::size_t i) const { return log_w_[i]; }
    double eta(std::size_t i) const { return eta_[i]; }
    double r_sq_sum(std::size_t i) const { return r_sq_[i]; }
    double k() const { return k_; }

private:
    Vec log_w_, eta_, r_sq_;
    double log_d_ = 0.0;
    double k_ = 1.0;
};

/// Adapt-ML-Prod style update over experts that come and go. Asleep experts keep their
/// state frozen and the prediction renormalises over the awake set. The rate of each
/// expert is min(1/2, 1/sqrt(1 + sum r^2)).
class SleepingMlProd {
public:
    std::size_t add(double prior) {
        if (!(prior > 0.0)) throw ConfigError("sleeping meta: prior must be positive");
        entries_.push_back({std::log(prior), 0.5, std::log(0.5), 0.0, true});
        cached_ = false;
        return entries_.size() - 1;
    }
    void set_awake(std::size_t i, bool awake) {
        entries_.at(i).awake = awake;
        cached_ = false;
    }
    bool awake(std::size_t i) const { return entries_.at(i).awake; }
    std::size_t size() const { return entries_.size(); }
    double eta(std::size_t i) const { return entries_.at(i).eta; }
    double k() const { return k_; }

    /// Mixture weights over awake experts (zero for asleep ones).
    const Vec& weights() const {
        if (cached_) return p_;
        double mx = -std::numeric_limits<double>::infinity();
        p_.assign(entries_.size(), -std::numeric_limits<double>::infinity());
        for (std::size_t i = 0; i < entries_.size(); ++i)
            if (entries_[i].awake) mx = std::max(mx, p_[i] = entries_[i].log_w + entries_[i].log_eta);
        if (!std::isfinite(mx)) throw InputError("sleeping meta: no awake expert");
        double s = 0.0;
        for (double& v : p_) s += v = std::exp(v - mx);
        for (double& v : p_) v /= s;
        cached_ = true;
        return p_;
    }

    /// losses[i] is read only for awake experts. Returns the mixture loss.
    double update(VecView losses) {
        if (losses.size() != entries_.size()) throw InputError("sleeping meta: expected one loss per expert");
        const Vec& p = weights();
        double mix = 0.0;
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (!entries_[i].awake) continue;
            require_unit_range(losses[i], "sleeping meta");
            mix += p[i] * std::clamp(losses[i], 0.0, 1.0);
        }
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            Entry& e = entries_[i];
            if (!e.awake) continue;
            const double r = mix - std::clamp(losses[i], 0.0, 1.0);
            e.r_sq += r * r;
            const double eta_new = std::min(0.5, 1.0 / std::sqrt(1.0 + e.r_sq));
            e.log_w = (eta_new / e.eta) * (e.log_w + std::log1p(e.eta * r));
            k_ += (e.eta / eta_new - 1.0) / std::numbers::e;
            if (eta_new != e.eta) e.log_eta = std::log(eta_new);
            e.eta = eta_new;
        }
        cached_ = false;
        return mix;
    }

    /// Drop experts that will never wake again; indices of the rest shift down.
    void erase(std::size_t i) {
        entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(i));
        cached_ = false;
    }

private:
    struct Entry {
        double log_w, eta, log_eta, r_sq;
        bool awake;
    };
    std::vector<Entry> entries_;
    double k_ = 1.0;
    mutable Vec p_;
    mutable bool cached_ = false;
};

// ---------------------------------------------------------------------------
// Interval breaking

struct PathPiece {
    std::size_t first = 0;  // index into the sequence, inclusive
    std::size_t last = 0;   // inclusive; consecutive pieces share this endpoint
    double path = 0.0;
};

/// Left-to-right partition of a comparator sequence. A piece closes at the first index
/// where its internal path reaches the diameter; the next piece starts there.
inline std::vector<PathPiece> break_by_path_length(const std::vector<Vec>& seq, double diameter, Norm norm) {
    if (!(diameter > 0.0)) throw InputError("break_by_path_length: diameter must be > 0");
    std::vector<PathPiece> out;
    if (seq.empty()) return out;
    PathPiece cur;
    for (std::size_t t = 1; t < seq.size(); ++t) {
        cur.path += norm == Norm::l2 ? dist_l2(seq[t], seq[t - 1]) : dist_l1(seq[t], seq[t - 1]);
        cur.last = t;
        if (cur.path >= diameter) {
            out.push_back(cur);
            cur = PathPiece{t, t, 0.0};
        }
    }
    if (out.empty() || cur.last > cur.first) out.push_back(cur);
    return out;
}

// ---------------------------------------------------------------------------
// Geometric covering intervals [i 2^k, (i+1) 2^k - 1], k >= 0, i >= 1.

struct CoveringInterval {
    std::size_t start = 1;
    std::size_t end = 1;
    unsigned level = 0;

    bool operator==(const CoveringInterval&) const = default;
};

class CoveringSchedule {
public:
    static std::vector<CoveringInterval> active(std::size_t t) {
        if (t == 0) throw InputError("covering: rounds start at 1");
        std::vector<CoveringInterval> out;
        for (unsigned k = 0; (std::size_t{1} << k) <= t; ++k) {
            const std::size_t len = std::size_t{1} << k;
            const std::size_t i = t >> k;
            out.push_back({i * len, (i + 1) * len - 1, k});
        }
        return out;
    }
    static std::vector<CoveringInterval> starting_at(std::size_t t) {
        std::vector<CoveringInterval> out;
        for (const auto& iv : active(t))
            if (iv.start == t) out.push_back(iv);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Strongly adaptive scaffold

using LearnerFactory = std::function<std::unique_ptr<OnlineLearner>(const CoveringInterval&)>;

class SaScaffold final : public OnlineLearner {
public:
    SaScaffold(LearnerFactory factory, LossNormalizer norm) : factory_(std::move(factory)), norm_(norm) {
        if (!factory_) throw ConfigError("sa-scaffold: missing base learner factory");
        spawn(1);
        mix();
    }

    std::string name() const override { return "sa-scaffold"; }
    const Vec& play() const override { return x_; }

    StepInfo observe(const Loss& loss, const RoundContext& ctx) override {
        Vec g(experts_.size());
        for (std::size_t i = 0; i < experts_.size(); ++i) g[i] = norm_(eval(loss, experts_[i].learner->play()));
        StepInfo info;
        info.active = experts_.size();
        meta_.update(g);
        for (auto& e : experts_) e.learner->observe(loss, ctx);
        info.k = meta_.k();
        info.solver = "mixture";
        for (std::size_t i = experts_.size(); i-- > 0;) {
            if (experts_[i].interval.end == round_) {
                experts_.erase(experts_.begin() + static_cast<std::ptrdiff_t>(i));
                meta_.erase(i);
            }
        }
        ++round_;
        spawn(round_);
        mix();
        return info;
    }

    std::size_t active_count() const { return experts_.size(); }
    const std::vector<CoveringInterval> active_intervals() const {
        std::vector<CoveringInterval> out;
        for (const auto& e : experts_) out.push_back(e.interval);
        return out;
    }
    /// Current plays of the awake base learners, in activation order.
    std::vector<Vec> base_plays() const {
        std::vector<Vec> out;
        for (const auto& e : experts_) out.push_back(e.learner->play());
        return out;
    }

private:
    struct Expert {
        CoveringInterval interval;
        std::unique_ptr<OnlineLearner> learner;
    };

    void spawn(std::size_t t) {
        for (const auto& iv : CoveringSchedule::starting_at(t)) {
            const double s = static_cast<double>(iv.start);
            // Prior |I| / (s (s+1)); sums to a finite constant over the covering.
            meta_.add(std::ldexp(1.0, static_cast<int>(iv.level)) / (s * (s + 1.0)));
            experts_.push_back({iv, factory_(iv)});
        }
    }

    void mix() {
        const Vec& p = meta_.weights();
        x_.assign(experts_.front().learner->play().size(), 0.0);
        for (std::size_t i = 0; i < experts_.size(); ++i) {
            const Vec& y = experts_[i].learner->play();
            for (std::size_t j = 0; j < y.size(); ++j) x_[j] += p[i] * y[j];
        }
    }

    LearnerFactory factory_;
    LossNormalizer norm_;
    SleepingMlProd meta_;
    std::vector<Expert> experts_;
    std::size_t round_ = 1;
    Vec x_;
};

/// Adapt-ML-Prod run directly over the d corners of the simplex: x_t = p_t.
class MlProdLearner final : public OnlineLearner {
public:
    MlProdLearner(std::size_t d, LossNormalizer norm) : prod_(d), norm_(norm), x_(prod_.weights()) {}

    std::string name() const override { return "adapt-ml-prod"; }
    const Vec& play() const override { return x_; }

    StepInfo observe(const Loss& loss, const RoundContext&) override {
        if (loss.kind != LossKind::linear || loss.composite)
            throw ConfigError("adapt-ml-prod: expert losses must be linear");
        if (loss.dim() != prod_.size()) throw InputError("adapt-ml-prod: dimension mismatch");
        Vec g(loss.a.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = norm_(loss.a[i]);
        StepInfo info;
        prod_.update(g);
        info.k = prod_.k();
        info.solver = "mixture";
        x_ = prod_.weights();
        return info;
    }

    const AdaptMlProd& state() const { return prod_; }

private:
    AdaptMlProd prod_;
    LossNormalizer norm_;
    Vec x_;
};

}  // namespace dynreg
