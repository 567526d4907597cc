#pragma once

// Run metrics and per-run regret inequalities, all recomputed from a trace.
// Right-hand sides use realised trace quantities only.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "dynreg/errors.hpp"
#include "dynreg/geometry.hpp"
#include "dynreg/implicit_solve.hpp"
#include "dynreg/losses.hpp"
#include "dynreg/meta.hpp"
#include "dynreg/trace.hpp"
#include "dynreg/variability.hpp"

namespace dynreg {

enum class CheckStatus { pass, fail, inapplicable };

inline std::string to_string(CheckStatus s) {
    switch (s) {
        case CheckStatus::pass: return "pass";
        case CheckStatus::fail: return "fail";
        case CheckStatus::inapplicable: return "inapplicable";
    }
    return "?";
}

struct BoundCheck {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    CheckStatus status = CheckStatus::pass;
    std::optional<std::size_t> round;  // first offending round, for per-round invariants
    std::string note;
};

inline constexpr double kBoundAbsTol = 1e-6;
inline constexpr double kBoundRelTol = 1e-10;
inline constexpr double kDeltaTol = 1e-8;

inline bool within(double lhs, double rhs) { return lhs <= rhs + kBoundAbsTol + kBoundRelTol * std::abs(rhs); }

inline BoundCheck inequality(std::string name, double lhs, double rhs) {
    return {std::move(name), lhs, rhs, within(lhs, rhs) ? CheckStatus::pass : CheckStatus::fail, std::nullopt, ""};
}

inline BoundCheck inapplicable(std::string name, std::string why) {
    BoundCheck c;
    c.name = std::move(name);
    c.status = CheckStatus::inapplicable;
    c.note = std::move(why);
    return c;
}

/// Largest x with x - b sqrt(x) - c <= 0 is at most c + b^2 + b sqrt(c).
inline double first_order_bound(double b, double c) {
    if (!(b >= 0.0) || !(c >= 0.0)) throw InputError("first_order_bound: b and c must be >= 0");
    return c + b * b + b * std::sqrt(c);
}

struct RecursionCheck {
    CheckStatus status = CheckStatus::pass;
    double lhs = 0.0;  // Delta_{T+1}
    double rhs = 0.0;  // sqrt(d^2 sum b^2 + c sum a^2)
    std::optional<std::size_t> violated_at;  // 1-based t where the recursion premise fails
};

/// deltas holds Delta_1..Delta_{T+1}; a and b hold T entries. The premise
/// Delta_1 = 0, Delta_{t+1} <= Delta_t + min{d b_t, c a_t^2 / (2 Delta_t)} is verified first.
inline RecursionCheck check_recursion_bound(VecView a, VecView b, double c, double d, VecView deltas,
                                            double tol = 1e-9) {
    if (a.size() != b.size() || deltas.size() != a.size() + 1)
        throw InputError("check_recursion_bound: need |a| = |b| = |deltas| - 1");
    if (!(c >= 0.0) || !(d >= 0.0)) throw InputError("check_recursion_bound: c and d must be >= 0");
    for (std::size_t t = 0; t < a.size(); ++t)
        if (!(a[t] >= 0.0) || !(b[t] >= 0.0)) throw InputError("check_recursion_bound: a and b must be >= 0");
    RecursionCheck out;
    double sa = 0.0, sb = 0.0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        sa += a[t] * a[t];
        sb += b[t] * b[t];
    }
    out.lhs = deltas.back();
    out.rhs = std::sqrt(d * d * sb + c * sa);
    auto premise_fails = [&](std::size_t t) {
        const double lin = d * b[t];
        const double quad = deltas[t] > 0.0 ? c * a[t] * a[t] / (2.0 * deltas[t]) : lin;
        const double step = deltas[t + 1] - deltas[t];
        return step > std::min(lin, quad) + tol * (1.0 + std::abs(deltas[t + 1]));
    };
    if (std::abs(deltas[0]) > tol) {
        out.status = CheckStatus::inapplicable;
        out.violated_at = 1;
        return out;
    }
    for (std::size_t t = 0; t < a.size(); ++t) {
        if (premise_fails(t)) {
            out.status = CheckStatus::inapplicable;
            out.violated_at = t + 1;
            return out;
        }
    }
    out.status = within(out.lhs, out.rhs) ? CheckStatus::pass : CheckStatus::fail;
    return out;
}

// ---------------------------------------------------------------------------
// Algorithm parameters as recorded in the trace header.

struct AlgorithmParams {
    std::string kind;  // greedy | diomd | doubling | ogd | ab-prod | sa-scaffold | adapt-ml-prod
    std::optional<Schedule::Kind> schedule;
    double beta_sq = 0.0;
    double tau = 0.0;
    std::optional<LossNormalizer> range;

    static AlgorithmParams from_json(const json& j) {
        AlgorithmParams p;
        p.kind = detail::field<std::string>(j, "kind", "algorithm");
        if (j.contains("schedule")) {
            const json& s = j.at("schedule");
            const auto sk = detail::field<std::string>(s, "kind", "schedule");
            if (sk == "adaptive") {
                p.schedule = Schedule::Kind::adaptive;
                p.beta_sq = detail::field<double>(s, "beta_sq", "schedule");
                p.tau = detail::field_or<double>(s, "tau", 0.0, "schedule");
            } else {
                p.schedule = Schedule::Kind::fixed;
            }
        }
        if (j.contains("loss_range")) {
            const Vec r = detail::field<Vec>(j, "loss_range", "algorithm");
            if (r.size() != 2) throw ConfigError("algorithm: loss_range must be [lo, hi]");
            p.range = LossNormalizer(r[0], r[1]);
        }
        return p;
    }
};

// ---------------------------------------------------------------------------
// Metrics

struct RunMetrics {
    std::size_t horizon = 0;
    double cum_loss_x = 0.0;
    double cum_loss_u = 0.0;
    double regret = 0.0;
    std::optional<double> static_regret;  // vs the best fixed corner (linear losses on a simplex)
    double v_signed = 0.0;
    double v_absolute = 0.0;
    bool v_exact = true;
    std::size_t v_resolution = 0;
    double path_length = 0.0;     // comparator path in the learner's primal norm
    double sum_grad_sq = 0.0;     // sum ||g_t||_*^2
    double sum_local_sq = 0.0;    // sum_t sum_i x_{t,i} g_{t,i}^2 (simplex learners)
    double linf = 0.0;            // max |g_{t,i}|
    double loss1_x1 = 0.0;
    double lossT_xnext = 0.0;
    std::optional<double> lambda_final;
    std::optional<double> lambda_max;
    std::size_t epochs = 0;
    std::size_t restarts = 0;
    std::optional<double> min_delta;
    std::optional<std::size_t> min_delta_round;
    double sum_delta = 0.0;
    bool composite = false;

    // Per-round series used by the checks.
    Vec loss_x, loss_u, grad_norm, path_inc;
};

struct RunInputs {
    const Trace& trace;
    Geometry geom;        // the learner's geometry
    Domain env_domain;    // where V_T is measured
    AlgorithmParams params;
    VariabilityOptions var_opts;
};

inline RunInputs make_inputs(const Trace& tr) {
    const json& env = tr.header.env;
    if (!env.contains("domain")) throw ReportError("trace header: env.domain missing");
    return RunInputs{tr, geometry_from_json(tr.header.geometry), domain_from_json(env.at("domain")),
                     AlgorithmParams::from_json(tr.header.algorithm), {}};
}

inline RunMetrics compute_metrics(const RunInputs& in) {
    const Trace& tr = in.trace;
    const std::size_t T = tr.rounds.size();
    if (T == 0) throw ReportError("trace has no rounds");
    if (tr.x_next.empty()) throw ReportError("trace: missing x_next");
    RunMetrics m;
    m.horizon = T;
    m.loss_x.resize(T);
    m.loss_u.resize(T);
    m.grad_norm.resize(T);
    m.path_inc.assign(T, 0.0);
    const bool simplex_learner = in.geom.mirror() == Mirror::negative_entropy;
    std::vector<Loss> losses, bases;
    losses.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
        const TraceRound& r = tr.rounds[t];
        m.loss_x[t] = eval(r.loss, r.x);
        m.loss_u[t] = eval(r.loss, r.u);
        m.cum_loss_x += m.loss_x[t];
        m.cum_loss_u += m.loss_u[t];
        const Vec g = subgradient(r.loss, r.x);
        m.grad_norm[t] = in.geom.dual(g);
        m.sum_grad_sq += m.grad_norm[t] * m.grad_norm[t];
        for (std::size_t i = 0; i < g.size(); ++i) {
            m.linf = std::max(m.linf, std::abs(g[i]));
            if (simplex_learner) m.sum_local_sq += r.x[i] * g[i] * g[i];
        }
        if (t > 0) {
            m.path_inc[t] = in.geom.primal_dist(r.u, tr.rounds[t - 1].u);
            m.path_length += m.path_inc[t];
        }
        if (r.info.lambda) {
            m.lambda_max = std::max(m.lambda_max.value_or(*r.info.lambda), *r.info.lambda);
        }
        if (r.info.delta) {
            m.sum_delta += *r.info.delta;
            if (!m.min_delta || *r.info.delta < *m.min_delta) {
                m.min_delta = *r.info.delta;
                m.min_delta_round = r.t;
            }
        }
        m.epochs = std::max(m.epochs, r.info.epoch);
        if (r.info.restart) ++m.restarts;
        m.composite = m.composite || r.loss.composite;
        losses.push_back(r.loss);
    }
    m.regret = m.cum_loss_x - m.cum_loss_u;
    m.loss1_x1 = m.loss_x[0];
    m.lossT_xnext = eval(tr.rounds.back().loss, tr.x_next);
    m.lambda_final = tr.lambda_next;
    if (m.lambda_final) m.lambda_max = std::max(m.lambda_max.value_or(*m.lambda_final), *m.lambda_final);

    // V_T of the variable part: identical to the full loss when the regulariser is shared.
    if (m.composite) {
        bases.reserve(T);
        for (const auto& l : losses) bases.push_back(l.base());
    }
    const std::vector<Loss>& vseq = m.composite ? bases : losses;
    const auto vs = temporal_variability(vseq, in.env_domain, VariabilityMode::signed_, in.var_opts);
    const auto va = temporal_variability(vseq, in.env_domain, VariabilityMode::absolute, in.var_opts);
    m.v_signed = vs.value;
    m.v_absolute = va.value;
    m.v_exact = vs.exact && va.exact;
    m.v_resolution = std::max(vs.resolution, va.resolution);

    const bool linear = std::all_of(losses.begin(), losses.end(),
                                    [](const Loss& l) { return l.kind == LossKind::linear && !l.composite; });
    if (linear && std::holds_alternative<ClippedSimplex>(in.env_domain)) {
        Vec col(losses[0].dim(), 0.0);
        for (const auto& l : losses)
            for (std::size_t i = 0; i < col.size(); ++i) col[i] += l.a[i];
        m.static_regret = m.cum_loss_x - *std::min_element(col.begin(), col.end());
    }
    return m;
}

// ---------------------------------------------------------------------------
// Checks

namespace detail {

inline bool comparators_in(const Trace& tr, const Domain& dom) {
    for (const auto& r : tr.rounds)
        if (!contains(dom, r.u)) return false;
    return true;
}

inline const Vec& next_point(const Trace& tr, std::size_t t) {
    return t + 1 < tr.rounds.size() ? tr.rounds[t + 1].x : tr.x_next;
}

inline void delta_checks(const RunInputs& in, const RunMetrics& m, std::vector<BoundCheck>& out) {
    const Trace& tr = in.trace;
    BoundCheck nonneg{"delta-nonnegative", 0.0, -kDeltaTol, CheckStatus::pass, std::nullopt, ""};
    BoundCheck consistent{"delta-consistency", 0.0, 1e-6, CheckStatus::pass, std::nullopt, ""};
    for (std::size_t t = 0; t < tr.rounds.size(); ++t) {
        const TraceRound& r = tr.rounds[t];
        if (!r.info.delta) throw ReportError("round " + std::to_string(r.t) + ": missing delta");
        const double d = *r.info.delta;
        if (d < -kDeltaTol && !nonneg.round) {
            nonneg.status = CheckStatus::fail;
            nonneg.round = r.t;
        }
        const double lambda = r.info.lambda.value_or(0.0);
        const double again = compute_delta(r.loss, in.geom, r.x, next_point(tr, t), lambda);
        const double err = std::abs(again - d) / (1.0 + std::abs(d));
        if (err > consistent.lhs) consistent.lhs = err;
        if (err > 1e-6 && !consistent.round) {
            consistent.status = CheckStatus::fail;
            consistent.round = r.t;
        }
    }
    // lhs of the sign check is -min delta so that lhs <= rhs reads as "min delta >= -tol".
    nonneg.lhs = -m.min_delta.value_or(0.0);
    nonneg.rhs = kDeltaTol;
    out.push_back(nonneg);
    out.push_back(consistent);
}

inline BoundCheck monotone_lambda(const Trace& tr, bool per_epoch) {
    BoundCheck c{"lambda-monotone", 0.0, 0.0, CheckStatus::pass, std::nullopt, ""};
    bool have_prev = false;
    double prev = 0.0;
    std::size_t epoch = 0;
    for (const auto& r : tr.rounds) {
        if (!r.info.lambda) throw ReportError("round " + std::to_string(r.t) + ": missing lambda");
        const double lam = *r.info.lambda;
        if (r.info.restart || (per_epoch && r.info.epoch != epoch)) {
            epoch = r.info.epoch;
            have_prev = false;
            continue;
        }
        if (have_prev && lam < prev - 1e-12 * (1.0 + prev)) {
            c.lhs = std::max(c.lhs, prev - lam);
            if (!c.round) {
                c.status = CheckStatus::fail;
                c.round = r.t;
            }
        }
        have_prev = true;
        prev = lam;
    }
    return c;
}

inline double variability_arm(const RunMetrics& m) { return m.loss1_x1 - m.lossT_xnext + m.v_signed; }

}  // namespace detail

inline std::vector<BoundCheck> evaluate_bounds(const RunInputs& in, const RunMetrics& m) {
    std::vector<BoundCheck> out;
    const Trace& tr = in.trace;
    const AlgorithmParams& p = in.params;
    const Geometry& geom = in.geom;
    const std::size_t T = tr.rounds.size();
    const bool u_in_domain = detail::comparators_in(tr, geom.domain());
    const bool prox_based = p.kind == "greedy" || p.kind == "diomd" || p.kind == "doubling";
    if (prox_based) detail::delta_checks(in, m, out);

    if (p.kind == "greedy") {
        if (!u_in_domain)
            out.push_back(inapplicable("greedy-variability", "comparator leaves the learner's domain"));
        else
            out.push_back(inequality("greedy-variability", m.regret, detail::variability_arm(m)));
    }

    if (p.kind == "diomd" && p.schedule == Schedule::Kind::fixed) {
        const std::string name = "fixed-schedule";
        if (!geom.bounded()) {
            out.push_back(inapplicable(name, "unbounded Bregman diameter"));
        } else if (!u_in_domain) {
            out.push_back(inapplicable(name, "comparator leaves the learner's domain"));
        } else {
            out.push_back(detail::monotone_lambda(tr, false));
            double rhs = geom.diameter_sq() * tr.rounds.back().info.lambda.value() + m.sum_delta;
            for (std::size_t t = 1; t < T; ++t) rhs += geom.gamma() * *tr.rounds[t].info.lambda * m.path_inc[t];
            out.push_back(inequality(name, m.regret, rhs));
        }
    }

    if (p.kind == "diomd" && p.schedule == Schedule::Kind::adaptive) {
        out.push_back(detail::monotone_lambda(tr, false));
        const double D2 = geom.diameter_sq(), D = geom.diameter(), gamma = geom.gamma(), b2 = p.beta_sq;
        const bool experts = geom.mirror() == Mirror::negative_entropy &&
                             std::holds_alternative<ClippedSimplex>(in.env_domain) && !u_in_domain;

        // lambda_{T+1} <= sqrt((2 D^2 / beta^4 + 1 / beta^2) sum ||g||^2)
        if (!m.lambda_final) throw ReportError("adaptive run without lambda_next");
        out.push_back(inequality("lambda-bound", *m.lambda_final,
                                 std::sqrt((2.0 * D2 / (b2 * b2) + 1.0 / b2) * m.sum_grad_sq)));

        Vec deltas(T + 1);
        for (std::size_t t = 0; t < T; ++t) deltas[t] = *tr.rounds[t].info.lambda;
        deltas[T] = *m.lambda_final;
        const RecursionCheck rc =
            check_recursion_bound(m.grad_norm, m.grad_norm, 1.0 / b2, std::sqrt(2.0) * D / b2, deltas);
        BoundCheck c{"lambda-recursion", rc.lhs, rc.rhs, rc.status, rc.violated_at, ""};
        if (rc.status == CheckStatus::inapplicable) c.note = "recursion premise fails";
        out.push_back(c);

        const std::string pre = m.composite ? "composite-" : "adaptive-";
        if (experts) {
            const auto& s = std::get<ClippedSimplex>(geom.domain());
            bool linear_nonneg = true;
            for (const auto& r : tr.rounds)
                if (r.loss.kind != LossKind::linear || r.loss.composite ||
                    std::any_of(r.loss.a.begin(), r.loss.a.end(), [](double v) { return v < 0.0; }))
                    linear_nonneg = false;
            BoundCheck mem{"clipped-membership", 0.0, 0.0, CheckStatus::pass, std::nullopt, ""};
            for (const auto& r : tr.rounds) {
                if (!contains(geom.domain(), r.x)) {
                    mem.status = CheckStatus::fail;
                    mem.round = r.t;
                    break;
                }
            }
            out.push_back(mem);
            if (!linear_nonneg) {
                out.push_back(inapplicable("experts-bound", "needs linear losses with non-negative gradients"));
            } else if (m.path_length > p.tau + 1e-9) {
                out.push_back(inapplicable("experts-bound", "comparator path exceeds tau"));
            } else {
                const double log_ratio = std::log(static_cast<double>(s.dim) / s.alpha);
                const double factor = ((1.0 + p.tau) * log_ratio + b2) / b2;
                const double arm = std::min(detail::variability_arm(m), std::sqrt((1.0 + b2) * m.sum_local_sq));
                const double rhs = factor * arm + 2.0 * m.linf * static_cast<double>(T) * s.alpha;
                out.push_back(inequality("experts-bound", m.regret, rhs));
            }
        } else if (!u_in_domain) {
            out.push_back(inapplicable(pre + "variability-arm", "comparator leaves the learner's domain"));
            out.push_back(inapplicable(pre + "gradient-arm", "comparator leaves the learner's domain"));
        } else {
            if (m.path_length > p.tau + 1e-9) {
                out.push_back(inapplicable(pre + "variability-arm", "comparator path exceeds tau"));
                out.push_back(inapplicable(pre + "gradient-arm", "comparator path exceeds tau"));
            } else {
                out.push_back(inequality(pre + "variability-arm", m.regret, 2.0 * detail::variability_arm(m)));
                out.push_back(inequality(pre + "gradient-arm", m.regret,
                                         2.0 * std::sqrt((3.0 * D2 + gamma * p.tau) * m.sum_grad_sq)));
            }
            if (std::abs(b2 - D2) <= 1e-12 * D2) {
                const double arm = std::min(detail::variability_arm(m), std::sqrt(3.0 * D2 * m.sum_grad_sq));
                out.push_back(inequality("unknown-path", m.regret, (2.0 + gamma * m.path_length / D2) * arm));
            }
        }
    }

    if (p.kind == "doubling") {
        out.push_back(detail::monotone_lambda(tr, true));
        if (!u_in_domain) {
            out.push_back(inapplicable("doubling-bound", "comparator leaves the learner's domain"));
        } else {
            const double D2 = geom.diameter_sq(), D = geom.diameter(), gamma = geom.gamma();
            const double lg = std::log2(m.path_length / (std::sqrt(2.0) * D) + 1.0);
            out.push_back(inequality("doubling-epochs", static_cast<double>(m.epochs), lg + 1e-12));
            const double c = std::sqrt(2.0) / (D + gamma * std::sqrt(2.0));
            const double arm = std::min(detail::variability_arm(m),
                                        std::sqrt((3.0 * D2 * (lg + 1.0) + gamma * m.path_length) * m.sum_grad_sq));
            out.push_back(inequality("doubling-bound", m.regret, (2.0 + c) * arm));
        }
    }

    if (p.kind == "ab-prod") {
        double mix = 0.0, sa = 0.0, sb = 0.0, rsq = 0.0;
        BoundCheck eta{"prod-eta-monotone", 0.0, 0.0, CheckStatus::pass, std::nullopt, ""};
        std::optional<double> prev;
        for (const auto& r : tr.rounds) {
            const StepInfo& s = r.info;
            if (!s.p_a || !s.loss_a || !s.loss_b || !s.r || !s.eta || !s.k)
                throw ReportError("round " + std::to_string(r.t) + ": missing combiner fields");
            mix += *s.p_a * *s.loss_a + (1.0 - *s.p_a) * *s.loss_b;
            sa += *s.loss_a;
            sb += *s.loss_b;
            rsq += *s.r * *s.r;
            if (prev && *s.eta > *prev && !eta.round) {
                eta.status = CheckStatus::fail;
                eta.round = r.t;
            }
            prev = s.eta;
        }
        const double lnk = std::log(*tr.rounds.back().info.k);
        out.push_back(eta);
        out.push_back(inequality("prod-vs-b", mix - sb, 2.0 * std::numbers::ln2 + 2.0 * lnk));
        out.push_back(inequality("prod-vs-a", mix - sa, 2.0 * std::numbers::ln2 + (2.0 + lnk) * std::sqrt(1.0 + rsq)));
        // The constant C bounding A's loss is not fixed in advance; report the realised one.
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.17g", sa);
        out.back().note = std::string("normalised loss of A ") + buf;
    }

    if (p.kind == "adapt-ml-prod") {
        if (!p.range) throw ReportError("adapt-ml-prod: loss_range missing from the header");
        const std::size_t d = geom.dim();
        const double log_d = std::log(static_cast<double>(d));
        auto rate = [&](double r_sq) { return std::min(0.5, std::sqrt(log_d / (1.0 + r_sq))); };
        Vec eta(d, rate(0.0)), rsq(d, 0.0), lhs(d, 0.0), sum_eta_r2(d, 0.0);
        double k = 1.0;
        for (const auto& r : tr.rounds) {
            Vec l(d);
            for (std::size_t i = 0; i < d; ++i) l[i] = (*p.range)(r.loss.a[i]);
            const double mixl = dot(r.x, l);
            for (std::size_t i = 0; i < d; ++i) {
                const double ri = mixl - l[i];
                lhs[i] += ri;
                sum_eta_r2[i] += eta[i] * ri * ri;
                rsq[i] += ri * ri;
                const double e = rate(rsq[i]);
                k += (eta[i] / e - 1.0) / std::numbers::e;
                eta[i] = e;
            }
        }
        double worst = -std::numeric_limits<double>::infinity();
        BoundCheck c{"ml-prod-per-expert", 0.0, 0.0, CheckStatus::pass, std::nullopt, ""};
        const double eta0 = rate(0.0);
        for (std::size_t i = 0; i < d; ++i) {
            const double rhs = log_d / eta0 + sum_eta_r2[i] + std::log(k) / eta[i];
            if (lhs[i] - rhs > worst) {
                worst = lhs[i] - rhs;
                c.lhs = lhs[i];
                c.rhs = rhs;
                c.note = "expert " + std::to_string(i);
            }
        }
        c.status = within(c.lhs, c.rhs) ? CheckStatus::pass : CheckStatus::fail;
        out.push_back(c);
    }
    return out;
}

}  // namespace dynreg
