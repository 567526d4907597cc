#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>
#include <random>

#include "dynreg/envs.hpp"
#include "dynreg/meta.hpp"

using namespace dynreg;

namespace {

const double kE = std::exp(1.0);

// Plain re-execution of the anytime (A,B)-Prod recursion, weights kept in linear scale.
struct ProdOracle {
    double w_a = 0.5, eta = 0.5, rsq = 0.0, k = 1.0;
    double p() const { return eta * w_a / (eta * w_a + 0.25); }
    void step(double la, double lb) {
        const double r = lb - la;
        rsq += r * r;
        double next = 1.0 / std::sqrt(1.0 + rsq);
        if (next > 0.5) next = 0.5;
        w_a = w_a * std::pow(1.0 + eta * r, next / eta);
        k = k + (eta / next - 1.0) / kE;
        eta = next;
    }
};

// Plain re-execution of Adapt-ML-Prod with uniform prior.
struct MlOracle {
    std::vector<double> w, eta, rsq;
    double k = 1.0, lnd;
    explicit MlOracle(std::size_t d) : w(d, 1.0 / d), eta(d), rsq(d, 0.0), lnd(std::log(double(d))) {
        for (auto& e : eta) e = std::min(0.5, std::sqrt(lnd));
    }
    std::vector<double> p() const {
        double s = 0;
        for (std::size_t i = 0; i < w.size(); ++i) s += eta[i] * w[i];
        std::vector<double> out(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = eta[i] * w[i] / s;
        return out;
    }
    void step(const std::vector<double>& l) {
        const auto pp = p();
        double mix = 0;
        for (std::size_t i = 0; i < l.size(); ++i) mix += pp[i] * l[i];
        for (std::size_t i = 0; i < l.size(); ++i) {
            const double r = mix - l[i];
            rsq[i] += r * r;
            const double e = std::min(0.5, std::sqrt(lnd / (1.0 + rsq[i])));
            w[i] = std::pow(w[i] * (1.0 + eta[i] * r), e / eta[i]);
            k += (eta[i] / e - 1.0) / kE;
            eta[i] = e;
        }
    }
};

Geometry experts_geometry(std::size_t d, std::size_t T) { return Geometry::entropy(d, double(d) / double(T)); }

}  // namespace

TEST(AbProd, SymmetricStart) {
    AbProd p;
    EXPECT_DOUBLE_EQ(p.p_a(), 0.5);
    EXPECT_DOUBLE_EQ(p.w_a(), 0.5);
    EXPECT_DOUBLE_EQ(p.w_b(), 0.5);
    EXPECT_DOUBLE_EQ(p.eta(), 0.5);
}

TEST(AbProd, NoSignalKeepsEverythingFixed) {
    AbProd p;
    for (int t = 0; t < 50; ++t) {
        p.update(0.3, 0.3);
        EXPECT_DOUBLE_EQ(p.p_a(), 0.5);
        EXPECT_DOUBLE_EQ(p.eta(), 0.5);
        EXPECT_DOUBLE_EQ(p.w_a(), 0.5);
    }
    EXPECT_DOUBLE_EQ(p.k(), 1.0);
}

TEST(AbProd, MatchesHandExecution) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int run = 0; run < 50; ++run) {
        AbProd p;
        ProdOracle o;
        for (int t = 0; t < 100; ++t) {
            ASSERT_NEAR(p.p_a(), o.p(), 1e-12);
            const double la = u(rng), lb = u(rng);
            p.update(la, lb);
            o.step(la, lb);
            ASSERT_NEAR(p.w_a(), o.w_a, 1e-12 * (1.0 + o.w_a));
            ASSERT_NEAR(p.eta(), o.eta, 1e-15);
            ASSERT_NEAR(p.k(), o.k, 1e-12);
        }
    }
    // Four rounds with r = 1; the cap binds until sum r^2 reaches 4.
    AbProd p;
    for (int t = 0; t < 3; ++t) {
        p.update(0.0, 1.0);
        EXPECT_DOUBLE_EQ(p.eta(), 0.5);
    }
    EXPECT_NEAR(p.w_a(), 0.5 * 1.5 * 1.5 * 1.5, 1e-15);
    EXPECT_DOUBLE_EQ(p.k(), 1.0);
    p.update(0.0, 1.0);
    EXPECT_NEAR(p.eta(), 1.0 / std::sqrt(5.0), 1e-15);
    EXPECT_NEAR(p.w_a(), 0.5 * 1.5 * 1.5 * 1.5 * std::pow(1.5, (1.0 / std::sqrt(5.0)) / 0.5), 1e-14);
    EXPECT_NEAR(p.k(), 1.0 + (0.5 * std::sqrt(5.0) - 1.0) / kE, 1e-15);
}

TEST(AbProd, RangeViolationIsHardError) {
    AbProd p;
    EXPECT_THROW(p.update(1.1, 0.0), RangeError);
    EXPECT_THROW(p.update(0.0, -0.01), RangeError);
    EXPECT_NO_THROW(p.update(1.0 + 5e-10, 0.0));
    LossNormalizer n(0.0, 2.0);
    EXPECT_DOUBLE_EQ(n(1.0), 0.5);
    EXPECT_THROW(n(2.5), RangeError);
    EXPECT_THROW(LossNormalizer(1.0, 1.0), ConfigError);
}

TEST(AbProd, PerRunInequalities) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int run = 0; run < 100; ++run) {
        AbProd p;
        const double bias = u(rng) - 0.5;
        double mix = 0, sa = 0, sb = 0, rsq = 0, prev_eta = 0.5;
        for (int t = 0; t < 500; ++t) {
            const double la = std::clamp(u(rng) + 0.3 * bias, 0.0, 1.0);
            const double lb = std::clamp(u(rng) - 0.3 * bias, 0.0, 1.0);
            mix += p.p_a() * la + (1 - p.p_a()) * lb;
            sa += la;
            sb += lb;
            rsq += (lb - la) * (lb - la);
            p.update(la, lb);
            ASSERT_LE(p.eta(), prev_eta);
            prev_eta = p.eta();
        }
        const double lnk = std::log(p.k());
        EXPECT_LE(mix - sb, 2 * std::log(2.0) + 2 * lnk + 1e-9);
        EXPECT_LE(mix - sa, 2 * std::log(2.0) + (2 + lnk) * std::sqrt(1 + rsq) + 1e-9);
    }
}

TEST(AdaptMlProd, UniformStart) {
    AdaptMlProd m(4);
    for (double v : m.weights()) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(AdaptMlProd, WinnerWeightIncreases) {
    AdaptMlProd m(3);
    double prev = m.weight(1);
    for (int t = 0; t < 30; ++t) {
        m.update(Vec{1.0, 0.0, 1.0});
        EXPECT_GT(m.weight(1), prev);
        prev = m.weight(1);
    }
}

TEST(AdaptMlProd, MatchesHandExecution) {
    const std::vector<std::vector<double>> script = {
        {0.2, 0.9, 0.5}, {0.0, 1.0, 0.3}, {0.7, 0.1, 0.4}, {0.3, 0.3, 0.9}, {1.0, 0.0, 0.5}};
    AdaptMlProd m(3);
    MlOracle o(3);
    for (const auto& l : script) {
        const auto pm = m.weights(), po = o.p();
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(pm[i], po[i], 1e-12);
        m.update(l);
        o.step(l);
        for (int i = 0; i < 3; ++i) {
            EXPECT_NEAR(m.weight(i), o.w[i], 1e-12);
            EXPECT_NEAR(m.eta(i), o.eta[i], 1e-15);
        }
        EXPECT_NEAR(m.k(), o.k, 1e-12);
    }
}

TEST(AdaptMlProd, PerExpertInequality) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t d : {2u, 5u, 20u}) {
        for (int run = 0; run < 100; ++run) {
            AdaptMlProd m(d);
            const double lnd = std::log(double(d));
            const double eta0 = std::min(0.5, std::sqrt(lnd));
            std::vector<double> regret(d, 0), sum_eta_r2(d, 0), prev_eta(d, eta0);
            for (int t = 0; t < 300; ++t) {
                Vec l(d);
                for (std::size_t i = 0; i < d; ++i) l[i] = std::clamp(u(rng) - (i == std::size_t(run) % d ? 0.2 : 0.0), 0.0, 1.0);
                const Vec p = m.weights();
                double mix = 0;
                for (std::size_t i = 0; i < d; ++i) mix += p[i] * l[i];
                for (std::size_t i = 0; i < d; ++i) {
                    regret[i] += mix - l[i];
                    sum_eta_r2[i] += m.eta(i) * (mix - l[i]) * (mix - l[i]);
                }
                m.update(l);
                for (std::size_t i = 0; i < d; ++i) {
                    ASSERT_LE(m.eta(i), prev_eta[i]);
                    prev_eta[i] = m.eta(i);
                }
            }
            for (std::size_t i = 0; i < d; ++i)
                EXPECT_LE(regret[i], lnd / eta0 + sum_eta_r2[i] + std::log(m.k()) / m.eta(i) + 1e-9);
        }
    }
}

TEST(SleepingMlProd, AsleepExpertsAreFrozen) {
    SleepingMlProd s;
    s.add(0.5);
    s.add(0.5);
    s.add(0.25);
    s.set_awake(2, false);
    const Vec p = s.weights();
    EXPECT_EQ(p[2], 0.0);
    EXPECT_NEAR(p[0] + p[1], 1.0, 1e-15);
    const double eta2 = s.eta(2);
    s.update(Vec{0.1, 0.9, 123.0});  // asleep loss is never read
    EXPECT_EQ(s.eta(2), eta2);
    s.set_awake(2, true);
    EXPECT_GT(s.weights()[2], 0.0);
}

TEST(IntervalBreaking, ConstantSequenceIsOnePiece) {
    std::vector<Vec> seq(20, Vec{0.3, 0.1});
    const auto pieces = break_by_path_length(seq, 1.0, Norm::l2);
    ASSERT_EQ(pieces.size(), 1u);
    EXPECT_EQ(pieces[0].first, 0u);
    EXPECT_EQ(pieces[0].last, 19u);
    EXPECT_EQ(pieces[0].path, 0.0);
}

TEST(IntervalBreaking, AlternatingUnitSteps) {
    std::vector<Vec> seq;
    for (int t = 0; t < 11; ++t) seq.push_back({double(t % 2)});
    const auto pieces = break_by_path_length(seq, 1.0, Norm::l2);
    for (const auto& p : pieces) {
        EXPECT_GE(p.path, 1.0);
        EXPECT_LE(p.path, 2.0);
    }
    EXPECT_EQ(pieces.size(), 10u);
}

TEST(IntervalBreaking, RandomSequences) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int run = 0; run < 1000; ++run) {
        const double D = 0.2 + 2.0 * u(rng);
        const std::size_t n = 2 + rng() % 200;
        const double scale = u(rng);
        std::vector<Vec> seq;
        // Points inside a disc of diameter D, so every single step is at most D.
        for (std::size_t t = 0; t < n; ++t) {
            const double r = 0.5 * D * std::sqrt(u(rng)) * scale, th = 6.283185307179586 * u(rng);
            seq.push_back({r * std::cos(th), r * std::sin(th)});
        }
        double C = 0;
        for (std::size_t t = 1; t < n; ++t) C += dist_l2(seq[t], seq[t - 1]);
        const auto pieces = break_by_path_length(seq, D, Norm::l2);
        double sum = 0;
        for (std::size_t k = 0; k < pieces.size(); ++k) {
            EXPECT_LE(pieces[k].path, 2 * D + 1e-12);
            if (k > 0) {
                EXPECT_EQ(pieces[k].first, pieces[k - 1].last);
            }
            sum += pieces[k].path;
        }
        EXPECT_EQ(pieces.front().first, 0u);
        EXPECT_EQ(pieces.back().last, n - 1);
        EXPECT_NEAR(sum, C, 1e-9 * (1 + C));
        EXPECT_LE(double(pieces.size()), (C + D) / D + 1e-12);
    }
    EXPECT_THROW(break_by_path_length({{0.0}}, 0.0, Norm::l2), InputError);
}

TEST(Covering, ActiveSets) {
    for (std::size_t t = 1; t <= 5000; ++t) {
        const auto act = CoveringSchedule::active(t);
        EXPECT_EQ(act.size(), std::size_t(std::floor(std::log2(double(t)))) + 1);
        for (const auto& iv : act) {
            EXPECT_LE(iv.start, t);
            EXPECT_GE(iv.end, t);
            EXPECT_EQ(iv.end - iv.start + 1, std::size_t{1} << iv.level);
            EXPECT_EQ(iv.start % (std::size_t{1} << iv.level), 0u);
        }
    }
    // Independent count at t = 1024: every k with 2^k <= 1024 has exactly one interval [i 2^k, (i+1) 2^k - 1] containing t.
    std::size_t n = 0;
    for (std::size_t k = 0; k < 20; ++k)
        for (std::size_t i = 1; i * (std::size_t{1} << k) <= 1024; ++i)
            if (i * (std::size_t{1} << k) <= 1024 && 1024 <= (i + 1) * (std::size_t{1} << k) - 1) ++n;
    EXPECT_EQ(n, 11u);
    EXPECT_EQ(CoveringSchedule::active(1024).size(), 11u);
    EXPECT_EQ(CoveringSchedule::starting_at(8).size(), 4u);
    EXPECT_EQ(CoveringSchedule::starting_at(7).size(), 1u);
}

TEST(SaScaffold, FirstRoundPlaysTheSingleBaseLearner) {
    const Geometry geom = experts_geometry(3, 100);
    SaScaffold s([&](const CoveringInterval&) { return std::make_unique<DiomdLearner>(geom, Schedule::adaptive(std::log(100.0))); },
                 LossNormalizer(0, 1));
    DiomdLearner ref(geom, Schedule::adaptive(std::log(100.0)));
    EXPECT_EQ(s.active_count(), 1u);
    EXPECT_EQ(s.play(), ref.play());
}

TEST(SaScaffold, ActiveSetTracksCovering) {
    const Geometry geom = Geometry::euclidean(Interval{-1, 1});
    SaScaffold s([&](const CoveringInterval&) { return std::make_unique<GreedyLearner>(geom); }, LossNormalizer(0, 2));
    const Loss l = Loss::quadratic({1.0}, 0.2);
    for (std::size_t t = 1; t <= 1100; ++t) {
        auto act = s.active_intervals();
        auto want = CoveringSchedule::active(t);
        const auto by_start = [](const CoveringInterval& a, const CoveringInterval& b) {
            return std::tie(a.start, a.level) < std::tie(b.start, b.level);
        };
        std::sort(act.begin(), act.end(), by_start);
        std::sort(want.begin(), want.end(), by_start);
        EXPECT_EQ(act, want);
        if (t == 1024) {
            EXPECT_LE(act.size(), 11u);
        }
        s.observe(l, RoundContext{t, 0.0});
    }
}

TEST(SaScaffold, RangeViolationIsHardError) {
    const Geometry geom = Geometry::euclidean(Interval{-1, 1});
    SaScaffold s([&](const CoveringInterval&) { return std::make_unique<GreedyLearner>(geom); }, LossNormalizer(0, 0.1));
    EXPECT_THROW(s.observe(Loss::quadratic({1.0}, 1.0), RoundContext{1, 0.0}), RangeError);
}

// Geometric covering restarts every base learner at powers of two, so the longest-lived
// learner in the pool on [1,T] is the chain of dyadic-block learners [2^k, 2^(k+1)-1].
// Their regrets are read from the scaffold's own base plays.
TEST(SaScaffold, StationaryWithinTwiceTheBestBaseLearner) {
    const std::size_t T = 1024, d = 5;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        EnvSpec spec;
        spec.kind = EnvKind::shifting_experts;
        spec.dim = d;
        spec.shifts = 0;
        spec.horizon = T;
        spec.seed = seed;
        const Environment env(spec);
        const Geometry geom = experts_geometry(d, T);
        const Schedule sched = Schedule::adaptive(std::log(double(T)));
        SaScaffold s([&](const CoveringInterval&) { return std::make_unique<DiomdLearner>(geom, sched); },
                     LossNormalizer(0, 1));
        double scaffold = 0, blocks = 0;
        for (std::size_t t = 1; t <= T; ++t) {
            const Loss& l = env.loss(t);
            const double lu = eval(l, env.comparator(t));
            scaffold += eval(l, s.play()) - lu;
            const auto act = s.active_intervals();
            const auto plays = s.base_plays();
            std::size_t found = 0;
            for (std::size_t i = 0; i < act.size(); ++i) {
                if ((act[i].start & (act[i].start - 1)) == 0 && act[i].start == (std::size_t{1} << act[i].level)) {
                    blocks += eval(l, plays[i]) - lu;
                    ++found;
                }
            }
            ASSERT_EQ(found, 1u) << "t=" << t;
            s.observe(l, RoundContext{t, 0.0});
        }
        EXPECT_LE(scaffold, 2.0 * blocks) << "seed " << seed;
    }
}
