#include <gtest/gtest.h>

#include <cmath>

#include "dynreg/envs.hpp"
#include "dynreg/variability.hpp"

using namespace dynreg;

namespace {

EnvSpec make(EnvKind kind, std::size_t T, std::uint64_t seed = 1) {
    EnvSpec s;
    s.kind = kind;
    s.horizon = T;
    s.seed = seed;
    return s;
}

double variability(const Environment& env, VariabilityMode mode) {
    return temporal_variability(env.losses(), env.domain(), mode, {}).value;
}

}  // namespace

TEST(Rng, RangesAndDeterminism) {
    Rng a(42), b(42), c(43);
    std::vector<std::size_t> counts(7, 0);
    bool differs = false;
    for (int i = 0; i < 70000; ++i) {
        const double x = a.uniform();
        EXPECT_EQ(x, b.uniform());
        differs = differs || x != c.uniform();
        ASSERT_GE(x, 0.0);
        ASSERT_LT(x, 1.0);
        const std::size_t k = a.index(7);
        b.index(7);
        c.index(7);
        ASSERT_LT(k, 7u);
        ++counts[k];
    }
    EXPECT_TRUE(differs);
    for (std::size_t n : counts) EXPECT_NEAR(double(n), 10000.0, 500.0);
    EXPECT_STREQ(kGeneratorName, "mt19937_64");
}

TEST(AlternatingExperts, EvenRoundsPenaliseTheFirstExpert) {
    const Environment env(make(EnvKind::alternating_experts, 10));
    EXPECT_EQ(env.loss(2).a, (Vec{1.0, 0.0}));
    EXPECT_EQ(env.comparator(2), (Vec{0.0, 1.0}));
    EXPECT_EQ(env.loss(3).a, (Vec{0.0, 1.0}));
    EXPECT_EQ(env.comparator(3), (Vec{1.0, 0.0}));
    for (std::size_t t = 1; t <= 10; ++t) EXPECT_EQ(eval(env.loss(t), env.comparator(t)), 0.0);
}

TEST(AlternatingExperts, VariabilityAndPathGrowLinearly) {
    const std::size_t T = 101;
    const Environment env(make(EnvKind::alternating_experts, T));
    // Each consecutive pair differs by (1,-1) or (-1,1); the max over the simplex is 1.
    EXPECT_NEAR(variability(env, VariabilityMode::signed_), double(T - 1), 1e-9);
    EXPECT_NEAR(variability(env, VariabilityMode::absolute), double(T - 1), 1e-9);
    EXPECT_NEAR(path_length(env.comparators(), Norm::l1), 2.0 * double(T - 1), 1e-12);
}

TEST(FixedLoss, ZeroVariabilityAndMinimisingComparator) {
    for (LossKind k : {LossKind::linear, LossKind::quadratic, LossKind::absolute, LossKind::hinge}) {
        for (std::size_t d : {1u, 3u}) {
            EnvSpec s = make(EnvKind::fixed_loss, 50, 9);
            s.loss = k;
            s.dim = d;
            const Environment env(s);
            EXPECT_EQ(variability(env, VariabilityMode::signed_), 0.0);
            EXPECT_EQ(variability(env, VariabilityMode::absolute), 0.0);
            EXPECT_EQ(path_length(env.comparators(), Norm::l2), 0.0);
            // Comparator is no worse than any point of a coarse grid of the box.
            const Loss& l = env.loss(1);
            const double fu = eval(l, env.comparator(1));
            const int n = d == 1 ? 2001 : 21;
            std::vector<int> idx(d, 0);
            for (;;) {
                Vec x(d);
                for (std::size_t i = 0; i < d; ++i) x[i] = -1.0 + 2.0 * idx[i] / (n - 1);
                EXPECT_LE(fu, eval(l, x) + 1e-7) << to_string(k) << " d=" << d;
                std::size_t i = 0;
                while (i < d && ++idx[i] == n) idx[i++] = 0;
                if (i == d) break;
            }
        }
    }
}

TEST(LowerBound, SigmaValidation) {
    EnvSpec s = make(EnvKind::lower_bound, 100);
    s.sigma = 0.1;  // sigma sqrt(T) = 1 is not enough
    EXPECT_THROW(Environment{s}, ConfigError);
    s.sigma = 1.0;
    EXPECT_THROW(Environment{s}, ConfigError);
    s.sigma = 0.2;
    EXPECT_NO_THROW(Environment{s});
}

TEST(LowerBound, NoiseAndComparator) {
    EnvSpec s = make(EnvKind::lower_bound, 10000, 5);
    s.sigma = 0.1;
    const Environment env(s);
    std::size_t plus = 0;
    for (std::size_t t = 1; t <= s.horizon; ++t) {
        const double eps = env.comparator(t)[0];
        ASSERT_EQ(std::abs(eps), 0.1);
        EXPECT_EQ(env.loss(t).y, eps);
        EXPECT_EQ(eval(env.loss(t), env.comparator(t)), 0.0);
        plus += eps > 0;
    }
    EXPECT_NEAR(double(plus) / 10000.0, 0.5, 0.02);
}

TEST(LowerBound, MonteCarloRegretAndVariability) {
    const double sigma = 0.1;
    const std::size_t T = 10000, seeds = 200;
    double mean_zero = 0.0, mean_follow = 0.0;
    for (std::uint64_t seed = 1; seed <= seeds; ++seed) {
        EnvSpec s = make(EnvKind::lower_bound, T, seed);
        s.sigma = sigma;
        const Environment env(s);
        // Learners that ignore the data (x = 0) and that replay the last minimiser.
        double zero = 0.0, follow = 0.0, prev = 0.0;
        for (std::size_t t = 1; t <= T; ++t) {
            const double e = env.comparator(t)[0];
            zero += 0.5 * e * e;
            follow += 0.5 * (prev - e) * (prev - e);
            prev = e;
        }
        mean_zero += zero / seeds;
        mean_follow += follow / seeds;
        EXPECT_LE(variability(env, VariabilityMode::absolute), 2.0 * sigma * T);
    }
    EXPECT_GE(mean_zero, sigma * sigma * T / 2.0 - 1e-9);
    EXPECT_GE(mean_follow, sigma * sigma * T / 2.0);
}

TEST(ShiftingExperts, ChangePoints) {
    for (std::size_t S : {0u, 1u, 5u, 20u}) {
        for (bool stochastic : {true, false}) {
            EnvSpec s = make(EnvKind::shifting_experts, 500, 3);
            s.dim = 4;
            s.shifts = S;
            s.stochastic = stochastic;
            const Environment env(s);
            std::size_t changes = 0;
            for (std::size_t t = 2; t <= 500; ++t) changes += env.comparator(t) != env.comparator(t - 1);
            EXPECT_EQ(changes, S);
            for (std::size_t t = 1; t <= 500; ++t) {
                const Vec& g = env.loss(t).a;
                const Vec& u = env.comparator(t);
                const std::size_t best = std::max_element(u.begin(), u.end()) - u.begin();
                if (stochastic) {
                    EXPECT_LE(g[best], 0.5);
                } else {
                    EXPECT_EQ(g[best], 0.0);
                    for (std::size_t i = 0; i < 4; ++i)
                        if (i != best) {
                            EXPECT_GE(g[i], 0.5);
                        }
                }
            }
        }
    }
}

TEST(ShiftingExperts, Validation) {
    EnvSpec s = make(EnvKind::shifting_experts, 10);
    s.shifts = 10;
    EXPECT_THROW(Environment{s}, ConfigError);
    s.shifts = 9;
    EXPECT_NO_THROW(Environment{s});
    s.dim = 1;
    EXPECT_THROW(Environment{s}, ConfigError);
}

TEST(DriftingQuadratic, PathMatchesBudget) {
    for (double tau : {0.0, 0.5, 4.0, 40.0}) {
        for (std::uint64_t seed : {1u, 2u, 3u}) {
            EnvSpec s = make(EnvKind::drifting_quadratic, 1000, seed);
            s.tau = tau;
            const Environment env(s);
            const double C = path_length(env.comparators(), Norm::l2);
            EXPECT_LE(C, tau + 1e-9);
            EXPECT_NEAR(C, tau, 1e-9);
            for (const Vec& u : env.comparators()) {
                EXPECT_LE(std::abs(u[0]), 1.0);
            }
        }
    }
}

TEST(SparseRegression, SparseTargetsInsideTheBox) {
    EnvSpec s = make(EnvKind::sparse_regression, 400, 4);
    s.dim = 20;
    s.shifts = 3;
    s.l1_weight = 0.5;
    const Environment env(s);
    std::size_t changes = 0;
    for (std::size_t t = 1; t <= 400; ++t) {
        const Vec& u = env.comparator(t);
        std::size_t nnz = 0;
        for (double v : u) {
            EXPECT_LE(std::abs(v), 1.0);
            nnz += v != 0.0;
        }
        EXPECT_LE(nnz, 4u);
        EXPECT_TRUE(env.loss(t).composite);
        if (t > 1) changes += u != env.comparator(t - 1);
    }
    EXPECT_LE(changes, 3u);
    EXPECT_GE(changes, 1u);
}

TEST(Environment, DeterministicPerSeed) {
    for (EnvKind k : {EnvKind::lower_bound, EnvKind::shifting_experts, EnvKind::drifting_quadratic,
                      EnvKind::fixed_loss, EnvKind::sparse_regression}) {
        EnvSpec s = make(k, 200, 17);
        s.sigma = 0.3;
        s.shifts = 3;
        s.tau = 2.0;
        const Environment a(s), b(s);
        s.seed = 18;
        const Environment c(s);
        bool differs = false;
        for (std::size_t t = 1; t <= 200; ++t) {
            EXPECT_EQ(a.loss(t).a, b.loss(t).a);
            EXPECT_EQ(a.loss(t).y, b.loss(t).y);
            EXPECT_EQ(a.comparator(t), b.comparator(t));
            differs = differs || a.loss(t).a != c.loss(t).a || a.loss(t).y != c.loss(t).y;
        }
        EXPECT_TRUE(differs) << to_string(k);
    }
}

TEST(Environment, RoundOutOfRange) {
    const Environment env(make(EnvKind::alternating_experts, 5));
    EXPECT_THROW(env.loss(0), InputError);
    EXPECT_THROW(env.loss(6), InputError);
    EXPECT_THROW(env.comparator(6), InputError);
    EXPECT_NO_THROW(env.loss(5));
}
