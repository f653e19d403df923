#include "croplab/loss.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace croplab;

TEST(PerStepGap, HandComputedRow) {
    // Q row (1.0, 0.95, 0.7), rho = 0.1 -> A^ = {1}; shortfall 0.05 scaled by 1 - delta
    const QTable q(1, 3, {1.0, 0.95, 0.7});
    EXPECT_NEAR(per_step_gap(CropPolicy(q, {0.5, 0.1, Variant::QDiff}))[0], 0.025, 1e-15);
    EXPECT_EQ(per_step_gap(CropPolicy(q, {1.0, 0.1, Variant::QDiff}))[0], 0.0);
    EXPECT_EQ(per_step_gap(CropPolicy(q, {0.0, 0.0, Variant::QDiff}))[0], 0.0);
    // both others qualify: mean shortfall (0.05 + 0.3) / 2
    EXPECT_NEAR(per_step_gap(CropPolicy(q, {0.0, 0.5, Variant::QDiff}))[0], 0.175, 1e-15);
}

TEST(PerStepGap, HistoryIndexing) {
    const auto vi = value_iteration(canonical_gridworld());
    const auto gaps = per_step_gap(CropPolicy(vi.q, vi.v, {0.5, 0.1, Variant::ADiff}));
    EXPECT_EQ(gaps.size(), 625u);
    for (double g : gaps) EXPECT_GE(g, 0.0);
}

TEST(LossReport, DegenerateSettingsHaveNoLoss) {
    const auto mdp = canonical_gridworld();
    const auto vi = value_iteration(mdp);
    for (const CropConfig& cfg : {CropConfig{1.0, 0.3, Variant::QDiff}, CropConfig{0.3, 0.0, Variant::QDiff}}) {
        const auto r = loss_bound_report(mdp, CropPolicy(vi.q, vi.v, cfg), 100, 5);
        EXPECT_NEAR(r.empirical_gap, 0.0, 1e-12);
        EXPECT_EQ(r.per_step_gap_max, 0.0);
        EXPECT_EQ(r.visited_gap_sum, 0.0);
        EXPECT_TRUE(r.per_step_ok);
        EXPECT_TRUE(r.sum_ok);
    }
}

TEST(LossReport, BoundArithmetic) {
    const auto mdp = canonical_gridworld();
    const auto vi = value_iteration(mdp);
    const auto r = loss_bound_report(mdp, CropPolicy(vi.q, vi.v, {0.5, 0.05, Variant::QDiff}), 100, 1);
    EXPECT_NEAR(r.bound_per_step, 0.025, 1e-15);
    EXPECT_NEAR(r.e_l_tight, 2.5, 1e-12);
    EXPECT_NEAR(r.e_l_bound, 5.0, 1e-12);
    EXPECT_EQ(r.horizon_n, 100u);
    EXPECT_TRUE(r.bound_guaranteed);
    EXPECT_NEAR(r.g_star, vi.v(0), 1e-10);
}

TEST(LossReport, QDiffSweepNeverViolatesBounds) {
    const auto mdp = canonical_gridworld();
    const auto vi = value_iteration(mdp);
    std::uint64_t seed = 0;
    for (double delta : {0.0, 0.25, 0.5, 0.75, 1.0})
        for (double rho : {0.0, 0.01, 0.05, 0.1, 0.5}) {
            const auto r = loss_bound_report(mdp, CropPolicy(vi.q, vi.v, {delta, rho, Variant::QDiff}), 100, seed++);
            EXPECT_TRUE(r.per_step_ok) << delta << " " << rho;
            EXPECT_TRUE(r.sum_ok) << delta << " " << rho;
            EXPECT_LE(r.e_l_tight, r.e_l_bound);
            EXPECT_GE(r.g_star + 1e-12, r.g_f);
        }
}

TEST(LossReport, RandomMdpsRespectPerStepBound) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto mdp = build_random_mdp(8, 3, 3, 0.9, seed);
        const auto vi = value_iteration(mdp);
        for (double rho : {0.05, 0.2, 1.0}) {
            const auto r = loss_bound_report(mdp, CropPolicy(vi.q, vi.v, {0.4, rho, Variant::QDiff}), 50, seed);
            EXPECT_TRUE(r.per_step_ok);
            EXPECT_TRUE(r.sum_ok);
        }
    }
}

TEST(ExpectedReturn, MatchesIterativeOracle) {
    const auto mdp = canonical_gridworld();
    const auto vi = value_iteration(mdp);
    const CropPolicy crop(vi.q, vi.v, {0.6, 0.1, Variant::QDiff});
    const auto f = crop_stochastic_policy(crop);
    const auto v = oracle::iterate_policy_value(mdp, [&](std::size_t s, std::size_t a) { return f(s, a); });
    double expected = 0.0;
    for (std::size_t s = 0; s < v.size(); ++s) expected += mdp.start_distribution()[s] * v[s];
    EXPECT_NEAR(expected_return_crop(mdp, crop), expected, 1e-10);
}
