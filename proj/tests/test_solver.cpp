#include "croplab/mdp.hpp"
#include "croplab/solver.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace croplab;

TEST(ValueIteration, ZeroRewardFixedPoint) {
    auto mdp = build_random_mdp(12, 3, 3, 0.9, 5);
    std::vector<std::vector<Transition>> succ;
    for (State s = 0; s < 12; ++s)
        for (Action a = 0; a < 3; ++a) {
            auto row = mdp.successors(s, a);
            succ.emplace_back(row.begin(), row.end());
        }
    const FiniteMdp zero{12, 3, succ, std::vector<double>(36, 0.0), 0.9, {}, std::vector<double>(12, 1.0 / 12)};
    const auto vi = value_iteration(zero);
    for (double x : vi.q.values()) EXPECT_EQ(x, 0.0);
}

TEST(ValueIteration, ResidualsContractByGamma) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto mdp = build_random_mdp(30, 4, 4, 0.95, seed);
        const auto vi = value_iteration(mdp, 1e-10);
        ASSERT_GE(vi.residuals.size(), 2u);
        EXPECT_LE(vi.residuals.back(), 1e-10);
        for (std::size_t k = 1; k < vi.residuals.size(); ++k)
            EXPECT_LE(vi.residuals[k], mdp.gamma() * vi.residuals[k - 1] + 1e-12) << "sweep " << k;
    }
}

TEST(ValueIteration, RangeAndConsistency) {
    const auto mdp = build_random_mdp(40, 3, 5, 0.9, 17);
    const auto vi = value_iteration(mdp);
    for (State s = 0; s < mdp.n_states(); ++s) {
        double best = -1.0;
        for (Action a = 0; a < 3; ++a) {
            EXPECT_GE(vi.q(s, a), 0.0);
            EXPECT_LT(vi.q(s, a), mdp.value_upper_bound());
            best = std::max(best, vi.q(s, a));
        }
        EXPECT_EQ(vi.v(s), best);
    }
}

TEST(ValueIteration, ReportsNonConvergence) {
    const auto mdp = build_random_mdp(10, 2, 3, 0.99, 1);
    try {
        value_iteration(mdp, 1e-12, 5);
        FAIL() << "expected NonConvergence";
    } catch (const NonConvergence& e) {
        EXPECT_EQ(e.iterations(), 5u);
        EXPECT_GT(e.residual(), 1e-12);
    }
    EXPECT_THROW(value_iteration(mdp, 0.0), std::invalid_argument);
}

TEST(GreedyPolicy, ArgmaxWithLowestIndexTies) {
    const QTable q(3, 2, {1.0, 0.95, 0.5, 0.5, 0.2, 0.7});
    const auto pi = greedy_policy(q);
    EXPECT_EQ(pi(0, 0), 1.0);
    EXPECT_EQ(pi(1, 0), 1.0);
    EXPECT_EQ(pi(2, 1), 1.0);
}

TEST(GreedyPolicy, InvariantUnderPositiveAffineMaps) {
    const auto vi = value_iteration(build_random_mdp(25, 4, 3, 0.9, 8));
    std::vector<double> scaled;
    for (double x : vi.q.values()) scaled.push_back(2.0 * x);
    EXPECT_EQ(greedy_policy(vi.q), greedy_policy(QTable(25, 4, scaled)));
    scaled.clear();
    for (double x : vi.q.values()) scaled.push_back(3.0 * x + 0.25);
    EXPECT_EQ(greedy_policy(vi.q), greedy_policy(QTable(25, 4, scaled)));
}

TEST(ExactEvaluation, GreedyOptimalRecoversOptimalValues) {
    for (const auto& mdp : {canonical_gridworld(), build_random_mdp(30, 3, 4, 0.9, 2)}) {
        const auto vi = value_iteration(mdp);
        const auto ev = evaluate_policy_exact(mdp, greedy_policy(vi.q));
        for (State s = 0; s < mdp.n_states(); ++s) EXPECT_NEAR(ev.v(s), vi.v(s), 1e-8);
    }
}

TEST(ExactEvaluation, MatchesIterativeOracleOnRandomPolicies) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        const auto mdp = build_random_mdp(15, 3, 4, 0.85, 100 + seed);
        Rng rng = make_rng(seed);
        std::vector<double> probs;
        for (State s = 0; s < 15; ++s) {
            double a = uniform01(rng), b = uniform01(rng), c = uniform01(rng);
            const double t = a + b + c;
            probs.insert(probs.end(), {a / t, b / t, c / t});
        }
        const StochasticPolicy pi(15, 3, probs);
        const auto ev = evaluate_policy_exact(mdp, pi);
        const auto ref = oracle::iterate_policy_value(mdp, [&](std::size_t s, std::size_t a) { return pi(s, a); });
        for (State s = 0; s < 15; ++s) EXPECT_NEAR(ev.v(s), ref[s], 1e-10);
        // Q consistent with V under the policy
        for (State s = 0; s < 15; ++s) {
            double v = 0.0;
            for (Action a = 0; a < 3; ++a) v += pi(s, a) * ev.q(s, a);
            EXPECT_NEAR(v, ev.v(s), 1e-10);
        }
    }
}

TEST(ExactEvaluation, UniformPolicyOnZeroRewardIsZero) {
    const auto chain = build_chain(6, 0.9);
    std::vector<std::vector<Transition>> succ;
    for (State s = 0; s < 6; ++s)
        for (Action a = 0; a < 2; ++a) {
            auto row = chain.successors(s, a);
            succ.emplace_back(row.begin(), row.end());
        }
    const FiniteMdp zero{6, 2, succ, std::vector<double>(12, 0.0), 0.9, {5}, {1, 0, 0, 0, 0, 0}};
    const auto ev = evaluate_policy_exact(zero, StochasticPolicy::uniform(6, 2));
    for (double v : ev.v.values()) EXPECT_EQ(v, 0.0);
}

TEST(ExactEvaluation, MixedPolicyOnChainMatchesMonteCarlo) {
    const auto mdp = build_chain(3, 0.9);
    const auto pi = StochasticPolicy::uniform(3, 2);
    const double exact = evaluate_policy_exact(mdp, pi).v(0);
    const auto mc = oracle::sample_mean(1000000, [&](std::size_t i) {
        return discounted_return(rollout(mdp, pi, 400, derive_seed(21, {i})), mdp.gamma());
    });
    EXPECT_NEAR(mc.mean, exact, 3 * mc.stderr_);
}

TEST(ExactEvaluation, OccupancyIsADistribution) {
    const auto mdp = canonical_gridworld();
    const auto d = discounted_occupancy(mdp, StochasticPolicy::uniform(25, 4));
    double total = 0.0;
    for (double x : d) {
        EXPECT_GE(x, -1e-12);
        total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(QLearning, RejectsZeroEpisodes) {
    EXPECT_THROW(q_learning(build_chain(5, 0.9), 0, LearningRate{}, 0.1, 1), std::invalid_argument);
}

TEST(QLearning, ChainGreedyPolicyMatchesValueIteration) {
    const auto mdp = build_chain(5, 0.9);
    const auto q = q_learning(mdp, 10000, LearningRate{}, 0.1, 3);
    const auto exact = value_iteration(mdp);
    const auto learned = greedy_policy(q), optimal = greedy_policy(exact.q);
    for (State s = 0; s < 4; ++s)
        for (Action a = 0; a < 2; ++a) EXPECT_EQ(learned(s, a), optimal(s, a)) << "state " << s;
}

TEST(QLearning, SameSeedSameTable) {
    const auto mdp = canonical_gridworld();
    EXPECT_EQ(q_learning(mdp, 200, LearningRate{}, 0.2, 9), q_learning(mdp, 200, LearningRate{}, 0.2, 9));
}

TEST(QLearning, MoreEpisodesShrinkTheGapToOptimal) {
    const auto mdp = build_chain(5, 0.9);
    const auto exact = value_iteration(mdp).q;
    int improved = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const double few = sup_norm_gap(q_learning(mdp, 20, LearningRate{}, 0.3, seed), exact);
        const double many = sup_norm_gap(q_learning(mdp, 5000, LearningRate{}, 0.3, seed), exact);
        improved += many < few;
    }
    EXPECT_GE(improved, 4);
}
