#include "croplab/mdp.hpp"
#include "croplab/solver.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <map>

using namespace croplab;

namespace {

void expect_rows_normalized(const FiniteMdp& mdp) {
    for (State s = 0; s < mdp.n_states(); ++s)
        for (Action a = 0; a < mdp.n_actions(); ++a) {
            double total = 0.0;
            for (const auto& t : mdp.successors(s, a)) total += t.prob;
            EXPECT_NEAR(total, 1.0, 1e-9) << "row (" << s << ", " << a << ")";
        }
}

} // namespace

TEST(Gridworld, TwoCellGridIsForcedSingleStep) {
    const auto mdp = build_gridworld(2, 1, {1, 0}, 0.0, 1.0, 0.0, 0.9);
    EXPECT_EQ(mdp.n_states(), 2u);
    EXPECT_TRUE(mdp.is_terminal(1));
    EXPECT_DOUBLE_EQ(mdp.reward(0, kRight), 1.0);
    EXPECT_DOUBLE_EQ(mdp.prob(0, kRight, 1), 1.0);
    const auto vi = value_iteration(mdp);
    EXPECT_DOUBLE_EQ(vi.q(0, kRight), 1.0);
}

TEST(Gridworld, SlipRowsSumToOne) {
    const auto mdp = build_gridworld(5, 5, {4, 4}, 0.0, 1.0, 0.1, 0.9);
    expect_rows_normalized(mdp);
    // interior cell: intended move 0.9, each lateral 0.05
    const State s = 2 * 5 + 2;
    EXPECT_DOUBLE_EQ(mdp.prob(s, kRight, s + 1), 0.9);
    EXPECT_DOUBLE_EQ(mdp.prob(s, kRight, s - 5), 0.05);
    EXPECT_DOUBLE_EQ(mdp.prob(s, kRight, s + 5), 0.05);
}

TEST(Gridworld, OptimalValuesInsideDiscountedRange) {
    const auto mdp = build_gridworld(5, 5, {4, 4}, 0.0, 1.0, 0.1, 0.9);
    const auto vi = value_iteration(mdp);
    for (State s = 0; s < mdp.n_states(); ++s)
        for (Action a = 0; a < 4; ++a) {
            if (mdp.is_terminal(s)) {
                EXPECT_EQ(vi.q(s, a), 0.0);
                continue;
            }
            EXPECT_GT(vi.q(s, a), 0.0);
            EXPECT_LT(vi.q(s, a), 10.0);
        }
}

TEST(Gridworld, RejectsInvalidParameters) {
    EXPECT_THROW(build_gridworld(3, 3, {2, 2}, -0.1, 1.0, 0.0, 0.9), std::invalid_argument);
    EXPECT_THROW(build_gridworld(3, 3, {2, 2}, 0.0, 1.5, 0.0, 0.9), std::invalid_argument);
    EXPECT_THROW(build_gridworld(3, 3, {2, 2}, 0.0, 1.0, 0.0, 1.0), std::invalid_argument);
    EXPECT_THROW(build_gridworld(3, 3, {2, 2}, 0.0, 1.0, 1.0, 0.9), std::invalid_argument);
    EXPECT_THROW(build_gridworld(3, 3, {3, 0}, 0.0, 1.0, 0.0, 0.9), std::invalid_argument);
}

TEST(Chain, TwoStatesHaveOneDecisionState) {
    const auto mdp = build_chain(2, 0.9);
    EXPECT_FALSE(mdp.is_terminal(0));
    EXPECT_TRUE(mdp.is_terminal(1));
    EXPECT_DOUBLE_EQ(mdp.reward(0, kAdvance), 1.0);
}

TEST(Chain, FiveStateValueMatchesHandUnrolling) {
    const auto vi = value_iteration(build_chain(5, 0.9));
    // rewards arrive on the 4th transition: V*(s0) = 0.9^3
    EXPECT_NEAR(vi.v(0), 0.9 * 0.9 * 0.9, 1e-12);
    for (State s = 0; s < 4; ++s) {
        EXPECT_GT(vi.q(s, kAdvance), vi.q(s, kStay)) << "state " << s;
    }
    EXPECT_THROW(build_chain(1, 0.9), std::invalid_argument);
}

TEST(FiniteMdp, ValidatesInvariants) {
    std::vector<std::vector<Transition>> succ{{{0, 0.5}, {1, 0.4}}, {{1, 1.0}}};
    EXPECT_THROW((FiniteMdp{2, 1, succ, {0.0, 0.0}, 0.9, {1}, {1.0, 0.0}}), std::invalid_argument);
    succ[0] = {{0, 0.5}, {1, 0.5}};
    EXPECT_THROW((FiniteMdp{2, 1, succ, {2.0, 0.0}, 0.9, {1}, {1.0, 0.0}}), std::invalid_argument);
    EXPECT_THROW((FiniteMdp{2, 1, succ, {0.5, 0.0}, 1.0, {1}, {1.0, 0.0}}), std::invalid_argument);
    // terminal state must self-loop with zero reward
    EXPECT_THROW((FiniteMdp{2, 1, succ, {0.5, 0.3}, 0.9, {1}, {1.0, 0.0}}), std::invalid_argument);
    EXPECT_NO_THROW((FiniteMdp{2, 1, succ, {0.5, 0.0}, 0.9, {1}, {1.0, 0.0}}));
}

TEST(Rollout, DeterministicModelIgnoresSeed) {
    const auto mdp = build_chain(6, 0.9);
    const auto pi = StochasticPolicy::one_hot(std::vector<Action>(6, kAdvance), 2);
    const auto a = rollout(mdp, pi, 20, std::uint64_t{1});
    const auto b = rollout(mdp, pi, 20, std::uint64_t{987654321});
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), 5u);
    EXPECT_TRUE(a.is_chained());
}

TEST(Rollout, FixedSeedIsBitIdentical) {
    const auto mdp = canonical_gridworld();
    const auto pi = StochasticPolicy::uniform(mdp.n_states(), 4);
    for (std::uint64_t seed : {0ull, 1ull, 42ull}) {
        const auto a = rollout(mdp, pi, 50, seed);
        const auto b = rollout(mdp, pi, 50, seed);
        EXPECT_EQ(a, b);
        EXPECT_LE(a.size(), 50u);
        EXPECT_TRUE(a.is_chained());
    }
}

TEST(Rollout, StopsAtTerminalOrHorizon) {
    const auto mdp = build_chain(4, 0.9);
    const auto stay = StochasticPolicy::one_hot(std::vector<Action>(4, kStay), 2);
    EXPECT_EQ(rollout(mdp, stay, 7, std::uint64_t{3}).size(), 7u);
    const auto go = StochasticPolicy::one_hot(std::vector<Action>(4, kAdvance), 2);
    const auto t = rollout(mdp, go, 100, std::uint64_t{3});
    EXPECT_EQ(t.size(), 3u);
    EXPECT_TRUE(mdp.is_terminal(t.steps.back().next_state));
}

TEST(Rollout, NextStateFrequenciesMatchTransitionTensor) {
    // one step from the centre cell of a slippery grid; multinomial 3-sigma check per outcome
    GridworldParams p;
    p.start = {2, 2};
    const auto mdp = build_gridworld(p);
    const auto right = StochasticPolicy::one_hot(std::vector<Action>(25, kRight), 4);
    constexpr std::size_t n = 100000;
    std::map<State, std::size_t> counts;
    for (std::size_t i = 0; i < n; ++i) ++counts[rollout(mdp, right, 1, derive_seed(11, {i})).steps.at(0).next_state];
    const State s = 12;
    for (const auto& t : mdp.successors(s, kRight)) {
        const double sigma = std::sqrt(t.prob * (1 - t.prob) / n);
        EXPECT_NEAR(double(counts[t.next]) / n, t.prob, 3 * sigma) << "next " << t.next;
    }
    EXPECT_EQ(counts.size(), 3u);
}

TEST(Rollout, DiscountedReturnBoundedByHorizonFreeLimit) {
    const auto mdp = canonical_gridworld();
    const auto pi = StochasticPolicy::uniform(mdp.n_states(), 4);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const double g = discounted_return(rollout(mdp, pi, 500, seed), mdp.gamma());
        EXPECT_GE(g, 0.0);
        EXPECT_LT(g, mdp.value_upper_bound());
    }
}
