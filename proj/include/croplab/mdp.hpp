#pragma once

#include "croplab/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace croplab {

using State = std::size_t;
using Action = std::size_t;

/// Tolerance on probability-vector normalization.
inline constexpr double kProbTol = 1e-9;

struct Transition {
    State next;
    double prob;
    friend bool operator==(const Transition&, const Transition&) = default;
};

/**
 * Finite discounted MDP with rewards on state-action pairs.
 *
 * Transitions are stored sparsely per (s,a), sorted by next state with
 * duplicates merged and zero-probability entries dropped, so two models built
 * from the same dense tensor compare equal. Terminal states must self-loop
 * with reward 0 under every action; this keeps infinite-horizon values finite
 * without a separate episode-end rule.
 *
 * Immutable after construction.
 */
class FiniteMdp {
public:
    FiniteMdp(std::size_t n_states, std::size_t n_actions,
              std::vector<std::vector<Transition>> successors, std::vector<double> reward,
              double gamma, std::vector<State> terminal_states, std::vector<double> start)
        : n_states_(n_states), n_actions_(n_actions), successors_(std::move(successors)),
          reward_(std::move(reward)), gamma_(gamma), terminal_(n_states, false),
          start_(std::move(start)) {
        if (n_states_ == 0 || n_actions_ == 0)
            throw std::invalid_argument("FiniteMdp: state and action spaces must be non-empty");
        if (successors_.size() != n_states_ * n_actions_)
            throw std::invalid_argument("FiniteMdp: expected one successor list per (state, action)");
        if (reward_.size() != n_states_ * n_actions_)
            throw std::invalid_argument("FiniteMdp: reward table has wrong size");
        if (!(gamma_ >= 0.0 && gamma_ < 1.0))
            throw std::invalid_argument("FiniteMdp: gamma must lie in [0, 1), got " + std::to_string(gamma_));
        if (start_.size() != n_states_)
            throw std::invalid_argument("FiniteMdp: start distribution has wrong size");
        for (State t : terminal_states) {
            if (t >= n_states_) throw std::invalid_argument("FiniteMdp: terminal state out of range");
            terminal_[t] = true;
        }
        for (std::size_t i = 0; i < successors_.size(); ++i) normalize_row(i);
        for (double r : reward_)
            if (!(r >= 0.0 && r <= 1.0))
                throw std::invalid_argument("FiniteMdp: reward " + std::to_string(r) + " outside [0, 1]");
        for (State s = 0; s < n_states_; ++s) {
            if (!terminal_[s]) continue;
            for (Action a = 0; a < n_actions_; ++a) {
                const auto& row = successors_[s * n_actions_ + a];
                if (row.size() != 1 || row[0].next != s || reward_[s * n_actions_ + a] != 0.0)
                    throw std::invalid_argument("FiniteMdp: terminal state " + std::to_string(s) +
                                                " must self-loop with reward 0");
            }
        }
        double total = 0.0;
        for (double p : start_) {
            if (!(p >= 0.0)) throw std::invalid_argument("FiniteMdp: negative start probability");
            total += p;
        }
        if (std::abs(total - 1.0) > kProbTol)
            throw std::invalid_argument("FiniteMdp: start distribution does not sum to 1");
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double gamma() const { return gamma_; }

    std::span<const Transition> successors(State s, Action a) const {
        return successors_.at(s * n_actions_ + a);
    }
    double reward(State s, Action a) const { return reward_.at(s * n_actions_ + a); }
    double prob(State s, Action a, State next) const {
        for (const auto& t : successors(s, a))
            if (t.next == next) return t.prob;
        return 0.0;
    }
    bool is_terminal(State s) const { return terminal_.at(s); }
    std::vector<State> terminal_states() const {
        std::vector<State> out;
        for (State s = 0; s < n_states_; ++s)
            if (terminal_[s]) out.push_back(s);
        return out;
    }
    std::span<const double> start_distribution() const { return start_; }

    /// Largest possible discounted return, 1/(1-gamma), given rewards in [0,1].
    double value_upper_bound() const { return 1.0 / (1.0 - gamma_); }

    friend bool operator==(const FiniteMdp&, const FiniteMdp&) = default;

private:
    void normalize_row(std::size_t idx) {
        auto& row = successors_[idx];
        const State s = idx / n_actions_;
        const Action a = idx % n_actions_;
        for (const auto& t : row) {
            if (t.next >= n_states_)
                throw std::invalid_argument("FiniteMdp: successor out of range at (" + std::to_string(s) +
                                            ", " + std::to_string(a) + ")");
            if (!(t.prob >= 0.0))
                throw std::invalid_argument("FiniteMdp: negative transition probability");
        }
        std::sort(row.begin(), row.end(), [](const Transition& x, const Transition& y) { return x.next < y.next; });
        std::vector<Transition> merged;
        for (const auto& t : row) {
            if (!merged.empty() && merged.back().next == t.next) merged.back().prob += t.prob;
            else merged.push_back(t);
        }
        std::erase_if(merged, [](const Transition& t) { return t.prob == 0.0; });
        double total = 0.0;
        for (const auto& t : merged) total += t.prob;
        if (std::abs(total - 1.0) > kProbTol)
            throw std::invalid_argument("FiniteMdp: transition row (" + std::to_string(s) + ", " +
                                        std::to_string(a) + ") sums to " + std::to_string(total));
        row = std::move(merged);
    }

    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<std::vector<Transition>> successors_;
    std::vector<double> reward_;
    double gamma_;
    std::vector<bool> terminal_;
    std::vector<double> start_;
};

/// Per-state distribution over actions. Deterministic policies are one-hot rows.
class StochasticPolicy {
public:
    StochasticPolicy(std::size_t n_states, std::size_t n_actions, std::vector<double> probs)
        : n_states_(n_states), n_actions_(n_actions), probs_(std::move(probs)) {
        if (probs_.size() != n_states_ * n_actions_)
            throw std::invalid_argument("StochasticPolicy: table has wrong size");
        for (State s = 0; s < n_states_; ++s) {
            double total = 0.0;
            for (double p : row(s)) {
                if (!(p >= 0.0)) throw std::invalid_argument("StochasticPolicy: negative probability");
                total += p;
            }
            if (std::abs(total - 1.0) > kProbTol)
                throw std::invalid_argument("StochasticPolicy: row " + std::to_string(s) + " sums to " +
                                            std::to_string(total));
        }
    }

    static StochasticPolicy one_hot(std::span<const Action> actions, std::size_t n_actions) {
        std::vector<double> probs(actions.size() * n_actions, 0.0);
        for (std::size_t s = 0; s < actions.size(); ++s) probs.at(s * n_actions + actions[s]) = 1.0;
        return {actions.size(), n_actions, std::move(probs)};
    }
    static StochasticPolicy uniform(std::size_t n_states, std::size_t n_actions) {
        return {n_states, n_actions, std::vector<double>(n_states * n_actions, 1.0 / double(n_actions))};
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    std::span<const double> row(State s) const { return {probs_.data() + s * n_actions_, n_actions_}; }
    double operator()(State s, Action a) const { return probs_.at(s * n_actions_ + a); }
    std::span<const double> table() const { return probs_; }

    friend bool operator==(const StochasticPolicy&, const StochasticPolicy&) = default;

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<double> probs_;
};

struct Step {
    State state;
    Action action;
    double reward;
    State next_state;
    friend bool operator==(const Step&, const Step&) = default;
};

/// A chain of steps; `horizon_cap` is the episode length limit (not the
/// transition function).
struct Trajectory {
    std::vector<Step> steps;
    std::size_t horizon_cap = 0;

    std::size_t size() const { return steps.size(); }
    bool empty() const { return steps.empty(); }

    bool is_chained() const {
        for (std::size_t i = 1; i < steps.size(); ++i)
            if (steps[i - 1].next_state != steps[i].state) return false;
        return steps.size() <= horizon_cap;
    }

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

inline double discounted_return(const Trajectory& traj, double gamma) {
    double g = 0.0, w = 1.0;
    for (const auto& st : traj.steps) {
        g += w * st.reward;
        w *= gamma;
    }
    return g;
}

/// Demonstrations observed by an adversary, tagged with where they came from.
struct DemoSet {
    std::vector<Trajectory> trajectories;
    std::string source_label;

    std::size_t total_steps() const {
        std::size_t n = 0;
        for (const auto& t : trajectories) n += t.size();
        return n;
    }
};

/**
 * Runs one episode. `choose(prev_state, state, rng)` returns the action; at
 * the first step prev_state == state. The episode stops after `horizon`
 * steps or once a terminal state is entered; a terminal start yields an empty
 * trajectory.
 *
 * RNG consumption order: one draw for the start state, then per step the
 * policy's draws followed by one draw for the next state.
 */
template <class Chooser>
Trajectory rollout_with(const FiniteMdp& mdp, std::size_t horizon, Rng& rng, Chooser&& choose) {
    Trajectory traj;
    traj.horizon_cap = horizon;
    traj.steps.reserve(std::min<std::size_t>(horizon, 256));
    State s = sample_index(mdp.start_distribution(), rng);
    State prev = s;
    std::vector<double> next_probs;
    for (std::size_t t = 0; t < horizon && !mdp.is_terminal(s); ++t) {
        const Action a = choose(prev, s, rng);
        const auto succ = mdp.successors(s, a);
        next_probs.resize(succ.size());
        for (std::size_t i = 0; i < succ.size(); ++i) next_probs[i] = succ[i].prob;
        const State next = succ[sample_index(next_probs, rng)].next;
        traj.steps.push_back({s, a, mdp.reward(s, a), next});
        prev = s;
        s = next;
    }
    return traj;
}

inline Trajectory rollout(const FiniteMdp& mdp, const StochasticPolicy& policy, std::size_t horizon,
                          Rng& rng) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
        throw std::invalid_argument("rollout: policy shape does not match the MDP");
    return rollout_with(mdp, horizon, rng,
                        [&](State, State s, Rng& r) { return sample_index(policy.row(s), r); });
}

inline Trajectory rollout(const FiniteMdp& mdp, const StochasticPolicy& policy, std::size_t horizon,
                          std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return rollout(mdp, policy, horizon, rng);
}

// ---------------------------------------------------------------------------
// Benchmark instances

struct Cell {
    std::size_t x = 0;
    std::size_t y = 0;
};

/// Grid actions. Moving into a wall leaves the agent in place.
enum GridAction : Action { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };

struct GridworldParams {
    std::size_t width = 5;
    std::size_t height = 5;
    Cell goal{4, 4};
    double step_reward = 0.0;
    double goal_reward = 1.0;
    double slip_prob = 0.1;
    double gamma = 0.9;
    Cell start{0, 0};
};

/**
 * Grid navigation with four moves. The intended move happens with
 * probability 1 - slip_prob; each of the two perpendicular moves happens with
 * slip_prob / 2. R(s,a) is the expected reward of the move: goal_reward for
 * entering the goal, step_reward otherwise. The goal is terminal.
 * State index is y * width + x.
 */
inline FiniteMdp build_gridworld(const GridworldParams& p) {
    if (p.width == 0 || p.height == 0) throw std::invalid_argument("build_gridworld: empty grid");
    if (p.goal.x >= p.width || p.goal.y >= p.height)
        throw std::invalid_argument("build_gridworld: goal outside the grid");
    if (p.start.x >= p.width || p.start.y >= p.height)
        throw std::invalid_argument("build_gridworld: start outside the grid");
    if (!(p.step_reward >= 0.0 && p.step_reward <= 1.0) || !(p.goal_reward >= 0.0 && p.goal_reward <= 1.0))
        throw std::invalid_argument("build_gridworld: rewards must lie in [0, 1]");
    if (!(p.slip_prob >= 0.0 && p.slip_prob < 1.0))
        throw std::invalid_argument("build_gridworld: slip_prob must lie in [0, 1)");
    if (!(p.gamma >= 0.0 && p.gamma < 1.0)) throw std::invalid_argument("build_gridworld: gamma must lie in [0, 1)");

    const std::size_t n = p.width * p.height;
    const auto index = [&](std::size_t x, std::size_t y) { return y * p.width + x; };
    const State goal = index(p.goal.x, p.goal.y);
    const auto move = [&](State s, Action dir) -> State {
        std::size_t x = s % p.width, y = s / p.width;
        switch (dir) {
        case kUp: if (y > 0) --y; break;
        case kRight: if (x + 1 < p.width) ++x; break;
        case kDown: if (y + 1 < p.height) ++y; break;
        case kLeft: if (x > 0) --x; break;
        }
        return index(x, y);
    };

    std::vector<std::vector<Transition>> succ(n * 4);
    std::vector<double> reward(n * 4, 0.0);
    for (State s = 0; s < n; ++s) {
        for (Action a = 0; a < 4; ++a) {
            auto& row = succ[s * 4 + a];
            if (s == goal) {
                row = {{s, 1.0}};
                continue;
            }
            row.push_back({move(s, a), 1.0 - p.slip_prob});
            if (p.slip_prob > 0.0) {
                row.push_back({move(s, (a + 1) % 4), p.slip_prob / 2.0});
                row.push_back({move(s, (a + 3) % 4), p.slip_prob / 2.0});
            }
            double r = 0.0;
            for (const auto& t : row) r += t.prob * (t.next == goal ? p.goal_reward : p.step_reward);
            reward[s * 4 + a] = std::clamp(r, 0.0, 1.0);
        }
    }
    std::vector<double> start(n, 0.0);
    start[index(p.start.x, p.start.y)] = 1.0;
    return {n, 4, std::move(succ), std::move(reward), p.gamma, {goal}, std::move(start)};
}

inline FiniteMdp build_gridworld(std::size_t width, std::size_t height, Cell goal, double step_reward,
                                 double goal_reward, double slip_prob, double gamma) {
    GridworldParams p;
    p.width = width;
    p.height = height;
    p.goal = goal;
    p.step_reward = step_reward;
    p.goal_reward = goal_reward;
    p.slip_prob = slip_prob;
    p.gamma = gamma;
    return build_gridworld(p);
}

/// The 5x5 gridworld used throughout the tests and default configs.
inline FiniteMdp canonical_gridworld() { return build_gridworld(GridworldParams{}); }

enum ChainAction : Action { kAdvance = 0, kStay = 1 };

/// Deterministic chain 0 -> 1 -> ... -> n-1. Advancing into the terminal
/// state n-1 pays 1; everything else pays 0. Starts at state 0.
inline FiniteMdp build_chain(std::size_t n, double gamma) {
    if (n < 2) throw std::invalid_argument("build_chain: need at least 2 states");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("build_chain: gamma must lie in [0, 1)");
    std::vector<std::vector<Transition>> succ(n * 2);
    std::vector<double> reward(n * 2, 0.0);
    for (State s = 0; s < n; ++s) {
        if (s == n - 1) {
            succ[s * 2 + kAdvance] = {{s, 1.0}};
            succ[s * 2 + kStay] = {{s, 1.0}};
            continue;
        }
        succ[s * 2 + kAdvance] = {{s + 1, 1.0}};
        succ[s * 2 + kStay] = {{s, 1.0}};
        if (s + 1 == n - 1) reward[s * 2 + kAdvance] = 1.0;
    }
    std::vector<double> start(n, 0.0);
    start[0] = 1.0;
    return {n, 2, std::move(succ), std::move(reward), gamma, {n - 1}, std::move(start)};
}

/// Random sparse MDP for property tests: each (s,a) reaches `branching`
/// distinct states with Dirichlet(1)-like weights, rewards uniform in [0,1],
/// uniform start distribution, no terminals.
inline FiniteMdp build_random_mdp(std::size_t n_states, std::size_t n_actions, std::size_t branching,
                                  double gamma, std::uint64_t seed) {
    if (branching == 0 || branching > n_states) throw std::invalid_argument("build_random_mdp: bad branching");
    Rng rng = make_rng(seed);
    std::vector<std::vector<Transition>> succ(n_states * n_actions);
    std::vector<double> reward(n_states * n_actions);
    std::vector<State> pool(n_states);
    for (std::size_t i = 0; i < succ.size(); ++i) {
        for (State s = 0; s < n_states; ++s) pool[s] = s;
        double total = 0.0;
        for (std::size_t b = 0; b < branching; ++b) {
            const std::size_t j = b + static_cast<std::size_t>(uniform01(rng) * double(n_states - b));
            std::swap(pool[b], pool[j]);
            const double w = -std::log1p(-uniform01(rng)) + 1e-3;
            succ[i].push_back({pool[b], w});
            total += w;
        }
        for (auto& t : succ[i]) t.prob /= total;
        reward[i] = uniform01(rng);
    }
    std::vector<double> start(n_states, 1.0 / double(n_states));
    return {n_states, n_actions, std::move(succ), std::move(reward), gamma, {}, std::move(start)};
}

} // namespace croplab
