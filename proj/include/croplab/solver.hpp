#pragma once

#include "croplab/mdp.hpp"
#include "croplab/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace croplab {

/// State-action values, row-major [state][action].
class QTable {
public:
    QTable() = default;
    QTable(std::size_t n_states, std::size_t n_actions, double fill = 0.0)
        : n_states_(n_states), n_actions_(n_actions), values_(n_states * n_actions, fill) {}
    QTable(std::size_t n_states, std::size_t n_actions, std::vector<double> values)
        : n_states_(n_states), n_actions_(n_actions), values_(std::move(values)) {
        if (values_.size() != n_states_ * n_actions_) throw std::invalid_argument("QTable: wrong size");
    }

    std::size_t n_states() const { return n_states_; }
    std::size_t n_actions() const { return n_actions_; }
    double& operator()(State s, Action a) { return values_[s * n_actions_ + a]; }
    double operator()(State s, Action a) const { return values_[s * n_actions_ + a]; }
    std::span<const double> row(State s) const { return {values_.data() + s * n_actions_, n_actions_}; }
    std::span<const double> values() const { return values_; }
    bool same_shape(const QTable& o) const { return n_states_ == o.n_states_ && n_actions_ == o.n_actions_; }

    friend bool operator==(const QTable&, const QTable&) = default;

private:
    std::size_t n_states_ = 0;
    std::size_t n_actions_ = 0;
    std::vector<double> values_;
};

/// State values.
class VTable {
public:
    VTable() = default;
    explicit VTable(std::vector<double> values) : values_(std::move(values)) {}

    std::size_t n_states() const { return values_.size(); }
    double& operator()(State s) { return values_[s]; }
    double operator()(State s) const { return values_[s]; }
    std::span<const double> values() const { return values_; }

    friend bool operator==(const VTable&, const VTable&) = default;

private:
    std::vector<double> values_;
};

/// Index of the largest entry; ties go to the lowest index.
inline Action argmax_lowest(std::span<const double> row) {
    Action best = 0;
    for (Action a = 1; a < row.size(); ++a)
        if (row[a] > row[best]) best = a;
    return best;
}

/// V(s) = max_a Q(s,a).
inline VTable max_values(const QTable& q) {
    std::vector<double> v(q.n_states());
    for (State s = 0; s < q.n_states(); ++s) v[s] = q.row(s)[argmax_lowest(q.row(s))];
    return VTable{std::move(v)};
}

/// Start-distribution weighted value.
inline double start_value(const FiniteMdp& mdp, const VTable& v) {
    double g = 0.0;
    const auto mu = mdp.start_distribution();
    for (State s = 0; s < mdp.n_states(); ++s) g += mu[s] * v(s);
    return g;
}

/// Thrown when value iteration hits max_iters with the residual above tol.
class NonConvergence : public std::runtime_error {
public:
    NonConvergence(std::size_t iterations, double residual)
        : std::runtime_error("value iteration did not converge after " + std::to_string(iterations) +
                             " iterations (residual " + std::to_string(residual) + ")"),
          iterations_(iterations), residual_(residual) {}
    std::size_t iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    std::size_t iterations_;
    double residual_;
};

struct ValueIterationResult {
    QTable q;
    VTable v;
    /// sup-norm change of Q at each sweep; the last entry is <= tol.
    std::vector<double> residuals;
};

/// Q(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) V(s').
inline double bellman_backup(const FiniteMdp& mdp, State s, Action a, std::span<const double> v) {
    double acc = 0.0;
    for (const auto& t : mdp.successors(s, a)) acc += t.prob * v[t.next];
    return mdp.reward(s, a) + mdp.gamma() * acc;
}

/**
 * Synchronous value iteration on Q starting from zero. Stops once the
 * sup-norm change between sweeps is <= tol. Starting from zero with
 * non-negative rewards keeps every iterate inside [0, 1/(1-gamma)).
 */
inline ValueIterationResult value_iteration(const FiniteMdp& mdp, double tol = 1e-12,
                                            std::size_t max_iters = 100000) {
    if (!(tol > 0.0)) throw std::invalid_argument("value_iteration: tol must be positive");
    const std::size_t nS = mdp.n_states(), nA = mdp.n_actions();
    QTable q(nS, nA, 0.0), next(nS, nA, 0.0);
    std::vector<double> v(nS, 0.0);
    ValueIterationResult out;
    for (std::size_t it = 0; it < max_iters; ++it) {
        double residual = 0.0;
        for (State s = 0; s < nS; ++s)
            for (Action a = 0; a < nA; ++a) {
                next(s, a) = bellman_backup(mdp, s, a, v);
                residual = std::max(residual, std::abs(next(s, a) - q(s, a)));
            }
        std::swap(q, next);
        for (State s = 0; s < nS; ++s) v[s] = q.row(s)[argmax_lowest(q.row(s))];
        out.residuals.push_back(residual);
        if (residual <= tol) {
            out.q = std::move(q);
            out.v = VTable{std::move(v)};
            return out;
        }
    }
    throw NonConvergence(max_iters, out.residuals.empty() ? 0.0 : out.residuals.back());
}

/// One-hot greedy policy; ties broken by lowest action index.
inline StochasticPolicy greedy_policy(const QTable& q) {
    std::vector<Action> actions(q.n_states());
    for (State s = 0; s < q.n_states(); ++s) actions[s] = argmax_lowest(q.row(s));
    return StochasticPolicy::one_hot(actions, q.n_actions());
}

struct PolicyEvaluation {
    VTable v;
    QTable q;
};

/**
 * Exact evaluation of a stochastic policy: solves (I - gamma P_pi) V = r_pi
 * by LU, then Q = R + gamma P V. The system is strictly diagonally dominant
 * for gamma < 1, so a failed solve indicates a bug.
 */
inline PolicyEvaluation evaluate_policy_exact(const FiniteMdp& mdp, const StochasticPolicy& policy) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
        throw std::invalid_argument("evaluate_policy_exact: policy shape does not match the MDP");
    const auto nS = static_cast<Eigen::Index>(mdp.n_states());
    const std::size_t nA = mdp.n_actions();
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(nS, nS);
    Eigen::VectorXd r = Eigen::VectorXd::Zero(nS);
    for (State s = 0; s < mdp.n_states(); ++s) {
        for (Action a = 0; a < nA; ++a) {
            const double pa = policy(s, a);
            if (pa == 0.0) continue;
            r(Eigen::Index(s)) += pa * mdp.reward(s, a);
            for (const auto& t : mdp.successors(s, a))
                m(Eigen::Index(s), Eigen::Index(t.next)) -= mdp.gamma() * pa * t.prob;
        }
    }
    const Eigen::VectorXd x = m.partialPivLu().solve(r);
    if (!x.allFinite()) throw std::logic_error("evaluate_policy_exact: linear solve failed");
    std::vector<double> v(x.data(), x.data() + nS);
    QTable q(mdp.n_states(), nA);
    for (State s = 0; s < mdp.n_states(); ++s)
        for (Action a = 0; a < nA; ++a) q(s, a) = bellman_backup(mdp, s, a, v);
    return {VTable{std::move(v)}, std::move(q)};
}

/**
 * Normalized discounted state occupancy of a policy from the start
 * distribution: d = (1 - gamma) mu^T (I - gamma P_pi)^-1.
 */
inline std::vector<double> discounted_occupancy(const FiniteMdp& mdp, const StochasticPolicy& policy) {
    const auto nS = static_cast<Eigen::Index>(mdp.n_states());
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(nS, nS);
    for (State s = 0; s < mdp.n_states(); ++s)
        for (Action a = 0; a < mdp.n_actions(); ++a) {
            const double pa = policy(s, a);
            if (pa == 0.0) continue;
            for (const auto& t : mdp.successors(s, a))
                m(Eigen::Index(t.next), Eigen::Index(s)) -= mdp.gamma() * pa * t.prob;
        }
    Eigen::VectorXd mu(nS);
    for (State s = 0; s < mdp.n_states(); ++s) mu(Eigen::Index(s)) = mdp.start_distribution()[s];
    const Eigen::VectorXd d = (1.0 - mdp.gamma()) * m.partialPivLu().solve(mu);
    return {d.data(), d.data() + nS};
}

/// Learning-rate schedule: constant alpha0, or alpha0 / (1 + visits)^power.
struct LearningRate {
    enum class Kind { Constant, VisitPower } kind = Kind::VisitPower;
    double alpha0 = 1.0;
    double power = 0.6;

    double operator()(std::size_t visits) const {
        if (kind == Kind::Constant) return alpha0;
        return alpha0 / std::pow(1.0 + double(visits), power);
    }
};

struct QLearningOptions {
    std::size_t episodes = 10000;
    std::size_t max_steps = 100;
    double explore = 0.1;
    LearningRate lr{};
    std::uint64_t seed = 0;
};

/**
 * Tabular epsilon-greedy Q-learning from the start distribution. Produces an
 * inexact table whose greedy policy need not be optimal; deterministic given
 * the seed.
 */
inline QTable q_learning(const FiniteMdp& mdp, const QLearningOptions& opt) {
    if (opt.episodes < 1) throw std::invalid_argument("q_learning: episodes must be >= 1");
    if (!(opt.explore >= 0.0 && opt.explore <= 1.0))
        throw std::invalid_argument("q_learning: explore must lie in [0, 1]");
    const std::size_t nS = mdp.n_states(), nA = mdp.n_actions();
    QTable q(nS, nA, 0.0);
    std::vector<std::size_t> visits(nS * nA, 0);
    Rng rng = make_rng(opt.seed);
    std::vector<double> probs;
    for (std::size_t ep = 0; ep < opt.episodes; ++ep) {
        State s = sample_index(mdp.start_distribution(), rng);
        for (std::size_t t = 0; t < opt.max_steps && !mdp.is_terminal(s); ++t) {
            Action a;
            if (uniform01(rng) < opt.explore) a = std::min<Action>(nA - 1, Action(uniform01(rng) * double(nA)));
            else a = argmax_lowest(q.row(s));
            const auto succ = mdp.successors(s, a);
            probs.resize(succ.size());
            for (std::size_t i = 0; i < succ.size(); ++i) probs[i] = succ[i].prob;
            const State next = succ[sample_index(probs, rng)].next;
            const double target =
                mdp.reward(s, a) + mdp.gamma() * (mdp.is_terminal(next) ? 0.0 : q.row(next)[argmax_lowest(q.row(next))]);
            const double alpha = opt.lr(visits[s * nA + a]++);
            q(s, a) += alpha * (target - q(s, a));
            s = next;
        }
    }
    return q;
}

inline QTable q_learning(const FiniteMdp& mdp, std::size_t episodes, LearningRate lr, double explore,
                         std::uint64_t seed) {
    QLearningOptions opt;
    opt.episodes = episodes;
    opt.lr = lr;
    opt.explore = explore;
    opt.seed = seed;
    return q_learning(mdp, opt);
}

inline double sup_norm_gap(const QTable& a, const QTable& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("sup_norm_gap: shape mismatch");
    double g = 0.0;
    for (std::size_t i = 0; i < a.values().size(); ++i) g = std::max(g, std::abs(a.values()[i] - b.values()[i]));
    return g;
}

} // namespace croplab
