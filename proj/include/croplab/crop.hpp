#pragma once

#include "croplab/mdp.hpp"
#include "croplab/rng.hpp"
#include "croplab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace croplab {

/**
 * How the loss threshold rho admits candidate actions.
 *  - QDiff:     Q(s,pi(s)) - Q(s,a) <  rho
 *  - ADiff:     Q(s,a) - V(prev)    > -rho
 *  - APlusDiff: Q(s,a) - V(prev)    >= 0      (rho unused)
 */
enum class Variant { QDiff, ADiff, APlusDiff };

inline std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::QDiff: return "qdiff";
    case Variant::ADiff: return "adiff";
    case Variant::APlusDiff: return "aplusdiff";
    }
    return "?";
}

inline Variant parse_variant(std::string_view s) {
    if (s == "qdiff") return Variant::QDiff;
    if (s == "adiff") return Variant::ADiff;
    if (s == "aplusdiff") return Variant::APlusDiff;
    throw std::invalid_argument("unknown CRoP variant '" + std::string(s) + "' (expected qdiff, adiff or aplusdiff)");
}

/// True when the variant looks at the previous state.
inline bool uses_history(Variant v) { return v != Variant::QDiff; }

struct CropConfig {
    double delta = 1.0; ///< probability of playing pi(s)
    double rho = 0.0;   ///< loss threshold
    Variant variant = Variant::QDiff;

    void validate() const {
        if (!(delta >= 0.0 && delta <= 1.0)) throw std::invalid_argument("CropConfig: delta must lie in [0, 1]");
        if (!(rho >= 0.0) || !std::isfinite(rho)) throw std::invalid_argument("CropConfig: rho must be finite and >= 0");
    }
};

/**
 * Candidate actions at `state`: every action other than pi(s) (greedy on q,
 * lowest-index ties) that satisfies the variant's threshold. Actions tied
 * with pi(s) qualify like any other. For the history-dependent variants an
 * absent `prev_state` means the first step of an episode, where the state
 * serves as its own predecessor.
 */
inline std::vector<Action> candidate_set(State state, std::optional<State> prev_state, const QTable& q,
                                         const VTable& v, const CropConfig& cfg) {
    const auto row = q.row(state);
    const Action best = argmax_lowest(row);
    const State prev = prev_state.value_or(state);
    std::vector<Action> out;
    for (Action a = 0; a < row.size(); ++a) {
        if (a == best) continue;
        bool ok = false;
        switch (cfg.variant) {
        case Variant::QDiff: ok = row[best] - row[a] < cfg.rho; break;
        case Variant::ADiff: ok = row[a] - v(prev) > -cfg.rho; break;
        case Variant::APlusDiff: ok = row[a] - v(prev) >= 0.0; break;
        }
        if (ok) out.push_back(a);
    }
    return out;
}

/**
 * The randomized policy f built on a base (Q, V) pair. Candidate sets are
 * precomputed: one per state for QDiff, one per (prev, state) pair for the
 * history-dependent variants. Immutable after construction.
 */
class CropPolicy {
public:
    CropPolicy(QTable q, VTable v, CropConfig cfg) : q_(std::move(q)), v_(std::move(v)), cfg_(cfg) {
        cfg_.validate();
        if (v_.n_states() != q_.n_states()) throw std::invalid_argument("CropPolicy: Q and V disagree on states");
        const std::size_t n = q_.n_states();
        base_.resize(n);
        for (State s = 0; s < n; ++s) base_[s] = argmax_lowest(q_.row(s));
        if (!uses_history(cfg_.variant)) {
            cache_.resize(n);
            for (State s = 0; s < n; ++s) cache_[s] = candidate_set(s, std::nullopt, q_, v_, cfg_);
        } else {
            cache_.resize(n * n);
            for (State p = 0; p < n; ++p)
                for (State s = 0; s < n; ++s) cache_[p * n + s] = candidate_set(s, p, q_, v_, cfg_);
        }
    }

    /// Builds on a Q-table with V(s) = max_a Q(s,a).
    CropPolicy(const QTable& q, CropConfig cfg) : CropPolicy(q, max_values(q), cfg) {}

    const CropConfig& config() const { return cfg_; }
    const QTable& base_q() const { return q_; }
    const VTable& base_v() const { return v_; }
    std::size_t n_states() const { return q_.n_states(); }
    std::size_t n_actions() const { return q_.n_actions(); }

    Action base_action(State s) const { return base_.at(s); }
    std::span<const Action> base_actions() const { return base_; }

    const std::vector<Action>& candidates(State s, std::optional<State> prev = std::nullopt) const {
        if (!uses_history(cfg_.variant)) return cache_.at(s);
        return cache_.at(prev.value_or(s) * n_states() + s);
    }

    StochasticPolicy base_policy() const { return StochasticPolicy::one_hot(base_, n_actions()); }

private:
    QTable q_;
    VTable v_;
    CropConfig cfg_;
    std::vector<Action> base_;
    std::vector<std::vector<Action>> cache_;
};

/// pi(s) gets delta and each candidate (1 - delta)/|A^|; one-hot on pi(s) when A^ is empty.
inline std::vector<double> crop_action_distribution(State state, std::optional<State> prev_state,
                                                    const CropPolicy& policy) {
    std::vector<double> dist(policy.n_actions(), 0.0);
    const Action best = policy.base_action(state);
    const auto& cand = policy.candidates(state, prev_state);
    if (cand.empty()) {
        dist[best] = 1.0;
        return dist;
    }
    const double delta = policy.config().delta;
    dist[best] = delta;
    const double share = (1.0 - delta) / double(cand.size());
    for (Action a : cand) dist[a] = share;
    return dist;
}

struct CropDecision {
    Action action;
    bool diverted; ///< a non-pi(s) action was emitted
};

/// Samples f. Always consumes exactly one uniform draw.
inline CropDecision crop_act(State state, std::optional<State> prev_state, const CropPolicy& policy, Rng& rng) {
    const auto dist = crop_action_distribution(state, prev_state, policy);
    const Action a = sample_index(dist, rng);
    return {a, a != policy.base_action(state)};
}

inline CropDecision crop_act(State state, std::optional<State> prev_state, const CropPolicy& policy,
                             std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return crop_act(state, prev_state, policy, rng);
}

/// Full state -> distribution table of f. Only QDiff is Markov in the state;
/// the history-dependent variants go through augment_with_history().
inline StochasticPolicy crop_stochastic_policy(const CropPolicy& policy) {
    if (uses_history(policy.config().variant))
        throw std::invalid_argument("crop_stochastic_policy: variant '" + std::string(to_string(policy.config().variant)) +
                                    "' depends on the previous state; use augment_with_history");
    std::vector<double> probs;
    probs.reserve(policy.n_states() * policy.n_actions());
    for (State s = 0; s < policy.n_states(); ++s) {
        const auto d = crop_action_distribution(s, std::nullopt, policy);
        probs.insert(probs.end(), d.begin(), d.end());
    }
    return {policy.n_states(), policy.n_actions(), std::move(probs)};
}

/**
 * f over the (prev, state) chain. Augmented state prev * n + state moves to
 * state * n + next. Episodes start at (s0, s0). Terminal augmented states
 * self-loop in place so the model stays a valid FiniteMdp.
 */
struct HistoryChain {
    FiniteMdp mdp;
    StochasticPolicy policy;
    std::size_t base_states;

    static std::size_t index(State prev, State s, std::size_t n) { return prev * n + s; }
};

inline HistoryChain augment_with_history(const FiniteMdp& mdp, const CropPolicy& policy) {
    const std::size_t n = mdp.n_states(), nA = mdp.n_actions();
    if (policy.n_states() != n || policy.n_actions() != nA)
        throw std::invalid_argument("augment_with_history: policy shape does not match the MDP");
    const std::size_t N = n * n;
    std::vector<std::vector<Transition>> succ(N * nA);
    std::vector<double> reward(N * nA, 0.0);
    std::vector<State> terminals;
    std::vector<double> probs(N * nA, 0.0);
    for (State p = 0; p < n; ++p)
        for (State s = 0; s < n; ++s) {
            const State idx = p * n + s;
            const bool terminal = mdp.is_terminal(s);
            if (terminal) terminals.push_back(idx);
            for (Action a = 0; a < nA; ++a) {
                auto& row = succ[idx * nA + a];
                if (terminal) {
                    row = {{idx, 1.0}};
                    continue;
                }
                for (const auto& t : mdp.successors(s, a)) row.push_back({s * n + t.next, t.prob});
                reward[idx * nA + a] = mdp.reward(s, a);
            }
            const auto d = crop_action_distribution(s, p, policy);
            std::copy(d.begin(), d.end(), probs.begin() + std::ptrdiff_t(idx * nA));
        }
    std::vector<double> start(N, 0.0);
    for (State s = 0; s < n; ++s) start[s * n + s] = mdp.start_distribution()[s];
    return {FiniteMdp{N, nA, std::move(succ), std::move(reward), mdp.gamma(), std::move(terminals), std::move(start)},
            StochasticPolicy{N, nA, std::move(probs)}, n};
}

struct CropRollout {
    Trajectory trajectory;
    std::size_t diversions = 0;
};

/// Episode under f, tracking the previous state for the history variants and
/// counting diverted steps.
inline CropRollout rollout_crop(const FiniteMdp& mdp, const CropPolicy& policy, std::size_t horizon, Rng& rng) {
    if (policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions())
        throw std::invalid_argument("rollout_crop: policy shape does not match the MDP");
    CropRollout out;
    out.trajectory = rollout_with(mdp, horizon, rng, [&](State prev, State s, Rng& r) {
        const auto d = crop_act(s, prev, policy, r);
        out.diversions += d.diverted ? 1 : 0;
        return d.action;
    });
    return out;
}

inline CropRollout rollout_crop(const FiniteMdp& mdp, const CropPolicy& policy, std::size_t horizon,
                                std::uint64_t seed) {
    Rng rng = make_rng(seed);
    return rollout_crop(mdp, policy, horizon, rng);
}

/// Exact V^f. For the history variants V is indexed by augmented state and
/// `start_return` is taken over the (s0, s0) starts.
struct CropEvaluation {
    VTable v;
    QTable q;
    double start_return = 0.0;
};

inline CropEvaluation evaluate_crop_exact(const FiniteMdp& mdp, const CropPolicy& policy) {
    if (!uses_history(policy.config().variant)) {
        auto ev = evaluate_policy_exact(mdp, crop_stochastic_policy(policy));
        const double g = start_value(mdp, ev.v);
        return {std::move(ev.v), std::move(ev.q), g};
    }
    const auto chain = augment_with_history(mdp, policy);
    auto ev = evaluate_policy_exact(chain.mdp, chain.policy);
    const double g = start_value(chain.mdp, ev.v);
    return {std::move(ev.v), std::move(ev.q), g};
}

/**
 * How far candidate sets built on a learned table drift from those built on
 * the exact table with the same config. Reported, never corrected for.
 */
struct CandidateDiscrepancy {
    std::size_t contexts = 0;          ///< states (or (prev, state) pairs) compared
    std::size_t differing_contexts = 0;
    std::size_t symmetric_difference = 0; ///< total actions in one set but not the other
};

inline CandidateDiscrepancy candidate_discrepancy(const CropPolicy& learned, const CropPolicy& exact) {
    if (learned.n_states() != exact.n_states() || learned.config().variant != exact.config().variant)
        throw std::invalid_argument("candidate_discrepancy: incompatible policies");
    CandidateDiscrepancy out;
    const std::size_t n = learned.n_states();
    const bool hist = uses_history(learned.config().variant);
    for (State p = 0; p < (hist ? n : 1); ++p)
        for (State s = 0; s < n; ++s) {
            const std::optional<State> prev = hist ? std::optional<State>(p) : std::nullopt;
            std::vector<bool> in_a(learned.n_actions(), false), in_b(learned.n_actions(), false);
            for (Action a : learned.candidates(s, prev)) in_a[a] = true;
            for (Action a : exact.candidates(s, prev)) in_b[a] = true;
            std::size_t diff = 0;
            for (Action a = 0; a < learned.n_actions(); ++a) diff += in_a[a] != in_b[a];
            ++out.contexts;
            out.differing_contexts += diff > 0;
            out.symmetric_difference += diff;
        }
    return out;
}

/// Outcome of checking Q* - Q^pi' <= eps + eps' over every (s,a) pair.
struct EpsOptimalityReport {
    double eps_prime = 0.0; ///< measured max(Q* - Q^pi), floored at 0
    double eps = 0.0;       ///< measured max |Q^pi - Q^pi'|
    double eps_used = 0.0;
    double eps_prime_used = 0.0;
    double bound_satisfied_fraction = 0.0;
    std::size_t checked_pairs = 0;
    double confidence = 0.0;
    bool meets_confidence = false; ///< fraction >= confidence
};

/// Absolute slack on the bound comparison; the triangle inequality can lose
/// a few ulps of Q in floating point.
inline constexpr double kTheoremSlack = 1e-12;

inline EpsOptimalityReport check_theorem1(const QTable& q_star, const QTable& q_pi, const QTable& q_pi_prime,
                                          double eps, double eps_prime, double confidence) {
    if (!q_star.same_shape(q_pi) || !q_star.same_shape(q_pi_prime))
        throw std::invalid_argument("check_theorem1: tables must share the (state, action) grid");
    if (!(eps >= 0.0) || !(eps_prime >= 0.0)) throw std::invalid_argument("check_theorem1: eps values must be >= 0");
    if (!(confidence >= 0.0 && confidence <= 1.0)) throw std::invalid_argument("check_theorem1: confidence outside [0, 1]");
    EpsOptimalityReport r;
    r.eps_used = eps;
    r.eps_prime_used = eps_prime;
    r.confidence = confidence;
    const auto a = q_star.values(), b = q_pi.values(), c = q_pi_prime.values();
    std::size_t ok = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        r.eps_prime = std::max(r.eps_prime, a[i] - b[i]);
        r.eps = std::max(r.eps, std::abs(b[i] - c[i]));
        if (a[i] - c[i] <= eps + eps_prime + kTheoremSlack) ++ok;
    }
    r.checked_pairs = a.size();
    r.bound_satisfied_fraction = a.empty() ? 1.0 : double(ok) / double(a.size());
    r.meets_confidence = r.bound_satisfied_fraction >= confidence;
    return r;
}

} // namespace croplab
