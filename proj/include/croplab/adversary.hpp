#pragma once

#include "croplab/crop.hpp"
#include "croplab/mdp.hpp"
#include "croplab/rng.hpp"
#include "croplab/solver.hpp"
#include "croplab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace croplab {

/// What an imitator does in a state it never observed.
enum class UnseenRule { Uniform };

/**
 * Behavioral-cloning policy: per-state empirical action frequencies with
 * additive smoothing. Unobserved states fall back to the uniform
 * distribution.
 */
struct ImitatorPolicy {
    StochasticPolicy dist;
    std::vector<std::size_t> visit_counts; ///< [state][action]
    UnseenRule unseen_default = UnseenRule::Uniform;

    std::size_t samples_used() const {
        std::size_t n = 0;
        for (auto c : visit_counts) n += c;
        return n;
    }

    /// Majority vote per state (ties and unseen states go to the lowest action).
    StochasticPolicy argmax_policy() const {
        std::vector<Action> acts(dist.n_states());
        for (State s = 0; s < dist.n_states(); ++s) acts[s] = argmax_lowest(dist.row(s));
        return StochasticPolicy::one_hot(acts, dist.n_actions());
    }
};

/// Running (state, action) counts that can be refit at any point.
class DemoCounts {
public:
    DemoCounts(std::size_t n_states, std::size_t n_actions)
        : n_states_(n_states), n_actions_(n_actions), counts_(n_states * n_actions, 0) {}

    void add(State s, Action a) {
        if (s >= n_states_ || a >= n_actions_) throw std::invalid_argument("DemoCounts: pair out of range");
        ++counts_[s * n_actions_ + a];
    }
    void add(const Trajectory& traj) {
        for (const auto& st : traj.steps) add(st.state, st.action);
    }
    void add(const DemoSet& demos) {
        for (const auto& t : demos.trajectories) add(t);
    }

    ImitatorPolicy fit(double smoothing) const {
        if (!(smoothing >= 0.0)) throw std::invalid_argument("bc_fit: smoothing must be >= 0");
        std::vector<double> probs(counts_.size());
        for (State s = 0; s < n_states_; ++s) {
            double total = 0.0;
            for (Action a = 0; a < n_actions_; ++a) total += double(counts_[s * n_actions_ + a]);
            for (Action a = 0; a < n_actions_; ++a) {
                probs[s * n_actions_ + a] =
                    total == 0.0 ? 1.0 / double(n_actions_)
                                 : (double(counts_[s * n_actions_ + a]) + smoothing) /
                                       (total + smoothing * double(n_actions_));
            }
        }
        return {StochasticPolicy{n_states_, n_actions_, std::move(probs)}, counts_, UnseenRule::Uniform};
    }

private:
    std::size_t n_states_;
    std::size_t n_actions_;
    std::vector<std::size_t> counts_;
};

inline ImitatorPolicy bc_fit(const DemoSet& demos, std::size_t n_states, std::size_t n_actions, double smoothing) {
    if (demos.trajectories.empty()) throw std::invalid_argument("bc_fit: no demonstrations");
    DemoCounts counts(n_states, n_actions);
    counts.add(demos);
    return counts.fit(smoothing);
}

/// `count` episodes of the CRoP expert; episode i uses derive_seed(seed, {i}).
inline DemoSet expert_demos(const FiniteMdp& mdp, const CropPolicy& expert, std::size_t count, std::size_t horizon,
                            std::uint64_t seed) {
    DemoSet demos;
    const auto& c = expert.config();
    demos.source_label = "crop variant=" + std::string(to_string(c.variant)) + " delta=" + std::to_string(c.delta) +
                         " rho=" + std::to_string(c.rho) + " seed=" + std::to_string(seed);
    demos.trajectories.reserve(count);
    for (std::size_t i = 0; i < count; ++i)
        demos.trajectories.push_back(rollout_crop(mdp, expert, horizon, derive_seed(seed, {i})).trajectory);
    return demos;
}

struct DaggerOptions {
    std::size_t rounds = 5;
    std::size_t rollouts_per_round = 10;
    std::size_t horizon = 100;
    double smoothing = 0.0;
    std::uint64_t seed = 0;
};

/**
 * DAgger against a CRoP expert. Round 0 is BC on
 * expert_demos(..., derive_seed(seed, {0})). Each later round r rolls out
 * the current imitator (episode i on derive_seed(seed, {r, i})), labels every
 * visited state with an action sampled from the expert given the imitator's
 * own previous state, aggregates, and refits.
 */
inline ImitatorPolicy dagger_fit(const FiniteMdp& mdp, const CropPolicy& expert, const DaggerOptions& opt) {
    if (opt.rounds < 1) throw std::invalid_argument("dagger_fit: rounds must be >= 1");
    if (expert.n_states() != mdp.n_states() || expert.n_actions() != mdp.n_actions())
        throw std::invalid_argument("dagger_fit: expert shape does not match the MDP");
    DemoCounts counts(mdp.n_states(), mdp.n_actions());
    counts.add(expert_demos(mdp, expert, opt.rollouts_per_round, opt.horizon, derive_seed(opt.seed, {0})));
    auto current = counts.fit(opt.smoothing);
    for (std::size_t r = 1; r < opt.rounds; ++r) {
        for (std::size_t i = 0; i < opt.rollouts_per_round; ++i) {
            Rng rng = make_rng(derive_seed(opt.seed, {r, i}));
            rollout_with(mdp, opt.horizon, rng, [&](State prev, State s, Rng& g) {
                counts.add(s, crop_act(s, prev, expert, g).action);
                return sample_index(current.dist.row(s), g);
            });
        }
        current = counts.fit(opt.smoothing);
    }
    return current;
}

struct FidelityReport {
    double action_match_rate = 0.0; ///< non-terminal states where argmax(imitator) == pi(s)
    double return_ratio = 0.0;      ///< V^imitator / V^pi from the start distribution
    std::size_t samples_used = 0;
    double tv_distance = 0.0;       ///< occupancy-weighted TV to the CRoP distribution
};

/// V^policy / V^pi from the start distribution; 1 when both are zero.
inline double return_ratio(const FiniteMdp& mdp, const StochasticPolicy& policy, double target_return) {
    const double g = start_value(mdp, evaluate_policy_exact(mdp, policy).v);
    if (target_return == 0.0) return g == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return g / target_return;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
    double d = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) d += std::abs(p[i] - q[i]);
    return 0.5 * d;
}

/**
 * Scores an imitator against the target. TV is averaged under the
 * imitator's normalized discounted occupancy over non-terminal states (over
 * (prev, state) pairs for the history-dependent variants).
 */
inline FidelityReport fidelity(const ImitatorPolicy& imitator, const QTable& target_q, const CropPolicy& target_crop,
                               const FiniteMdp& mdp) {
    const std::size_t n = mdp.n_states(), nA = mdp.n_actions();
    if (imitator.dist.n_states() != n || imitator.dist.n_actions() != nA || target_q.n_states() != n ||
        target_q.n_actions() != nA || target_crop.n_states() != n || target_crop.n_actions() != nA)
        throw std::invalid_argument("fidelity: shape mismatch");
    FidelityReport r;
    r.samples_used = imitator.samples_used();

    const auto target = greedy_policy(target_q);
    std::size_t matched = 0, considered = 0;
    for (State s = 0; s < n; ++s) {
        if (mdp.is_terminal(s)) continue;
        ++considered;
        matched += argmax_lowest(imitator.dist.row(s)) == argmax_lowest(target.row(s));
    }
    r.action_match_rate = considered ? double(matched) / double(considered) : 1.0;
    r.return_ratio = return_ratio(mdp, imitator.dist, start_value(mdp, evaluate_policy_exact(mdp, target).v));

    double weight = 0.0, acc = 0.0;
    if (!uses_history(target_crop.config().variant)) {
        const auto occ = discounted_occupancy(mdp, imitator.dist);
        for (State s = 0; s < n; ++s) {
            if (mdp.is_terminal(s) || occ[s] <= 0.0) continue;
            weight += occ[s];
            acc += occ[s] * total_variation(imitator.dist.row(s), crop_action_distribution(s, std::nullopt, target_crop));
        }
    } else {
        const auto chain = augment_with_history(mdp, target_crop);
        std::vector<double> lifted(n * n * nA);
        for (State p = 0; p < n; ++p)
            for (State s = 0; s < n; ++s)
                std::copy(imitator.dist.row(s).begin(), imitator.dist.row(s).end(),
                          lifted.begin() + std::ptrdiff_t((p * n + s) * nA));
        const auto occ = discounted_occupancy(chain.mdp, StochasticPolicy{n * n, nA, std::move(lifted)});
        for (State p = 0; p < n; ++p)
            for (State s = 0; s < n; ++s) {
                const double w = occ[p * n + s];
                if (mdp.is_terminal(s) || w <= 0.0) continue;
                weight += w;
                acc += w * total_variation(imitator.dist.row(s), crop_action_distribution(s, p, target_crop));
            }
    }
    r.tv_distance = weight > 0.0 ? std::clamp(acc / weight, 0.0, 1.0) : 0.0;
    return r;
}

/// Which policy the adversary deploys after fitting.
enum class Readout { Distribution, Argmax };

struct ThresholdOptions {
    double threshold = 0.95;      ///< required fraction of the target's return
    std::size_t batch = 1;        ///< trajectories added per step
    std::size_t max_samples = 200; ///< trajectory budget; reaching it censors the trial
    std::size_t trials = 50;
    std::size_t horizon = 100;
    double smoothing = 0.0;       ///< 0 gives the maximum-likelihood fit
    Readout readout = Readout::Distribution;
    std::uint64_t seed = 0;
};

/// Per-trial trajectories needed to reach the threshold; censored trials hold max_samples.
struct SamplesDistribution {
    std::vector<std::size_t> samples;
    std::vector<bool> censored;

    std::size_t censored_count() const { return std::size_t(std::count(censored.begin(), censored.end(), true)); }
    double median() const { return croplab::median(std::vector<double>(samples.begin(), samples.end())); }
};

/**
 * Feeds expert trajectories to BC in batches until the fitted policy's
 * return reaches `threshold` times the target's, or the budget runs out.
 * Trial t draws its episodes in order from derive_seed(seed, {t}), so the
 * same seed gives paired trials across expert configurations.
 */
inline SamplesDistribution samples_to_threshold(const FiniteMdp& mdp, const CropPolicy& expert,
                                                const ThresholdOptions& opt) {
    if (!(opt.threshold > 0.0 && opt.threshold <= 1.0))
        throw std::invalid_argument("samples_to_threshold: threshold must lie in (0, 1]");
    if (opt.batch < 1 || opt.max_samples < 1 || opt.trials < 1)
        throw std::invalid_argument("samples_to_threshold: batch, max_samples and trials must be >= 1");
    const double target = start_value(mdp, evaluate_policy_exact(mdp, expert.base_policy()).v);
    SamplesDistribution out;
    for (std::size_t t = 0; t < opt.trials; ++t) {
        Rng rng = make_rng(derive_seed(opt.seed, {t}));
        DemoCounts counts(mdp.n_states(), mdp.n_actions());
        std::size_t used = 0;
        bool reached = false;
        while (used < opt.max_samples) {
            const std::size_t take = std::min(opt.batch, opt.max_samples - used);
            for (std::size_t i = 0; i < take; ++i) counts.add(rollout_crop(mdp, expert, opt.horizon, rng).trajectory);
            used += take;
            const auto fitted = counts.fit(opt.smoothing);
            const auto& deployed = opt.readout == Readout::Argmax ? fitted.argmax_policy() : fitted.dist;
            if (return_ratio(mdp, deployed, target) >= opt.threshold) {
                reached = true;
                break;
            }
        }
        out.samples.push_back(used);
        out.censored.push_back(!reached);
    }
    return out;
}

/// Mean return ratio after each batch, averaged over trials (no early stop).
struct CurvePoint {
    std::size_t samples = 0;
    double mean_return_ratio = 0.0;
};

inline std::vector<CurvePoint> learning_curve(const FiniteMdp& mdp, const CropPolicy& expert,
                                              const ThresholdOptions& opt) {
    if (opt.batch < 1 || opt.max_samples < 1 || opt.trials < 1)
        throw std::invalid_argument("learning_curve: batch, max_samples and trials must be >= 1");
    const double target = start_value(mdp, evaluate_policy_exact(mdp, expert.base_policy()).v);
    std::vector<CurvePoint> curve;
    for (std::size_t used = opt.batch; ; used += opt.batch) {
        curve.push_back({std::min(used, opt.max_samples), 0.0});
        if (used >= opt.max_samples) break;
    }
    for (std::size_t t = 0; t < opt.trials; ++t) {
        Rng rng = make_rng(derive_seed(opt.seed, {t}));
        DemoCounts counts(mdp.n_states(), mdp.n_actions());
        std::size_t used = 0;
        for (auto& point : curve) {
            for (; used < point.samples; ++used) counts.add(rollout_crop(mdp, expert, opt.horizon, rng).trajectory);
            const auto fitted = counts.fit(opt.smoothing);
            const auto& deployed = opt.readout == Readout::Argmax ? fitted.argmax_policy() : fitted.dist;
            point.mean_return_ratio += return_ratio(mdp, deployed, target) / double(opt.trials);
        }
    }
    return curve;
}

} // namespace croplab
