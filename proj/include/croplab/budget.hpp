#pragma once

#include "croplab/mdp.hpp"
#include "croplab/rng.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace croplab {

/**
 * Idealized trajectory-collection process. A trajectory is T independent
 * (s,a) pairs, each optimal with probability delta, so there are 2^T
 * equally-structured outcomes. The all-suboptimal one is worthless to the
 * adversary; the other 2^T - 1 are the ones it wants to collect.
 */
struct BudgetModel {
    std::size_t horizon_t = 1;
    double delta = 0.5;
    double k_expected_unique = 1.0;
    double budget_b = 0.0;

    void validate() const {
        if (horizon_t < 1) throw std::invalid_argument("BudgetModel: horizon_t must be >= 1");
        if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("BudgetModel: delta must lie in (0, 1]");
        if (!(k_expected_unique > 0.0 && k_expected_unique <= double(horizon_t)))
            throw std::invalid_argument("BudgetModel: k must lie in (0, T]");
        if (!(budget_b >= 0.0)) throw std::invalid_argument("BudgetModel: budget must be >= 0");
    }
};

/// Largest T for which the 2^T outcomes are enumerated.
inline constexpr std::size_t kMaxEnumeratedHorizon = 20;

struct CollectionResult {
    double expected_pulls_analytic = 0.0;    ///< averaged over the random collection order (exact)
    double expected_pulls_fixed_order = 0.0; ///< sum taken in decreasing-probability order
    double expected_pulls_mc = 0.0;
    double mc_stderr = 0.0;
    std::size_t trials = 0;
};

/// P(tau) = delta^(#optimal) (1 - delta)^(T - #optimal); bit i set = step i optimal.
inline double trajectory_probability(std::uint32_t pattern, std::size_t horizon_t, double delta) {
    const int k = std::popcount(pattern);
    return std::pow(delta, k) * std::pow(1.0 - delta, double(horizon_t) - k);
}

/// The desired trajectories (every pattern but 0) in decreasing probability,
/// ties by ascending bit pattern.
inline std::vector<std::uint32_t> collection_order(std::size_t horizon_t, double delta) {
    if (horizon_t > kMaxEnumeratedHorizon) throw std::invalid_argument("collection_order: T above enumeration cap");
    const std::uint32_t n = std::uint32_t(1) << horizon_t;
    std::vector<std::uint32_t> order(n - 1);
    std::iota(order.begin(), order.end(), 1u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return trajectory_probability(a, horizon_t, delta) > trajectory_probability(b, horizon_t, delta);
    });
    return order;
}

namespace detail {

inline void check_horizon(std::size_t t) {
    if (t < 1 || t > kMaxEnumeratedHorizon)
        throw std::invalid_argument("horizon T=" + std::to_string(t) + " outside [1, " +
                                    std::to_string(kMaxEnumeratedHorizon) + "]");
}

inline double binomial(std::size_t n, std::size_t k) {
    double r = 1.0;
    for (std::size_t i = 1; i <= k; ++i) r = r * double(n - k + i) / double(i);
    return std::round(r);
}

/// Outcomes grouped by number of optimal steps j = 1..T.
struct OutcomeClasses {
    std::vector<std::size_t> count;
    std::vector<double> prob;
};

inline OutcomeClasses outcome_classes(std::size_t horizon_t, double delta) {
    OutcomeClasses c;
    for (std::size_t j = 1; j <= horizon_t; ++j) {
        c.count.push_back(std::size_t(binomial(horizon_t, j)));
        c.prob.push_back(std::pow(delta, double(j)) * std::pow(1.0 - delta, double(horizon_t - j)));
    }
    return c;
}

/// State-space size of the class-count recursion, or 0 if it overflows `cap`.
inline std::size_t recursion_size(const OutcomeClasses& c, std::size_t cap) {
    std::size_t size = 1;
    for (auto n : c.count) {
        if (size > cap / (n + 1)) return 0;
        size *= n + 1;
    }
    return size;
}

/**
 * E(k) over collected-per-class counts k:
 *   R(k) E(k) = 1 + sum_j (c_j - k_j) p_j E(k + e_j),  R(k) = sum_j (c_j - k_j) p_j.
 * Each new trajectory costs 1/R pulls on average and is drawn in proportion
 * to its probability, so this is the collection sum averaged over orders.
 */
inline double collection_recursion(const OutcomeClasses& c, std::size_t size) {
    const std::size_t m = c.count.size();
    std::vector<std::size_t> stride(m);
    std::size_t s = 1;
    for (std::size_t j = 0; j < m; ++j) {
        stride[j] = s;
        s *= c.count[j] + 1;
    }
    std::vector<double> e(size, 0.0);
    std::vector<std::size_t> k(m);
    for (std::size_t idx = size; idx-- > 0;) {
        std::size_t rem = idx;
        for (std::size_t j = 0; j < m; ++j) {
            k[j] = rem % (c.count[j] + 1);
            rem /= c.count[j] + 1;
        }
        double rate = 0.0, acc = 1.0;
        for (std::size_t j = 0; j < m; ++j) {
            const double w = double(c.count[j] - k[j]) * c.prob[j];
            if (c.count[j] == k[j]) continue;
            rate += w;
            acc += w * e[idx + stride[j]];
        }
        e[idx] = rate > 0.0 ? acc / rate : 0.0;
    }
    return e[0];
}

/// E = int_0^inf 1 - prod_j (1 - exp(-p_j t))^c_j dt (Poissonized coupon collector).
inline double collection_integral(const OutcomeClasses& c) {
    const auto survival = [&](double t) {
        if (t <= 0.0) return 1.0;
        double log_all = 0.0;
        for (std::size_t j = 0; j < c.count.size(); ++j)
            log_all += double(c.count[j]) * std::log1p(-std::exp(-c.prob[j] * t));
        return -std::expm1(log_all);
    };
    // split at the characteristic time of each class so every panel is smooth
    std::vector<double> cuts{0.0};
    for (double p : c.prob) cuts.push_back(1.0 / p);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
        total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(survival, cuts[i], cuts[i + 1], 20, 1e-14);
    total += boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
        survival, cuts.back(), std::numeric_limits<double>::infinity(), 20, 1e-14);
    return total;
}

} // namespace detail

/// Collection sum taken in the fixed decreasing-probability order:
/// sum_n 1 / (1 - P(tau_w) - sum_{collected before n} P(tau_i)).
inline double expected_trajectories_fixed_order(const BudgetModel& model) {
    model.validate();
    detail::check_horizon(model.horizon_t);
    const double worst = trajectory_probability(0, model.horizon_t, model.delta);
    double collected = 0.0, total = 0.0;
    for (auto pattern : collection_order(model.horizon_t, model.delta)) {
        const double denom = 1.0 - worst - collected;
        if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
        total += 1.0 / denom;
        collected += trajectory_probability(pattern, model.horizon_t, model.delta);
    }
    return total;
}

/// States allowed in the exact class-count recursion before switching to quadrature.
inline constexpr std::size_t kRecursionCap = 2'000'000;

/**
 * Expected pulls to collect every desired trajectory: the same collection
 * sum, averaged over the order in which trajectories actually arrive.
 * Exact recursion while it fits in kRecursionCap states (T <= 6), adaptive
 * quadrature of the Poissonized form beyond. Infinite when some desired
 * trajectory has probability zero (delta = 1, T > 1).
 */
inline double expected_trajectories_analytic(const BudgetModel& model) {
    model.validate();
    detail::check_horizon(model.horizon_t);
    const auto classes = detail::outcome_classes(model.horizon_t, model.delta);
    for (double p : classes.prob)
        if (p == 0.0) return std::numeric_limits<double>::infinity();
    if (const auto size = detail::recursion_size(classes, kRecursionCap); size != 0)
        return detail::collection_recursion(classes, size);
    return detail::collection_integral(classes);
}

/// Same quantity by quadrature regardless of T; kept separate for cross-checks.
inline double expected_trajectories_quadrature(const BudgetModel& model) {
    model.validate();
    detail::check_horizon(model.horizon_t);
    return detail::collection_integral(detail::outcome_classes(model.horizon_t, model.delta));
}

/**
 * Simulates the urn: each pull draws T Bernoulli(delta) steps; an unseen
 * desired pattern is collected, anything else is wasted. Counts pulls until
 * all 2^T - 1 desired patterns are held. Trial i uses derive_seed(seed, {i}).
 */
inline CollectionResult expected_trajectories_mc(const BudgetModel& model, std::size_t trials, std::uint64_t seed) {
    model.validate();
    detail::check_horizon(model.horizon_t);
    if (trials < 1) throw std::invalid_argument("expected_trajectories_mc: trials must be >= 1");
    if (model.delta == 1.0 && model.horizon_t > 1)
        throw std::invalid_argument("expected_trajectories_mc: delta = 1 makes most trajectories unreachable");
    const std::size_t n = std::size_t(1) << model.horizon_t;
    std::vector<bool> seen(n);
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        Rng rng = make_rng(derive_seed(seed, {i}));
        std::fill(seen.begin(), seen.end(), false);
        std::size_t remaining = n - 1, pulls = 0;
        while (remaining > 0) {
            std::uint32_t pattern = 0;
            for (std::size_t b = 0; b < model.horizon_t; ++b)
                if (uniform01(rng) < model.delta) pattern |= std::uint32_t(1) << b;
            ++pulls;
            if (pattern != 0 && !seen[pattern]) {
                seen[pattern] = true;
                --remaining;
            }
        }
        const double x = double(pulls);
        const double d = x - mean;
        mean += d / double(i + 1);
        m2 += d * (x - mean);
    }
    CollectionResult r;
    r.trials = trials;
    r.expected_pulls_mc = mean;
    r.mc_stderr = trials > 1 ? std::sqrt(m2 / double(trials - 1) / double(trials)) : 0.0;
    r.expected_pulls_analytic = expected_trajectories_analytic(model);
    r.expected_pulls_fixed_order = expected_trajectories_fixed_order(model);
    return r;
}

/// Largest t with t / delta <= budget (each optimal pair costs 1/delta pulls
/// when the adversary can resample from the same state).
inline std::size_t budget_to_optimal_pairs(double delta, double budget_b) {
    if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("budget_to_optimal_pairs: delta must lie in (0, 1]");
    if (!(budget_b >= 0.0) || !std::isfinite(budget_b))
        throw std::invalid_argument("budget_to_optimal_pairs: budget must be finite and >= 0");
    constexpr double rel = 1e-12;
    const auto fits = [&](double t) { return t / delta <= budget_b * (1.0 + rel); };
    double t = std::floor(budget_b * delta);
    while (t > 0.0 && !fits(t)) t -= 1.0;
    while (fits(t + 1.0)) t += 1.0;
    return std::size_t(t);
}

struct FragmentBounds {
    double lower = 0.0; ///< P(|fragment| < t) >= max(0, 1 - k/t)
    double upper = 1.0; ///< P(|fragment| <= t) <= min(1, (T - k)/(T - t))
};

/// Markov / reverse-Markov bounds on the unique-pair count of a trajectory,
/// clamped to [0, 1]. Requires 0 < t < k <= T.
inline FragmentBounds markov_fragment_bounds(double horizon_t, double k, double t) {
    if (!(k > 0.0 && k <= horizon_t)) throw std::invalid_argument("markov_fragment_bounds: need 0 < k <= T");
    if (!(t > 0.0 && t < k)) throw std::invalid_argument("markov_fragment_bounds: need 0 < t < k");
    return {std::clamp(1.0 - k / t, 0.0, 1.0), std::clamp((horizon_t - k) / (horizon_t - t), 0.0, 1.0)};
}

/// Number of distinct (s,a) pairs in a trajectory.
inline std::size_t unique_pairs(const Trajectory& traj, std::size_t n_actions) {
    std::vector<std::size_t> keys;
    keys.reserve(traj.size());
    for (const auto& st : traj.steps) keys.push_back(st.state * n_actions + st.action);
    std::sort(keys.begin(), keys.end());
    return std::size_t(std::unique(keys.begin(), keys.end()) - keys.begin());
}

/// Unique-pair counts of `trials` rollouts; rollout i uses derive_seed(seed, {i}).
inline std::vector<std::size_t> fragment_lengths(const FiniteMdp& mdp, const StochasticPolicy& policy,
                                                 std::size_t horizon_cap, std::size_t trials, std::uint64_t seed) {
    std::vector<std::size_t> out(trials);
    for (std::size_t i = 0; i < trials; ++i) {
        const auto traj = rollout(mdp, policy, horizon_cap, derive_seed(seed, {i}));
        out[i] = unique_pairs(traj, mdp.n_actions());
    }
    return out;
}

struct EffectiveHorizon {
    double k = 0.0;           ///< mean unique (s,a) pairs per trajectory
    std::size_t k_ceil = 0;   ///< k rounded up, for use as a new horizon
    double mean_length = 0.0; ///< mean trajectory length including revisits
    std::size_t trials = 0;
};

inline EffectiveHorizon effective_horizon(const FiniteMdp& mdp, const StochasticPolicy& policy,
                                          std::size_t horizon_cap, std::size_t trials, std::uint64_t seed) {
    if (trials < 1) throw std::invalid_argument("effective_horizon: trials must be >= 1");
    EffectiveHorizon r;
    r.trials = trials;
    double uniq = 0.0, len = 0.0;
    for (std::size_t i = 0; i < trials; ++i) {
        const auto traj = rollout(mdp, policy, horizon_cap, derive_seed(seed, {i}));
        uniq += double(unique_pairs(traj, mdp.n_actions()));
        len += double(traj.size());
    }
    r.k = uniq / double(trials);
    r.mean_length = len / double(trials);
    r.k_ceil = std::size_t(std::ceil(r.k - 1e-12));
    return r;
}

/// Empirical fragment-length distribution checked against the clamped bounds at one t.
struct FragmentCheck {
    double t = 0.0;
    double cdf_below = 0.0;    ///< empirical P(n < t)
    double cdf_at_most = 0.0;  ///< empirical P(n <= t)
    FragmentBounds bounds;
    bool ok = false;
};

/// Checks every t in `ts` (each must satisfy 0 < t < k) with k the sample mean.
inline std::vector<FragmentCheck> check_fragment_bounds(const std::vector<std::size_t>& lengths, double horizon_t,
                                                        const std::vector<double>& ts) {
    if (lengths.empty()) throw std::invalid_argument("check_fragment_bounds: no samples");
    const double k = std::accumulate(lengths.begin(), lengths.end(), 0.0) / double(lengths.size());
    std::vector<FragmentCheck> out;
    for (double t : ts) {
        FragmentCheck c;
        c.t = t;
        c.bounds = markov_fragment_bounds(horizon_t, k, t);
        std::size_t below = 0, at_most = 0;
        for (auto n : lengths) {
            below += double(n) < t;
            at_most += double(n) <= t;
        }
        c.cdf_below = double(below) / double(lengths.size());
        c.cdf_at_most = double(at_most) / double(lengths.size());
        c.ok = c.cdf_below >= c.bounds.lower - 1e-12 && c.cdf_at_most <= c.bounds.upper + 1e-12;
        out.push_back(c);
    }
    return out;
}

} // namespace croplab
