#pragma once

#include "croplab/crop.hpp"
#include "croplab/mdp.hpp"
#include "croplab/solver.hpp"

#include <algorithm>
#include <string_view>
#include <vector>

namespace croplab {

/// Return of f from the start distribution, by exact evaluation.
inline double expected_return_crop(const FiniteMdp& mdp, const CropPolicy& crop) {
    return evaluate_crop_exact(mdp, crop).start_return;
}

/**
 * One-step expected Q shortfall of f under the base table:
 * (1 - delta) * (Q(s, pi(s)) - mean_{a in A^} Q(s, a)), zero where A^ is
 * empty. Indexed by state for QDiff and by prev * n + state otherwise.
 */
inline std::vector<double> per_step_gap(const CropPolicy& crop) {
    const std::size_t n = crop.n_states();
    const bool hist = uses_history(crop.config().variant);
    const double w = 1.0 - crop.config().delta;
    std::vector<double> gaps(hist ? n * n : n, 0.0);
    for (State p = 0; p < (hist ? n : 1); ++p)
        for (State s = 0; s < n; ++s) {
            const auto& cand = crop.candidates(s, hist ? std::optional<State>(p) : std::nullopt);
            if (cand.empty()) continue;
            const auto row = crop.base_q().row(s);
            double mean = 0.0;
            for (Action a : cand) mean += row[a];
            mean /= double(cand.size());
            gaps[hist ? p * n + s : s] = w * (row[crop.base_action(s)] - mean);
        }
    return gaps;
}

/// Slack on the bound comparisons below.
inline constexpr double kBoundSlack = 1e-12;

struct LossReport {
    double g_star = 0.0;           ///< return of pi from the start distribution
    double g_f = 0.0;              ///< return of f
    double per_step_gap_max = 0.0; ///< max over states of the one-step shortfall
    double bound_per_step = 0.0;   ///< (1 - delta) * rho
    std::size_t horizon_n = 0;
    double e_l_bound = 0.0;        ///< N * rho
    double e_l_tight = 0.0;        ///< N * (1 - delta) * rho
    double empirical_gap = 0.0;    ///< g_star - g_f, may exceed the one-step bound
    double visited_gap_sum = 0.0;  ///< one-step shortfalls summed along an N-step rollout of f
    double proxy_gap_sum = 0.0;    ///< N * per_step_gap_max
    bool per_step_ok = false;
    bool sum_ok = false;
    /// The one-step bound is guaranteed by construction only for QDiff.
    bool bound_guaranteed = false;
    /// Which state distribution the one-step shortfall is evaluated under.
    std::string_view gap_basis = "per-state under base Q";
};

/**
 * Fills a LossReport. The rollout used for `visited_gap_sum` runs f for up
 * to N steps with the given seed; an episode that ends early contributes only
 * its visited steps.
 */
inline LossReport loss_bound_report(const FiniteMdp& mdp, const CropPolicy& crop, std::size_t horizon_n,
                                    std::uint64_t seed) {
    LossReport r;
    const auto& cfg = crop.config();
    r.g_star = start_value(mdp, evaluate_policy_exact(mdp, crop.base_policy()).v);
    r.g_f = expected_return_crop(mdp, crop);
    r.empirical_gap = r.g_star - r.g_f;

    const auto gaps = per_step_gap(crop);
    r.per_step_gap_max = gaps.empty() ? 0.0 : *std::max_element(gaps.begin(), gaps.end());
    r.bound_per_step = (1.0 - cfg.delta) * cfg.rho;
    r.horizon_n = horizon_n;
    r.e_l_bound = double(horizon_n) * cfg.rho;
    r.e_l_tight = double(horizon_n) * r.bound_per_step;
    r.proxy_gap_sum = double(horizon_n) * r.per_step_gap_max;

    const bool hist = uses_history(cfg.variant);
    const auto ro = rollout_crop(mdp, crop, horizon_n, seed);
    const std::size_t n = crop.n_states();
    State prev = ro.trajectory.empty() ? 0 : ro.trajectory.steps.front().state;
    for (const auto& st : ro.trajectory.steps) {
        r.visited_gap_sum += gaps[hist ? prev * n + st.state : st.state];
        prev = st.state;
    }

    r.per_step_ok = r.per_step_gap_max <= r.bound_per_step + kBoundSlack;
    r.sum_ok = r.visited_gap_sum <= r.e_l_tight + double(horizon_n) * kBoundSlack &&
               r.proxy_gap_sum <= r.e_l_tight + double(horizon_n) * kBoundSlack && r.e_l_tight <= r.e_l_bound;
    r.bound_guaranteed = !hist;
    return r;
}

} // namespace croplab
