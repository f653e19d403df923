#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace croplab {

inline double median(std::vector<double> xs) {
    if (xs.empty()) throw std::invalid_argument("median: empty sample");
    std::sort(xs.begin(), xs.end());
    const std::size_t m = xs.size() / 2;
    return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

struct RankSumResult {
    double u = 0.0;         ///< Mann-Whitney U of the first sample
    double z = 0.0;
    double p_greater = 1.0; ///< one-sided p for "first sample tends to be larger"
};

/**
 * Wilcoxon rank-sum / Mann-Whitney U with midranks for ties and the
 * tie-corrected normal approximation (continuity corrected).
 */
inline RankSumResult rank_sum_greater(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n1 = x.size(), n2 = y.size();
    if (n1 == 0 || n2 == 0) throw std::invalid_argument("rank_sum_greater: empty sample");
    std::vector<std::pair<double, int>> all;
    for (double v : x) all.push_back({v, 0});
    for (double v : y) all.push_back({v, 1});
    std::sort(all.begin(), all.end(), [](auto& a, auto& b) { return a.first < b.first; });
    const double n = double(n1 + n2);
    double rank_x = 0.0, tie_term = 0.0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].first == all[i].first) ++j;
        const double mid = 0.5 * double(i + 1 + j);
        const double t = double(j - i);
        tie_term += t * t * t - t;
        for (std::size_t k = i; k < j; ++k)
            if (all[k].second == 0) rank_x += mid;
        i = j;
    }
    RankSumResult r;
    r.u = rank_x - double(n1) * double(n1 + 1) / 2.0;
    const double mean = double(n1) * double(n2) / 2.0;
    const double var = double(n1) * double(n2) / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if (var <= 0.0) {
        r.z = 0.0;
        r.p_greater = r.u > mean ? 0.0 : 1.0;
        return r;
    }
    r.z = (r.u - mean - 0.5) / std::sqrt(var);
    r.p_greater = 0.5 * std::erfc(r.z / std::sqrt(2.0));
    return r;
}

} // namespace croplab
