#pragma once

#include "croplab/adversary.hpp"
#include "croplab/budget.hpp"
#include "croplab/crop.hpp"
#include "croplab/harness/config.hpp"
#include "croplab/io.hpp"
#include "croplab/loss.hpp"
#include "croplab/solver.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace croplab::harness {

/// A command's input file is absent; the CLI maps it to exit code 3.
class MissingArtifact : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace fs = std::filesystem;

// File names inside the output directory.
inline constexpr const char* kMdpFile = "mdp.txt";
inline constexpr const char* kQTableFile = "qtable.txt";
inline constexpr const char* kVTableFile = "vtable.txt";
inline constexpr const char* kQStarFile = "qstar.txt";
inline constexpr const char* kCropEvalCsv = "crop_eval.csv";
inline constexpr const char* kAttackCsv = "attack.csv";
inline constexpr const char* kCurvesCsv = "learning_curves.csv";
inline constexpr const char* kSamplesCsv = "samples_to_threshold.csv";
inline constexpr const char* kCollectionCsv = "budget_collection.csv";
inline constexpr const char* kPairsCsv = "budget_pairs.csv";
inline constexpr const char* kFragmentsCsv = "budget_fragments.csv";

// CSV headers, schema v1 (docs/csv_schema.md).
inline constexpr const char* kCropEvalHeader =
    "cell,variant,delta,rho,succ_diversions,delta_times_T,total_timesteps,g_star,g_f,empirical_gap,"
    "per_step_gap_max,bound_per_step,horizon_n,e_l_tight,e_l_bound,visited_gap_sum,per_step_ok,sum_ok,"
    "bound_guaranteed";
inline constexpr const char* kAttackHeader =
    "cell,variant,delta,rho,adversary,trials,median_samples,censored,action_match_rate,return_ratio,tv_distance,"
    "samples_used,eps,eps_prime,theorem_fraction,theorem_fraction_halved";
inline constexpr const char* kCurvesHeader = "cell,variant,delta,rho,samples,mean_return_ratio";
inline constexpr const char* kSamplesHeader = "cell,variant,delta,rho,trial,samples,censored";
inline constexpr const char* kCollectionHeader =
    "T,delta,analytic,fixed_order,mc_mean,mc_stderr,mc_trials,within_3se";
inline constexpr const char* kPairsHeader = "delta,budget,optimal_pairs";
inline constexpr const char* kFragmentsHeader = "T,k,t,cdf_below,cdf_at_most,lower,upper,ok";

namespace detail {

/// Comma-joined row builder.
class Row {
public:
    Row& operator<<(double x) { return put(format_double(x)); }
    Row& operator<<(std::size_t x) { return put(std::to_string(x)); }
    Row& operator<<(bool x) { return put(x ? "1" : "0"); }
    Row& operator<<(const std::string& x) { return put(x); }
    Row& operator<<(std::string_view x) { return put(std::string(x)); }
    Row& operator<<(const char* x) { return put(x); }
    std::string str() const { return buf_ + "\n"; }

private:
    Row& put(const std::string& s) {
        if (!first_) buf_ += ',';
        buf_ += s;
        first_ = false;
        return *this;
    }
    std::string buf_;
    bool first_ = true;
};

/**
 * Runs work(i) for i in [0, n) on up to `jobs` threads. Each result lands in
 * its own slot, so output order never depends on scheduling. The first
 * failure (by index) is rethrown.
 */
template <class Work>
std::vector<std::string> run_cells(std::size_t n, std::size_t jobs, Work&& work) {
    std::vector<std::string> out(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = work(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

inline void write_file(const fs::path& path, const std::string& header, const std::vector<std::string>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << header << '\n';
    for (const auto& r : rows) out << r;
}

template <class T, class Reader>
T read_artifact(const fs::path& path, Reader reader) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing artifact " + path.string() + " (run 'solve' first)");
    return reader(in, path.string());
}

struct CropCell {
    Variant variant;
    double delta;
    double rho;
};

inline std::vector<CropCell> crop_cells(const CropGrid& grid) {
    std::vector<CropCell> cells;
    for (auto v : grid.variants)
        for (double d : grid.deltas)
            for (double r : grid.rhos) cells.push_back({v, d, r});
    return cells;
}

} // namespace detail

/// Solved model as stored by `solve`.
struct Artifacts {
    FiniteMdp mdp;
    QTable q;      ///< table defining the defended policy
    VTable v;
    QTable q_star; ///< exact optimum, for the epsilon-optimality check
};

inline Artifacts load_artifacts(const fs::path& dir) {
    auto mdp = detail::read_artifact<FiniteMdp>(dir / kMdpFile, [](std::istream& in, const std::string& s) { return read_mdp(in, s); });
    auto q = detail::read_artifact<QTable>(dir / kQTableFile, [](std::istream& in, const std::string& s) { return read_qtable(in, s); });
    auto v = detail::read_artifact<VTable>(dir / kVTableFile, [](std::istream& in, const std::string& s) { return read_vtable(in, s); });
    auto qs = detail::read_artifact<QTable>(dir / kQStarFile, [](std::istream& in, const std::string& s) { return read_qtable(in, s); });
    if (q.n_states() != mdp.n_states() || q.n_actions() != mdp.n_actions() || v.n_states() != mdp.n_states() ||
        !qs.same_shape(q))
        throw std::runtime_error("artifacts in " + dir.string() + " disagree on shape");
    return {std::move(mdp), std::move(q), std::move(v), std::move(qs)};
}

/// Builds the MDP, solves it, and writes mdp/qtable/vtable/qstar files.
inline Artifacts cmd_solve(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    FiniteMdp mdp = build_mdp(cfg.mdp);
    auto exact = value_iteration(mdp, cfg.solver.tol, cfg.solver.max_iters);
    QTable q = exact.q;
    if (cfg.solver.method == SolverSpec::Method::QLearning) {
        auto opt = cfg.solver.qlearning;
        opt.seed = derive_seed(cfg.seed, {0});
        q = q_learning(mdp, opt);
    }
    VTable v = max_values(q);
    const auto dump = [&](const char* name, auto writer) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        writer(out);
    };
    dump(kMdpFile, [&](std::ostream& o) { write_mdp(o, mdp); });
    dump(kQTableFile, [&](std::ostream& o) { write_qtable(o, q); });
    dump(kVTableFile, [&](std::ostream& o) { write_vtable(o, v); });
    dump(kQStarFile, [&](std::ostream& o) { write_qtable(o, exact.q); });
    return {std::move(mdp), std::move(q), std::move(v), std::move(exact.q)};
}

/**
 * Loss analysis and test-time diversion counts for every (variant, delta,
 * rho) cell. Cell i draws from derive_seed(seed, {1, i}).
 */
inline void cmd_crop_eval(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.out_dir;
    const auto art = load_artifacts(dir);
    const auto cells = detail::crop_cells(cfg.crop);
    auto rows = detail::run_cells(cells.size(), cfg.jobs, [&](std::size_t i) {
        const auto& c = cells[i];
        const CropPolicy crop(art.q, art.v, CropConfig{c.delta, c.rho, c.variant});
        const std::uint64_t cell_seed = derive_seed(cfg.seed, {1, i});
        std::size_t diversions = 0, steps = 0;
        for (std::size_t e = 0; e < cfg.crop.episodes; ++e) {
            const auto ro = rollout_crop(art.mdp, crop, cfg.crop.horizon, derive_seed(cell_seed, {e}));
            diversions += ro.diversions;
            steps += ro.trajectory.size();
        }
        const auto rep = loss_bound_report(art.mdp, crop, cfg.crop.horizon, derive_seed(cell_seed, {cfg.crop.episodes}));
        detail::Row row;
        row << i << to_string(c.variant) << c.delta << c.rho << diversions << c.delta * double(steps) << steps
            << rep.g_star << rep.g_f << rep.empirical_gap << rep.per_step_gap_max << rep.bound_per_step << rep.horizon_n
            << rep.e_l_tight << rep.e_l_bound << rep.visited_gap_sum << rep.per_step_ok << rep.sum_ok
            << rep.bound_guaranteed;
        return row.str();
    });
    detail::write_file(dir / kCropEvalCsv, kCropEvalHeader, rows);
}

/**
 * Imitation attack per cell: samples-to-threshold distribution, learning
 * curve, final fidelity, and the epsilon-optimality check on
 * (Q*, Q^pi, Q^imitator). Threshold trials share derive_seed(seed, {3})
 * across cells, so cells are paired trial by trial.
 */
inline void cmd_attack(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.out_dir;
    const auto art = load_artifacts(dir);
    const auto cells = detail::crop_cells(cfg.crop);
    auto opt = cfg.adversary.threshold;
    opt.horizon = cfg.crop.horizon;
    opt.seed = derive_seed(cfg.seed, {3});
    const auto q_pi = evaluate_policy_exact(art.mdp, greedy_policy(art.q)).q;
    const std::string adversary = cfg.adversary.kind == AdversarySpec::Kind::BC ? "bc" : "dagger";

    struct CellOut {
        std::string attack, curve, samples;
    };
    std::vector<CellOut> outs(cells.size());
    detail::run_cells(cells.size(), cfg.jobs, [&](std::size_t i) {
        const auto& c = cells[i];
        const CropPolicy expert(art.q, art.v, CropConfig{c.delta, c.rho, c.variant});
        const auto dist = samples_to_threshold(art.mdp, expert, opt);
        const auto curve = learning_curve(art.mdp, expert, opt);

        ImitatorPolicy imitator = [&] {
            const std::uint64_t s = derive_seed(cfg.seed, {4, i});
            if (cfg.adversary.kind == AdversarySpec::Kind::BC)
                return bc_fit(expert_demos(art.mdp, expert, opt.max_samples, opt.horizon, s), art.mdp.n_states(),
                              art.mdp.n_actions(), opt.smoothing);
            DaggerOptions d;
            d.rounds = cfg.adversary.dagger_rounds;
            d.rollouts_per_round = cfg.adversary.dagger_rollouts;
            d.horizon = opt.horizon;
            d.smoothing = opt.smoothing;
            d.seed = s;
            return dagger_fit(art.mdp, expert, d);
        }();
        const auto fid = fidelity(imitator, art.q, expert, art.mdp);
        const auto q_imit = evaluate_policy_exact(art.mdp, imitator.dist).q;
        const auto measured = check_theorem1(art.q_star, q_pi, q_imit, 0.0, 0.0, 1.0);
        const auto full = check_theorem1(art.q_star, q_pi, q_imit, measured.eps, measured.eps_prime, 1.0);
        const auto half = check_theorem1(art.q_star, q_pi, q_imit, measured.eps / 2, measured.eps_prime / 2, 1.0);

        detail::Row row;
        row << i << to_string(c.variant) << c.delta << c.rho << adversary << opt.trials << dist.median()
            << dist.censored_count() << fid.action_match_rate << fid.return_ratio << fid.tv_distance << fid.samples_used
            << measured.eps << measured.eps_prime << full.bound_satisfied_fraction << half.bound_satisfied_fraction;
        CellOut o;
        o.attack = row.str();
        for (const auto& p : curve) {
            detail::Row r;
            r << i << to_string(c.variant) << c.delta << c.rho << p.samples << p.mean_return_ratio;
            o.curve += r.str();
        }
        for (std::size_t t = 0; t < dist.samples.size(); ++t) {
            detail::Row r;
            r << i << to_string(c.variant) << c.delta << c.rho << t << dist.samples[t] << bool(dist.censored[t]);
            o.samples += r.str();
        }
        outs[i] = std::move(o);
        return std::string{};
    });
    std::vector<std::string> attack, curves, samples;
    for (auto& o : outs) {
        attack.push_back(std::move(o.attack));
        curves.push_back(std::move(o.curve));
        samples.push_back(std::move(o.samples));
    }
    detail::write_file(dir / kAttackCsv, kAttackHeader, attack);
    detail::write_file(dir / kCurvesCsv, kCurvesHeader, curves);
    detail::write_file(dir / kSamplesCsv, kSamplesHeader, samples);
}

/**
 * Budget analysis: collection cost (analytic, fixed-order, Monte-Carlo),
 * optimal pairs per budget, and fragment-length bounds from a uniform random
 * walk on a chain of fragment_horizon + 1 states.
 */
inline void cmd_budget(const ExperimentConfig& cfg) {
    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    const auto& b = cfg.budget;
    struct Cell {
        std::size_t t;
        double delta;
    };
    std::vector<Cell> cells;
    for (auto t : b.horizons) {
        if (t < 1 || t > kMaxEnumeratedHorizon) throw ConfigError("budget horizon " + std::to_string(t) + " outside [1, 20]");
        for (double d : b.deltas) cells.push_back({t, d});
    }
    auto collection = detail::run_cells(cells.size(), cfg.jobs, [&](std::size_t i) {
        BudgetModel m;
        m.horizon_t = cells[i].t;
        m.delta = cells[i].delta;
        m.k_expected_unique = double(m.horizon_t);
        detail::Row row;
        row << m.horizon_t << m.delta << expected_trajectories_analytic(m) << expected_trajectories_fixed_order(m);
        if (m.delta == 1.0 && m.horizon_t > 1) {
            row << "" << "" << std::size_t{0} << "";
        } else {
            const auto r = expected_trajectories_mc(m, b.mc_trials, derive_seed(cfg.seed, {5, i}));
            row << r.expected_pulls_mc << r.mc_stderr << r.trials
                << (std::abs(r.expected_pulls_analytic - r.expected_pulls_mc) <= 3.0 * r.mc_stderr);
        }
        return row.str();
    });
    detail::write_file(dir / kCollectionCsv, kCollectionHeader, collection);

    std::vector<std::string> pairs;
    for (double d : b.deltas)
        for (double budget : b.budgets) {
            detail::Row row;
            row << d << budget << budget_to_optimal_pairs(d, budget);
            pairs.push_back(row.str());
        }
    detail::write_file(dir / kPairsCsv, kPairsHeader, pairs);

    const std::size_t horizon = b.fragment_horizon;
    const auto chain = build_chain(horizon + 1, 0.9);
    const auto lengths = fragment_lengths(chain, StochasticPolicy::uniform(chain.n_states(), chain.n_actions()), horizon,
                                          b.fragment_trials, derive_seed(cfg.seed, {6}));
    double k = 0.0;
    for (auto n : lengths) k += double(n);
    k /= double(lengths.size());
    std::vector<double> ts;
    for (int j = 1; j <= 9; ++j) ts.push_back(k * j / 10.0);
    std::vector<std::string> frags;
    for (const auto& c : check_fragment_bounds(lengths, double(horizon), ts)) {
        detail::Row row;
        row << horizon << k << c.t << c.cdf_below << c.cdf_at_most << c.bounds.lower << c.bounds.upper << c.ok;
        frags.push_back(row.str());
    }
    detail::write_file(dir / kFragmentsCsv, kFragmentsHeader, frags);
}

namespace detail {

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw std::runtime_error("csv column '" + name + "' not found");
    }
};

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline Csv read_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("missing " + path.string() + " (run the producing command first)");
    Csv csv;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty csv");
    csv.header = split_csv(line);
    while (std::getline(in, line))
        if (!line.empty()) csv.rows.push_back(split_csv(line));
    return csv;
}

} // namespace detail

/**
 * Turns the CSVs into whitespace-separated series under <out>/report/:
 * learning_curves.dat (one gnuplot index block per cell), test_time.dat,
 * param_search_<variant>.dat (delta x rho grid, blank line between delta
 * rows) and budget.dat.
 */
inline void cmd_report(const fs::path& dir) {
    const auto crop = detail::read_csv(dir / kCropEvalCsv);
    const auto curves = detail::read_csv(dir / kCurvesCsv);
    const auto budget = detail::read_csv(dir / kCollectionCsv);
    const fs::path rep = dir / "report";
    fs::create_directories(rep);

    {
        std::ofstream out(rep / "learning_curves.dat", std::ios::binary);
        const auto ci = curves.col("cell"), cv = curves.col("variant"), cd = curves.col("delta"),
                   cr = curves.col("rho"), cs = curves.col("samples"), cm = curves.col("mean_return_ratio");
        std::string current;
        for (const auto& r : curves.rows) {
            if (r[ci] != current) {
                if (!current.empty()) out << "\n\n";
                current = r[ci];
                out << "# cell " << r[ci] << " variant " << r[cv] << " delta " << r[cd] << " rho " << r[cr] << '\n'
                    << "# samples mean_return_ratio\n";
            }
            out << r[cs] << ' ' << r[cm] << '\n';
        }
    }
    {
        std::ofstream out(rep / "test_time.dat", std::ios::binary);
        out << "# cell variant delta rho return_ratio succ_diversions delta_times_T total_timesteps\n";
        const auto ci = crop.col("cell"), cv = crop.col("variant"), cd = crop.col("delta"), cr = crop.col("rho"),
                   gs = crop.col("g_star"), gf = crop.col("g_f"), su = crop.col("succ_diversions"),
                   dt = crop.col("delta_times_T"), tt = crop.col("total_timesteps");
        for (const auto& r : crop.rows) {
            const double star = *parse_double(r[gs]);
            const double ratio = star == 0.0 ? 1.0 : *parse_double(r[gf]) / star;
            out << r[ci] << ' ' << r[cv] << ' ' << r[cd] << ' ' << r[cr] << ' ' << format_double(ratio) << ' ' << r[su]
                << ' ' << r[dt] << ' ' << r[tt] << '\n';
        }
        std::map<std::string, std::vector<const std::vector<std::string>*>> by_variant;
        for (const auto& r : crop.rows) by_variant[r[cv]].push_back(&r);
        for (const auto& [variant, rows] : by_variant) {
            std::ofstream grid(rep / ("param_search_" + variant + ".dat"), std::ios::binary);
            grid << "# delta rho return_ratio\n";
            std::string last_delta;
            for (const auto* r : rows) {
                if (!last_delta.empty() && (*r)[cd] != last_delta) grid << '\n';
                last_delta = (*r)[cd];
                const double star = *parse_double((*r)[gs]);
                const double ratio = star == 0.0 ? 1.0 : *parse_double((*r)[gf]) / star;
                grid << (*r)[cd] << ' ' << (*r)[cr] << ' ' << format_double(ratio) << '\n';
            }
        }
    }
    {
        std::ofstream out(rep / "budget.dat", std::ios::binary);
        out << "# T delta analytic fixed_order mc_mean mc_stderr\n";
        const auto ct = budget.col("T"), cd = budget.col("delta"), ca = budget.col("analytic"),
                   cf = budget.col("fixed_order"), cm = budget.col("mc_mean"), ce = budget.col("mc_stderr");
        for (const auto& r : budget.rows)
            out << r[ct] << ' ' << r[cd] << ' ' << r[ca] << ' ' << r[cf] << ' ' << (r[cm].empty() ? "nan" : r[cm]) << ' '
                << (r[ce].empty() ? "nan" : r[ce]) << '\n';
    }
}

/// solve, crop-eval, attack, budget, report.
inline void cmd_sweep(const ExperimentConfig& cfg) {
    cmd_solve(cfg);
    cmd_crop_eval(cfg);
    cmd_attack(cfg);
    cmd_budget(cfg);
    cmd_report(cfg.out_dir);
}

} // namespace croplab::harness
