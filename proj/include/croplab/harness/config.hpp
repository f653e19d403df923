#pragma once

#include "croplab/adversary.hpp"
#include "croplab/budget.hpp"
#include "croplab/crop.hpp"
#include "croplab/io.hpp"
#include "croplab/mdp.hpp"
#include "croplab/solver.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace croplab::harness {

/// Invalid configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MdpSpec {
    enum class Builder { Gridworld, Chain, File } builder = Builder::Gridworld;
    GridworldParams grid{};
    std::size_t chain_n = 5;
    double chain_gamma = 0.9;
    std::string path;
};

struct SolverSpec {
    enum class Method { ValueIteration, QLearning } method = Method::ValueIteration;
    double tol = 1e-12;
    std::size_t max_iters = 100000;
    QLearningOptions qlearning{};
};

struct CropGrid {
    std::vector<double> deltas{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> rhos{0.0, 0.01, 0.05, 0.1, 0.5};
    std::vector<Variant> variants{Variant::QDiff};
    std::size_t horizon = 100;  ///< rollout horizon_cap and the N of the loss bound
    std::size_t episodes = 10;  ///< test-time episodes for diversion counts
};

struct AdversarySpec {
    enum class Kind { BC, DAgger } kind = Kind::BC;
    ThresholdOptions threshold{};
    std::size_t dagger_rounds = 5;
    std::size_t dagger_rollouts = 10;
};

struct BudgetSpec {
    std::vector<std::size_t> horizons{1, 2, 3, 4};
    std::vector<double> deltas{0.3, 0.5, 0.7};
    std::size_t mc_trials = 100000;
    std::vector<double> budgets{20.0};
    std::size_t fragment_horizon = 10;
    std::size_t fragment_trials = 10000;
};

/// Everything a run needs. Seeds are always explicit.
struct ExperimentConfig {
    MdpSpec mdp{};
    SolverSpec solver{};
    CropGrid crop{};
    AdversarySpec adversary{};
    BudgetSpec budget{};
    std::uint64_t seed = 1;
    std::string out_dir = "results";
    std::size_t jobs = 1;
};

inline FiniteMdp build_mdp(const MdpSpec& spec) {
    switch (spec.builder) {
    case MdpSpec::Builder::Gridworld: return build_gridworld(spec.grid);
    case MdpSpec::Builder::Chain: return build_chain(spec.chain_n, spec.chain_gamma);
    case MdpSpec::Builder::File: {
        std::ifstream in(spec.path);
        if (!in) throw ConfigError("cannot open mdp file '" + spec.path + "'");
        return read_mdp(in, spec.path);
    }
    }
    throw std::logic_error("unreachable");
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

class Parser {
public:
    Parser(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
        throw ConfigError(source_ + ":" + std::to_string(line) + ": " + msg);
    }

    double real(std::size_t line, const std::string& v, double lo, double hi, bool hi_open) const {
        auto x = parse_double(v);
        if (!x) fail(line, "expected a number, got '" + v + "'");
        if (*x < lo || *x > hi || (hi_open && *x == hi))
            fail(line, "value " + v + " outside [" + format_double(lo) + ", " + format_double(hi) + (hi_open ? ")" : "]"));
        return *x;
    }
    std::size_t count(std::size_t line, const std::string& v, std::size_t lo = 0) const {
        auto x = parse_count(v);
        if (!x) fail(line, "expected a non-negative integer, got '" + v + "'");
        if (*x < lo) fail(line, "value " + v + " must be >= " + std::to_string(lo));
        return *x;
    }
    std::vector<double> reals(std::size_t line, const std::string& v, double lo, double hi) const {
        std::vector<double> out;
        for (const auto& item : split_list(v)) out.push_back(real(line, item, lo, hi, false));
        if (out.empty()) fail(line, "list must not be empty");
        return out;
    }

private:
    std::string source_;
};

} // namespace detail

/**
 * Parses the flat sectioned key = value format (docs/config.md). Unknown
 * sections or keys, malformed values and out-of-range values are errors
 * that name the offending line.
 */
inline ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>") {
    ExperimentConfig cfg;
    detail::Parser p(source);
    std::string raw, section;
    std::size_t line = 0;

    using Handler = std::function<void(std::size_t, const std::string&)>;
    const double inf = std::numeric_limits<double>::infinity();
    std::map<std::string, std::map<std::string, Handler>> keys;
    auto& m = keys["mdp"];
    m["builder"] = [&](std::size_t l, const std::string& v) {
        if (v == "gridworld") cfg.mdp.builder = MdpSpec::Builder::Gridworld;
        else if (v == "chain") cfg.mdp.builder = MdpSpec::Builder::Chain;
        else if (v == "file") cfg.mdp.builder = MdpSpec::Builder::File;
        else p.fail(l, "unknown builder '" + v + "' (gridworld, chain, file)");
    };
    m["width"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.width = p.count(l, v, 1); };
    m["height"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.height = p.count(l, v, 1); };
    m["goal_x"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.goal.x = p.count(l, v); };
    m["goal_y"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.goal.y = p.count(l, v); };
    m["start_x"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.start.x = p.count(l, v); };
    m["start_y"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.start.y = p.count(l, v); };
    m["step_reward"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.step_reward = p.real(l, v, 0, 1, false); };
    m["goal_reward"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.goal_reward = p.real(l, v, 0, 1, false); };
    m["slip"] = [&](std::size_t l, const std::string& v) { cfg.mdp.grid.slip_prob = p.real(l, v, 0, 1, true); };
    m["gamma"] = [&](std::size_t l, const std::string& v) {
        cfg.mdp.grid.gamma = cfg.mdp.chain_gamma = p.real(l, v, 0, 1, true);
    };
    m["n"] = [&](std::size_t l, const std::string& v) { cfg.mdp.chain_n = p.count(l, v, 2); };
    m["path"] = [&](std::size_t, const std::string& v) { cfg.mdp.path = v; };

    auto& s = keys["solver"];
    s["method"] = [&](std::size_t l, const std::string& v) {
        if (v == "value_iteration") cfg.solver.method = SolverSpec::Method::ValueIteration;
        else if (v == "q_learning") cfg.solver.method = SolverSpec::Method::QLearning;
        else p.fail(l, "unknown solver method '" + v + "' (value_iteration, q_learning)");
    };
    s["tol"] = [&](std::size_t l, const std::string& v) {
        cfg.solver.tol = p.real(l, v, 0, inf, false);
        if (cfg.solver.tol == 0.0) p.fail(l, "tol must be positive");
    };
    s["max_iters"] = [&](std::size_t l, const std::string& v) { cfg.solver.max_iters = p.count(l, v, 1); };
    s["episodes"] = [&](std::size_t l, const std::string& v) { cfg.solver.qlearning.episodes = p.count(l, v, 1); };
    s["max_steps"] = [&](std::size_t l, const std::string& v) { cfg.solver.qlearning.max_steps = p.count(l, v, 1); };
    s["explore"] = [&](std::size_t l, const std::string& v) { cfg.solver.qlearning.explore = p.real(l, v, 0, 1, false); };
    s["lr"] = [&](std::size_t l, const std::string& v) {
        if (v == "constant") cfg.solver.qlearning.lr.kind = LearningRate::Kind::Constant;
        else if (v == "visit_power") cfg.solver.qlearning.lr.kind = LearningRate::Kind::VisitPower;
        else p.fail(l, "unknown lr schedule '" + v + "' (constant, visit_power)");
    };
    s["lr_alpha0"] = [&](std::size_t l, const std::string& v) { cfg.solver.qlearning.lr.alpha0 = p.real(l, v, 0, 1, false); };
    s["lr_power"] = [&](std::size_t l, const std::string& v) { cfg.solver.qlearning.lr.power = p.real(l, v, 0, 1, false); };

    auto& c = keys["crop"];
    c["delta"] = [&](std::size_t l, const std::string& v) { cfg.crop.deltas = p.reals(l, v, 0, 1); };
    c["rho"] = [&](std::size_t l, const std::string& v) { cfg.crop.rhos = p.reals(l, v, 0, inf); };
    c["variant"] = [&](std::size_t l, const std::string& v) {
        cfg.crop.variants.clear();
        for (const auto& item : detail::split_list(v)) {
            try {
                cfg.crop.variants.push_back(parse_variant(item));
            } catch (const std::invalid_argument& e) {
                p.fail(l, e.what());
            }
        }
        if (cfg.crop.variants.empty()) p.fail(l, "list must not be empty");
    };
    c["horizon"] = [&](std::size_t l, const std::string& v) { cfg.crop.horizon = p.count(l, v, 1); };
    c["episodes"] = [&](std::size_t l, const std::string& v) { cfg.crop.episodes = p.count(l, v, 1); };

    auto& a = keys["adversary"];
    a["type"] = [&](std::size_t l, const std::string& v) {
        if (v == "bc") cfg.adversary.kind = AdversarySpec::Kind::BC;
        else if (v == "dagger") cfg.adversary.kind = AdversarySpec::Kind::DAgger;
        else p.fail(l, "unknown adversary '" + v + "' (bc, dagger)");
    };
    a["threshold"] = [&](std::size_t l, const std::string& v) {
        cfg.adversary.threshold.threshold = p.real(l, v, 0, 1, false);
        if (cfg.adversary.threshold.threshold == 0.0) p.fail(l, "threshold must be > 0");
    };
    a["batch"] = [&](std::size_t l, const std::string& v) { cfg.adversary.threshold.batch = p.count(l, v, 1); };
    a["max_samples"] = [&](std::size_t l, const std::string& v) { cfg.adversary.threshold.max_samples = p.count(l, v, 1); };
    a["trials"] = [&](std::size_t l, const std::string& v) { cfg.adversary.threshold.trials = p.count(l, v, 1); };
    a["smoothing"] = [&](std::size_t l, const std::string& v) { cfg.adversary.threshold.smoothing = p.real(l, v, 0, inf, false); };
    a["readout"] = [&](std::size_t l, const std::string& v) {
        if (v == "distribution") cfg.adversary.threshold.readout = Readout::Distribution;
        else if (v == "argmax") cfg.adversary.threshold.readout = Readout::Argmax;
        else p.fail(l, "unknown readout '" + v + "' (distribution, argmax)");
    };
    a["dagger_rounds"] = [&](std::size_t l, const std::string& v) { cfg.adversary.dagger_rounds = p.count(l, v, 1); };
    a["dagger_rollouts"] = [&](std::size_t l, const std::string& v) { cfg.adversary.dagger_rollouts = p.count(l, v, 1); };

    auto& b = keys["budget"];
    b["horizons"] = [&](std::size_t l, const std::string& v) {
        cfg.budget.horizons.clear();
        for (const auto& item : detail::split_list(v)) {
            const auto t = p.count(l, item, 1);
            if (t > kMaxEnumeratedHorizon) p.fail(l, "horizon " + item + " above the enumeration cap of " + std::to_string(kMaxEnumeratedHorizon));
            cfg.budget.horizons.push_back(t);
        }
        if (cfg.budget.horizons.empty()) p.fail(l, "list must not be empty");
    };
    b["delta"] = [&](std::size_t l, const std::string& v) {
        cfg.budget.deltas = p.reals(l, v, 0, 1);
        for (double d : cfg.budget.deltas)
            if (d == 0.0) p.fail(l, "budget deltas must be > 0");
    };
    b["mc_trials"] = [&](std::size_t l, const std::string& v) { cfg.budget.mc_trials = p.count(l, v, 1); };
    b["budgets"] = [&](std::size_t l, const std::string& v) { cfg.budget.budgets = p.reals(l, v, 0, inf); };
    b["fragment_horizon"] = [&](std::size_t l, const std::string& v) { cfg.budget.fragment_horizon = p.count(l, v, 2); };
    b["fragment_trials"] = [&](std::size_t l, const std::string& v) { cfg.budget.fragment_trials = p.count(l, v, 1); };

    auto& r = keys["run"];
    r["seed"] = [&](std::size_t l, const std::string& v) { cfg.seed = p.count(l, v); };
    r["out"] = [&](std::size_t, const std::string& v) { cfg.out_dir = v; };
    r["jobs"] = [&](std::size_t l, const std::string& v) { cfg.jobs = p.count(l, v, 1); };

    while (std::getline(in, raw)) {
        ++line;
        if (auto h = raw.find('#'); h != std::string::npos) raw.resize(h);
        const std::string text = detail::trim(raw);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') p.fail(line, "malformed section header");
            section = detail::trim(std::string_view(text).substr(1, text.size() - 2));
            if (!keys.contains(section)) p.fail(line, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) p.fail(line, "expected 'key = value'");
        if (section.empty()) p.fail(line, "key outside of any section");
        const std::string key = detail::trim(std::string_view(text).substr(0, eq));
        const std::string value = detail::trim(std::string_view(text).substr(eq + 1));
        const auto& table = keys.at(section);
        const auto it = table.find(key);
        if (it == table.end()) p.fail(line, "unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) p.fail(line, "missing value for '" + key + "'");
        it->second(line, value);
    }
    if (cfg.mdp.builder == MdpSpec::Builder::File && cfg.mdp.path.empty())
        throw ConfigError(source + ": [mdp] builder = file needs a path");
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, path);
}

} // namespace croplab::harness
