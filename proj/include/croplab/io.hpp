#pragma once

#include "croplab/mdp.hpp"
#include "croplab/solver.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace croplab {

/// Malformed input; what() carries "<source>:<line>: <message>".
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& source, std::size_t line, const std::string& msg)
        : std::runtime_error(source + ":" + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
    if (ec != std::errc{}) throw std::runtime_error("format_double failed");
    return {buf, end};
}

inline std::optional<double> parse_double(std::string_view s) {
    double x = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
    return x;
}

inline std::optional<std::size_t> parse_count(std::string_view s) {
    std::size_t x = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
    if (ec != std::errc{} || end != s.data() + s.size() || s.empty()) return std::nullopt;
    return x;
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Line reader that skips blanks and '#' comments and remembers line numbers.
class LineReader {
public:
    LineReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    bool next(std::vector<std::string_view>& tokens) {
        while (std::getline(in_, buf_)) {
            ++line_;
            if (auto h = buf_.find('#'); h != std::string::npos) buf_.resize(h);
            tokens = split_ws(buf_);
            if (!tokens.empty()) return true;
        }
        return false;
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(source_, line_, msg); }

    std::vector<std::string_view> expect(std::string_view keyword) {
        std::vector<std::string_view> t;
        if (!next(t)) fail("unexpected end of input, expected '" + std::string(keyword) + "'");
        if (t[0] != keyword) fail("expected '" + std::string(keyword) + "', got '" + std::string(t[0]) + "'");
        return t;
    }
    std::size_t count(std::string_view s) const {
        auto v = parse_count(s);
        if (!v) fail("expected a non-negative integer, got '" + std::string(s) + "'");
        return *v;
    }
    double real(std::string_view s) const {
        auto v = parse_double(s);
        if (!v) fail("expected a number, got '" + std::string(s) + "'");
        return *v;
    }
    std::pair<std::size_t, double> pair(std::string_view s) const {
        const auto colon = s.find(':');
        if (colon == std::string_view::npos) fail("expected state:probability, got '" + std::string(s) + "'");
        return {count(s.substr(0, colon)), real(s.substr(colon + 1))};
    }

private:
    std::istream& in_;
    std::string source_;
    std::string buf_;
    std::size_t line_ = 0;
};

} // namespace detail

inline constexpr std::string_view kMdpMagic = "croplab-mdp";
inline constexpr std::string_view kQTableMagic = "croplab-qtable";
inline constexpr std::string_view kVTableMagic = "croplab-vtable";

/**
 * Text form of a FiniteMdp (see docs/formats.md):
 *
 *   croplab-mdp 1
 *   states N
 *   actions M
 *   gamma G
 *   terminal s...
 *   start s:p ...
 *   state s
 *   a reward next:prob next:prob ...     (one line per action)
 */
inline void write_mdp(std::ostream& out, const FiniteMdp& mdp) {
    out << kMdpMagic << " 1\n";
    out << "states " << mdp.n_states() << "\nactions " << mdp.n_actions() << "\ngamma " << format_double(mdp.gamma())
        << "\nterminal";
    for (State s : mdp.terminal_states()) out << ' ' << s;
    out << "\nstart";
    for (State s = 0; s < mdp.n_states(); ++s)
        if (mdp.start_distribution()[s] != 0.0) out << ' ' << s << ':' << format_double(mdp.start_distribution()[s]);
    out << '\n';
    for (State s = 0; s < mdp.n_states(); ++s) {
        out << "state " << s << '\n';
        for (Action a = 0; a < mdp.n_actions(); ++a) {
            out << a << ' ' << format_double(mdp.reward(s, a));
            for (const auto& t : mdp.successors(s, a)) out << ' ' << t.next << ':' << format_double(t.prob);
            out << '\n';
        }
    }
}

inline FiniteMdp read_mdp(std::istream& in, const std::string& source = "<mdp>") {
    detail::LineReader r(in, source);
    auto t = r.expect(kMdpMagic);
    if (t.size() != 2 || t[1] != "1") r.fail("unsupported mdp format version");
    t = r.expect("states");
    if (t.size() != 2) r.fail("'states' takes one value");
    const std::size_t n = r.count(t[1]);
    t = r.expect("actions");
    if (t.size() != 2) r.fail("'actions' takes one value");
    const std::size_t m = r.count(t[1]);
    if (n == 0 || m == 0) r.fail("state and action counts must be positive");
    t = r.expect("gamma");
    if (t.size() != 2) r.fail("'gamma' takes one value");
    const double gamma = r.real(t[1]);
    t = r.expect("terminal");
    std::vector<State> terminals;
    for (std::size_t i = 1; i < t.size(); ++i) {
        terminals.push_back(r.count(t[i]));
        if (terminals.back() >= n) r.fail("terminal state out of range");
    }
    t = r.expect("start");
    std::vector<double> start(n, 0.0);
    for (std::size_t i = 1; i < t.size(); ++i) {
        auto [s, p] = r.pair(t[i]);
        if (s >= n) r.fail("start state out of range");
        start[s] += p;
    }
    std::vector<std::vector<Transition>> succ(n * m);
    std::vector<double> reward(n * m, 0.0);
    std::vector<bool> seen(n * m, false);
    for (State s = 0; s < n; ++s) {
        t = r.expect("state");
        if (t.size() != 2 || r.count(t[1]) != s) r.fail("expected 'state " + std::to_string(s) + "'");
        for (Action a = 0; a < m; ++a) {
            if (!r.next(t)) r.fail("unexpected end of input inside state " + std::to_string(s));
            if (t.size() < 3) r.fail("action line needs: action reward next:prob...");
            const Action act = r.count(t[0]);
            if (act >= m) r.fail("action out of range");
            if (seen[s * m + act]) r.fail("duplicate action line");
            seen[s * m + act] = true;
            reward[s * m + act] = r.real(t[1]);
            for (std::size_t i = 2; i < t.size(); ++i) {
                auto [next, p] = r.pair(t[i]);
                if (next >= n) r.fail("next state out of range");
                succ[s * m + act].push_back({next, p});
            }
        }
    }
    if (r.next(t)) r.fail("trailing content after the last state");
    try {
        return FiniteMdp{n, m, std::move(succ), std::move(reward), gamma, std::move(terminals), std::move(start)};
    } catch (const std::invalid_argument& e) {
        r.fail(e.what());
    }
}

inline void write_qtable(std::ostream& out, const QTable& q) {
    out << kQTableMagic << " 1\nstates " << q.n_states() << "\nactions " << q.n_actions() << '\n';
    for (State s = 0; s < q.n_states(); ++s) {
        out << s;
        for (double x : q.row(s)) out << ' ' << format_double(x);
        out << '\n';
    }
}

inline QTable read_qtable(std::istream& in, const std::string& source = "<qtable>") {
    detail::LineReader r(in, source);
    auto t = r.expect(kQTableMagic);
    if (t.size() != 2 || t[1] != "1") r.fail("unsupported qtable format version");
    t = r.expect("states");
    const std::size_t n = r.count(t.at(1));
    t = r.expect("actions");
    const std::size_t m = r.count(t.at(1));
    std::vector<double> vals;
    vals.reserve(n * m);
    for (State s = 0; s < n; ++s) {
        if (!r.next(t)) r.fail("unexpected end of input, expected row " + std::to_string(s));
        if (t.size() != m + 1 || r.count(t[0]) != s) r.fail("expected row " + std::to_string(s) + " with " + std::to_string(m) + " values");
        for (std::size_t i = 1; i <= m; ++i) vals.push_back(r.real(t[i]));
    }
    if (r.next(t)) r.fail("trailing content after the last row");
    return {n, m, std::move(vals)};
}

inline void write_vtable(std::ostream& out, const VTable& v) {
    out << kVTableMagic << " 1\nstates " << v.n_states() << '\n';
    for (State s = 0; s < v.n_states(); ++s) out << s << ' ' << format_double(v(s)) << '\n';
}

inline VTable read_vtable(std::istream& in, const std::string& source = "<vtable>") {
    detail::LineReader r(in, source);
    auto t = r.expect(kVTableMagic);
    if (t.size() != 2 || t[1] != "1") r.fail("unsupported vtable format version");
    t = r.expect("states");
    const std::size_t n = r.count(t.at(1));
    std::vector<double> vals;
    for (State s = 0; s < n; ++s) {
        if (!r.next(t)) r.fail("unexpected end of input, expected row " + std::to_string(s));
        if (t.size() != 2 || r.count(t[0]) != s) r.fail("expected 'state value' for state " + std::to_string(s));
        vals.push_back(r.real(t[1]));
    }
    if (r.next(t)) r.fail("trailing content after the last row");
    return VTable{std::move(vals)};
}

} // namespace croplab
