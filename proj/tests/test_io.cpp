#include "croplab/io.hpp"
#include "croplab/solver.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace croplab;

namespace {

template <class T, class W, class R>
T round_trip(const T& x, W write, R read) {
    std::stringstream ss;
    write(ss, x);
    return read(ss, "<test>");
}

std::size_t error_line(const std::string& text) {
    std::istringstream in(text);
    try {
        read_mdp(in, "bad.mdp");
    } catch (const ParseError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("bad.mdp:", 0), 0u) << e.what();
        return e.line();
    }
    ADD_FAILURE() << "no error for:\n" << text;
    return 0;
}

const char* kTwoState = "croplab-mdp 1\n"
                        "states 2\n"
                        "actions 1\n"
                        "gamma 0.5\n"
                        "terminal 1\n"
                        "start 0:1\n"
                        "state 0\n"
                        "0 1 1:1\n"
                        "state 1\n"
                        "0 0 1:1\n";

} // namespace

TEST(FormatDouble, ShortestRoundTrip) {
    for (double x : {0.0, 0.1, 1.0 / 3.0, -2.5e-17, 1e300, 0.9}) EXPECT_EQ(*parse_double(format_double(x)), x);
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_FALSE(parse_double("abc"));
    EXPECT_FALSE(parse_double("1.0x"));
    EXPECT_FALSE(parse_count("-1"));
    EXPECT_EQ(*parse_count("42"), 42u);
}

TEST(MdpFormat, RoundTripsGeneratedModels) {
    for (const auto& mdp : {canonical_gridworld(), build_chain(7, 0.8), build_random_mdp(9, 3, 4, 0.95, 3)}) {
        const auto back = round_trip(mdp, [](std::ostream& o, const FiniteMdp& m) { write_mdp(o, m); },
                                     [](std::istream& i, const std::string& s) { return read_mdp(i, s); });
        EXPECT_EQ(back, mdp);
    }
}

TEST(MdpFormat, ReadsHandWrittenFileWithComments) {
    std::istringstream in(std::string("# two states\n") + kTwoState + "  # trailing\n");
    const auto mdp = read_mdp(in);
    EXPECT_EQ(mdp.n_states(), 2u);
    EXPECT_EQ(mdp.reward(0, 0), 1.0);
    EXPECT_TRUE(mdp.is_terminal(1));
    EXPECT_EQ(value_iteration(mdp).v(0), 1.0);
}

TEST(MdpFormat, ErrorsNameTheLine) {
    EXPECT_EQ(error_line("croplab-mdp 2\n"), 1u);
    EXPECT_EQ(error_line("croplab-mdp 1\nstates x\n"), 2u);
    EXPECT_EQ(error_line("croplab-mdp 1\nstates 2\nactions 1\ngamma 0.5\nterminal 5\n"), 5u);
    std::string bad_prob = kTwoState;
    bad_prob.replace(bad_prob.find("0 1 1:1"), 7, "0 1 1:0.5");
    EXPECT_GT(error_line(bad_prob), 0u);
    std::string out_of_range = kTwoState;
    out_of_range.replace(out_of_range.find("0 1 1:1"), 7, "0 1 3:1");
    EXPECT_EQ(error_line(out_of_range), 8u);
    EXPECT_EQ(error_line(std::string(kTwoState) + "state 2\n"), 11u);
}

TEST(TableFormat, RoundTrips) {
    const auto vi = value_iteration(canonical_gridworld());
    const auto q = round_trip(vi.q, [](std::ostream& o, const QTable& t) { write_qtable(o, t); },
                              [](std::istream& i, const std::string& s) { return read_qtable(i, s); });
    EXPECT_EQ(q, vi.q);
    const auto v = round_trip(vi.v, [](std::ostream& o, const VTable& t) { write_vtable(o, t); },
                              [](std::istream& i, const std::string& s) { return read_vtable(i, s); });
    EXPECT_EQ(v, vi.v);
}

TEST(TableFormat, RejectsMalformedRows) {
    std::istringstream short_row("croplab-qtable 1\nstates 1\nactions 2\n0 1.0\n");
    EXPECT_THROW(read_qtable(short_row), ParseError);
    std::istringstream wrong_index("croplab-vtable 1\nstates 2\n0 1\n0 2\n");
    EXPECT_THROW(read_vtable(wrong_index), ParseError);
    std::istringstream wrong_magic("croplab-mdp 1\n");
    EXPECT_THROW(read_vtable(wrong_magic), ParseError);
}
