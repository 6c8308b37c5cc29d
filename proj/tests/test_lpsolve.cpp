#include <doctest.h>

#include <random>
#include <sstream>

#include "support/oracles.hpp"
#include "voltreg/lpsolve.hpp"

using namespace voltreg::lp;
using Builder = ProgramBuilder;

TEST_CASE("single bounded variable") {
    Builder b;
    const int x = b.add_variable(1.0, 3.0, Builder::inf);
    const auto sol = solve_lp(b.build());
    REQUIRE(sol.status == Status::Optimal);
    CHECK(sol.x(x) == doctest::Approx(3.0));
}

TEST_CASE("textbook programs") {
    SUBCASE("unit simplex corner") {
        Builder b;
        const int x = b.add_variable(-1.0, 0.0, Builder::inf);
        const int y = b.add_variable(-1.0, 0.0, Builder::inf);
        b.add_less_equal({{x, 1.0}, {y, 1.0}}, 1.0);
        const auto sol = solve_lp(b.build());
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(-1.0));
    }
    SUBCASE("three constraints") {
        Builder b;
        const int x = b.add_variable(-3.0, 0.0, Builder::inf);
        const int y = b.add_variable(-5.0, 0.0, Builder::inf);
        b.add_less_equal({{x, 1.0}}, 4.0);
        b.add_less_equal({{y, 2.0}}, 12.0);
        b.add_less_equal({{x, 3.0}, {y, 2.0}}, 18.0);
        const auto sol = solve_lp(b.build());
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(-36.0));
        CHECK(sol.x(x) == doctest::Approx(2.0));
        CHECK(sol.x(y) == doctest::Approx(6.0));
    }
    SUBCASE("free variable through an equality") {
        Builder b;
        const int x = b.add_variable(1.0, -Builder::inf, Builder::inf);
        const int y = b.add_variable(1.0, 0.0, Builder::inf);
        b.add_equality({{x, 1.0}, {y, -1.0}}, 2.0);
        const auto sol = solve_lp(b.build());
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(2.0));
        CHECK(sol.x(x) == doctest::Approx(2.0));
    }
    SUBCASE("negative box and offset") {
        Builder b;
        const int x = b.add_variable(-1.0, -5.0, -1.0);
        b.add_offset(10.0);
        const auto sol = solve_lp(b.build());
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.x(x) == doctest::Approx(-1.0));
        CHECK(sol.objective == doctest::Approx(11.0));
    }
    SUBCASE("infeasible") {
        Builder b;
        const int x = b.add_variable(1.0, 0.0, Builder::inf);
        const int y = b.add_variable(1.0, 0.0, Builder::inf);
        b.add_equality({{x, 1.0}, {y, 1.0}}, 1.0);
        b.add_less_equal({{x, -1.0}, {y, -1.0}}, -2.0);
        CHECK(solve_lp(b.build()).status == Status::Infeasible);
    }
    SUBCASE("unbounded") {
        Builder b;
        const int x = b.add_variable(-1.0, 0.0, Builder::inf);
        const int y = b.add_variable(0.0, 0.0, Builder::inf);
        b.add_less_equal({{x, 1.0}, {y, -1.0}}, 1.0);
        CHECK(solve_lp(b.build()).status == Status::Unbounded);
    }
}

TEST_CASE("degenerate cycling example terminates") {
    Builder b;
    const int x4 = b.add_variable(-0.75, 0.0, Builder::inf);
    const int x5 = b.add_variable(150.0, 0.0, Builder::inf);
    const int x6 = b.add_variable(-0.02, 0.0, Builder::inf);
    const int x7 = b.add_variable(6.0, 0.0, Builder::inf);
    b.add_less_equal({{x4, 0.25}, {x5, -60.0}, {x6, -0.04}, {x7, 9.0}}, 0.0);
    b.add_less_equal({{x4, 0.5}, {x5, -90.0}, {x6, -0.02}, {x7, 3.0}}, 0.0);
    b.add_less_equal({{x6, 1.0}}, 1.0);
    LpOptions opt;
    opt.stall_pivots = 0;
    for (int stall : {0, 50}) {
        opt.stall_pivots = stall;
        const auto sol = solve_lp(b.build(), opt);
        REQUIRE(sol.status == Status::Optimal);
        CHECK(sol.objective == doctest::Approx(-0.05));
    }
}

TEST_CASE("random programs match vertex enumeration") {
    std::mt19937_64 rng(1234);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 4; ++trial) {
        const int n = 20, m = 5;
        Eigen::MatrixXd a(m, n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = u(rng);
        Eigen::VectorXd x0(n);
        for (int j = 0; j < n; ++j) x0(j) = 1.0 + u(rng);
        const Eigen::VectorXd b = a * x0;
        Eigen::VectorXd c(n);
        for (int j = 0; j < n; ++j) c(j) = u(rng);
        const double cap = 3.0 * x0.sum();

        Builder pb;
        for (int j = 0; j < n; ++j) pb.add_variable(c(j), 0.0, Builder::inf);
        for (int i = 0; i < m; ++i) {
            std::vector<std::pair<int, double>> row;
            for (int j = 0; j < n; ++j) row.emplace_back(j, a(i, j));
            pb.add_equality(row, b(i));
        }
        std::vector<std::pair<int, double>> total;
        for (int j = 0; j < n; ++j) total.emplace_back(j, 1.0);
        pb.add_less_equal(total, cap);
        const auto prog = pb.build();
        const auto sol = solve_lp(prog);
        REQUIRE(sol.status == Status::Optimal);
        CHECK(max_violation(prog, sol.x) < 1e-9);

        Eigen::MatrixXd as(m + 1, n + 1);
        as.setZero();
        as.topLeftCorner(m, n) = a;
        as.row(m).head(n).setOnes();
        as(m, n) = 1.0;
        Eigen::VectorXd bs(m + 1);
        bs << b, cap;
        Eigen::VectorXd cs = Eigen::VectorXd::Zero(n + 1);
        cs.head(n) = c;
        CHECK(std::abs(sol.objective - oracle::vertex_enumeration(as, bs, cs)) < 1e-8);
    }
}

TEST_CASE("milp without integers equals the relaxation") {
    Builder b;
    const int x = b.add_variable(-3.0, 0.0, Builder::inf);
    const int y = b.add_variable(-5.0, 0.0, Builder::inf);
    b.add_less_equal({{x, 1.0}}, 4.0);
    b.add_less_equal({{x, 3.0}, {y, 2.0}}, 18.0);
    b.add_less_equal({{y, 2.0}}, 12.0);
    const auto lp = solve_lp(b.build());
    const auto mip = solve_milp(b.build());
    CHECK(mip.status == Status::Optimal);
    CHECK(mip.objective == lp.objective);
    CHECK(mip.x == lp.x);
}

TEST_CASE("integer absolute value epigraph") {
    Builder b;
    const int tau = b.add_variable(0.0, -16.0, 16.0, true, "tau");
    const int t = b.add_variable(1.0, 0.0, Builder::inf, false, "t");
    b.add_less_equal({{tau, 1.0}, {t, -1.0}}, 2.4);
    b.add_less_equal({{tau, -1.0}, {t, -1.0}}, -2.4);
    const auto sol = solve_milp(b.build());
    REQUIRE(sol.status == Status::Optimal);
    CHECK(sol.x(tau) == 2.0);

    double best = 1e9;
    int arg = 0;
    for (int v = -16; v <= 16; ++v) {
        if (std::abs(v - 2.4) < best) best = std::abs(v - 2.4), arg = v;
    }
    CHECK(arg == 2);
    CHECK(sol.objective == doctest::Approx(best));
}

TEST_CASE("small knapsacks match enumeration") {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> w(1, 9), v(1, 20);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 6;
        std::vector<int> weight(n), value(n);
        for (int j = 0; j < n; ++j) weight[j] = w(rng), value[j] = v(rng);
        const int cap = 15;
        Builder b;
        std::vector<std::pair<int, double>> row;
        for (int j = 0; j < n; ++j) row.emplace_back(b.add_variable(-value[j], 0.0, 2.0, true), weight[j]);
        b.add_less_equal(row, cap);
        const auto sol = solve_milp(b.build());
        REQUIRE(sol.status == Status::Optimal);

        int best = 0;
        for (int code = 0; code < 729; ++code) {
            int c = code, wt = 0, val = 0;
            for (int j = 0; j < n; ++j, c /= 3) wt += (c % 3) * weight[j], val += (c % 3) * value[j];
            if (wt <= cap) best = std::max(best, val);
        }
        CHECK(sol.objective == doctest::Approx(-best));
    }
}

TEST_CASE("node limit and validation") {
    Builder b;
    std::vector<std::pair<int, double>> row;
    for (int j = 0; j < 12; ++j) row.emplace_back(b.add_variable(-1.0, 0.0, 1.0, true), 2.0);
    b.add_less_equal(row, 11.0);
    MilpOptions opt;
    opt.node_limit = 1;
    const auto sol = solve_milp(b.build(), opt);
    CHECK(sol.status == Status::NodeLimit);

    auto bad = b.build();
    bad.lower(0) = 2.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    Builder unbounded_int;
    unbounded_int.add_variable(1.0, 0.0, Builder::inf, true);
    CHECK_THROWS_AS(solve_milp(unbounded_int.build()), std::invalid_argument);
}

TEST_CASE("extended precision instantiation") {
    Program<long double> p;
    p.objective.resize(2);
    p.objective << -1.0L, -2.0L;
    p.lower = Program<long double>::VectorS::Zero(2);
    p.upper = Program<long double>::VectorS::Constant(2, 10.0L);
    p.a_ineq.resize(1, 2);
    p.a_ineq.insert(0, 0) = 1.0L;
    p.a_ineq.insert(0, 1) = 1.0L;
    p.b_ineq.resize(1);
    p.b_ineq << 3.5L;
    p.a_eq.resize(0, 2);
    p.b_eq.resize(0);
    p.integers = {1};
    const auto sol = solve_milp(p);
    REQUIRE(sol.status == Status::Optimal);
    CHECK(static_cast<double>(sol.objective) == doctest::Approx(-6.5));
    CHECK(static_cast<double>(sol.x(1)) == 3.0);
    CHECK(static_cast<double>(sol.x(0)) == doctest::Approx(0.5));
}

TEST_CASE("program dump") {
    Builder b;
    const int x = b.add_variable(1.5, 0.0, 4.0, true, "x");
    const int y = b.add_variable(-1.0, -Builder::inf, 2.0, false, "y");
    b.add_equality({{x, 1.0}, {y, 1.0}}, 3.0);
    std::ostringstream out;
    write_program(out, b.build(), b.names());
    const std::string text = out.str();
    CHECK(text.rfind("# voltreg-lp 1", 0) == 0);
    CHECK(text.find("vars 2 eq 1 le 0") != std::string::npos);
    CHECK(text.find(" x\n") != std::string::npos);
    CHECK(text.find("eq 0 3") != std::string::npos);
}
