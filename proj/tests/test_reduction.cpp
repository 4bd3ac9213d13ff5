#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oscwave/problem.hpp"
#include "oscwave/reduction.hpp"
#include "oscwave/sim.hpp"

using namespace oscwave;

namespace {

SimulationTrace make_trace(double xlo, double xhi, int nx, const std::vector<double>& times,
                           const std::function<double(double, double)>& f) {
    SimulationTrace tr;
    tr.x.resize(nx);
    double dx = (xhi - xlo) / (nx - 1);
    tr.dx = dx;
    for (int i = 0; i < nx; ++i) tr.x[i] = xlo + dx * i;
    tr.t = times;
    tr.dt = times.size() > 1 ? times[1] - times[0] : 1.0;
    tr.u.resize(times.size(), std::vector<double>(nx));
    for (std::size_t j = 0; j < times.size(); ++j)
        for (int i = 0; i < nx; ++i) tr.u[j][i] = f(tr.x[i], times[j]);
    return tr;
}

}  // namespace

TEST_CASE("dirichlet weight on an interval") {
    auto w = dirichlet_weight(Domain::interval(0.0, M_PI));
    CHECK(w.lambda1 == Catch::Approx(1.0));
    CHECK(w.at(M_PI / 2) == Catch::Approx(1.0));
    CHECK(std::abs(w.at(0.0)) < 1e-12);
    CHECK(std::abs(w.at(M_PI)) < 1e-12);
    // interior positivity and the eigen relation via central differences
    double hh = 1e-4;
    for (double x : {0.3, 1.1, 2.0, 2.9}) {
        CHECK(w.at(x) > 0.0);
        double lap = (w.at(x - hh) - 2.0 * w.at(x) + w.at(x + hh)) / (hh * hh);
        CHECK(lap + w.lambda1 * w.at(x) == Catch::Approx(0.0).margin(1e-5));
    }
}

TEST_CASE("dirichlet weight on a box") {
    auto w = dirichlet_weight(Domain::box({{0.0, 1.0}, {0.0, 1.0}}));
    CHECK(w.lambda1 == Catch::Approx(2.0 * M_PI * M_PI));
    CHECK(w({0.5, 0.5}) == Catch::Approx(1.0));
    CHECK(std::abs(w({0.0, 0.5})) < 1e-12);
}

TEST_CASE("degenerate interval rejected") {
    CHECK_THROWS_AS(Domain::interval(1.0, 1.0), SpecError);
    Domain forced;
    forced.extents = {{1.0, 1.0}};
    CHECK_THROWS_AS(dirichlet_weight(forced), ReductionError);
}

TEST_CASE("manufactured dirichlet reduction") {
    // u = g(t) sin x, alpha = 3: v = (g^3/3) * integral sin^4 = (pi/8) g^3
    auto g = [](double t) { return 1.0 + 0.5 * t; };
    std::vector<double> times;
    for (int j = 0; j <= 10; ++j) times.push_back(0.1 * j);
    auto tr = make_trace(0.0, M_PI, 101, times,
                         [&](double x, double t) { return g(t) * std::sin(x); });
    auto v = reduce_trace(tr, OddRatio{3, 1}, BoundaryCondition{DirichletBc{}});
    REQUIRE(v.t.size() == times.size());
    REQUIRE(v.v.size() == v.t.size());
    REQUIRE(v.vprime.size() == v.t.size());
    for (std::size_t j = 0; j < times.size(); ++j) {
        double want = M_PI / 8.0 * std::pow(g(times[j]), 3.0);
        CHECK(v.v[j] == Catch::Approx(want).epsilon(1e-6));
    }
    for (std::size_t j = 1; j + 1 < times.size(); ++j) {
        double want = M_PI / 8.0 * 3.0 * std::pow(g(times[j]), 2.0) * 0.5;
        CHECK(v.vprime[j] == Catch::Approx(want).epsilon(5e-3));
    }
}

TEST_CASE("zero field reduces to zero") {
    auto tr = make_trace(0.0, 1.0, 11, {0.0, 0.5, 1.0}, [](double, double) { return 0.0; });
    auto v = reduce_trace(tr, OddRatio{5, 1}, BoundaryCondition{RobinBc{parse_expression("1")}});
    for (double val : v.v) CHECK(val == 0.0);
}

TEST_CASE("constant field under robin") {
    auto tr = make_trace(0.0, 1.0, 21, {0.0, 1.0, 2.0}, [](double, double) { return 1.0; });
    auto v = reduce_trace(tr, OddRatio{5, 1}, BoundaryCondition{RobinBc{parse_expression("1")}});
    for (double val : v.v) CHECK(val == Catch::Approx(0.2).epsilon(1e-12));
    for (double val : v.vprime) CHECK(val == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("sign faithfulness and positivity") {
    std::vector<double> times = {0.0, 1.0, 2.0, 3.0};
    auto tr = make_trace(0.0, 1.0, 31, times, [&](double x, double t) {
        double sgn = static_cast<int>(t) % 2 == 0 ? 1.0 : -1.0;
        return sgn * (1.0 + x);
    });
    auto v = reduce_trace(tr, OddRatio{3, 1}, BoundaryCondition{RobinBc{parse_expression("1")}});
    CHECK(v.v[0] > 0.0);
    CHECK(v.v[1] < 0.0);
    CHECK(v.v[2] > 0.0);
    CHECK(v.v[3] < 0.0);
}

TEST_CASE("simpson grid convergence") {
    // Robin, alpha = 3, u = e^x on [0,1]: v = (e^3 - 1)/9
    double want = (std::exp(3.0) - 1.0) / 9.0;
    auto err_at = [&](int nx) {
        auto tr = make_trace(0.0, 1.0, nx, {0.0, 1.0, 2.0},
                             [](double x, double) { return std::exp(x); });
        auto v = reduce_trace(tr, OddRatio{3, 1}, BoundaryCondition{RobinBc{parse_expression("1")}});
        return std::abs(v.v[0] - want);
    };
    double e1 = err_at(51), e2 = err_at(101);
    REQUIRE(e2 > 0.0);
    double ratio = e1 / e2;
    CHECK(ratio > 10.0);
    CHECK(ratio < 25.0);
}

TEST_CASE("three eighths tail for odd interval counts") {
    double want = (std::exp(3.0) - 1.0) / 9.0;
    auto tr = make_trace(0.0, 1.0, 52, {0.0, 1.0, 2.0},
                         [](double x, double) { return std::exp(x); });
    auto v = reduce_trace(tr, OddRatio{3, 1}, BoundaryCondition{RobinBc{parse_expression("1")}});
    CHECK(v.v[0] == Catch::Approx(want).epsilon(1e-6));
}

TEST_CASE("too few nodes rejected") {
    auto tr = make_trace(0.0, 1.0, 2, {0.0, 1.0}, [](double, double) { return 1.0; });
    CHECK_THROWS_AS(reduce_trace(tr, OddRatio{3, 1}, BoundaryCondition{DirichletBc{}}),
                    ReductionError);
}
