#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <vector>

#include "oscwave/problem.hpp"
#include "oscwave/reduction.hpp"
#include "oscwave/sim.hpp"

using namespace oscwave;

namespace {

// Frozen regression anchor: first sign change of the converged waveform
// for the built-in first example reduced on [1, 60], dt = 0.01.
constexpr double kReducedFirstCrossing = 4.0152;

ProblemSpec linear_spec(double xhi) {
    ProblemSpec s;
    s.alpha = OddRatio{1, 1};
    s.r = parse_expression("1");
    s.p = parse_expression("0");
    s.p_hat = parse_expression("0");
    s.q = parse_expression("1");
    s.a = parse_expression("1");
    s.family_count = 0;
    s.m = parse_expression("t");
    s.eta = parse_expression("t");
    s.f_form = PowerLawF{parse_expression("0")};
    s.bc = DirichletBc{};
    s.domain = Domain::interval(0.0, xhi);
    s.t0 = 1.0;
    return s;
}

ProblemSpec cubic_neumann_spec(const char* p_expr) {
    ProblemSpec s;
    s.alpha = OddRatio{3, 1};
    s.r = parse_expression("1");
    s.p = parse_expression(p_expr);
    s.p_hat = parse_expression("1");
    s.q = parse_expression("1");
    s.a = parse_expression("1");
    s.family_count = 0;
    s.m = parse_expression("t");
    s.eta = parse_expression("t");
    s.f_form = PowerLawF{parse_expression("1")};
    s.bc = RobinBc{parse_expression("0")};
    s.domain = Domain::interval(0.0, M_PI);
    s.t0 = 1.0;
    return s;
}

}  // namespace

TEST_CASE("sign change detection") {
    SECTION("interpolated crossing") {
        std::vector<double> t = {0.0, 1.0, 2.0};
        std::vector<double> v = {2.0, 1.0, -1.0};
        auto rep = detect_sign_changes(t, v);
        REQUIRE(rep.count == 1);
        CHECK(rep.crossings[0] == Catch::Approx(1.5));
        CHECK(rep.first.value() == Catch::Approx(1.5));
    }
    SECTION("noise inside the zero band is not a crossing") {
        std::vector<double> t = {0.0, 1.0, 2.0};
        std::vector<double> v = {1.0, -1e-12, 1.0};
        CHECK(detect_sign_changes(t, v).count == 0);
        CHECK(detect_sign_changes(t, {1.0, -0.4, 1.0}, 0.5).count == 0);
        CHECK(detect_sign_changes(t, {1.0, -0.4, 1.0}).count == 2);
    }
    SECTION("invariant under positive scaling") {
        std::vector<double> t, v;
        for (int i = 0; i <= 200; ++i) {
            t.push_back(0.05 * i);
            v.push_back(std::cos(t.back()) + 0.1);
        }
        auto a = detect_sign_changes(t, v);
        std::vector<double> v2 = v;
        for (auto& y : v2) y *= 1024.0;
        auto b = detect_sign_changes(t, v2);
        REQUIRE(a.count == b.count);
        REQUIRE(a.count >= 2);
        for (std::size_t i = 0; i < a.count; ++i)
            CHECK(a.crossings[i] == Catch::Approx(b.crossings[i]));
        for (std::size_t i = 1; i < a.count; ++i) CHECK(a.crossings[i] > a.crossings[i - 1]);
    }
    SECTION("length mismatch") {
        CHECK_THROWS_AS(detect_sign_changes({0.0, 1.0}, {1.0}), SimError);
    }
}

TEST_CASE("harmonic oscillator without deviation") {
    auto zero = [](double) { return 0.0; };
    auto one = [](double) { return 1.0; };
    auto traj = simulate_reduced(zero, one, parse_expression("t"), 0.0, 10.0, 1.0, 0.0, 1e-3);
    REQUIRE(traj.relax.method == "direct");
    REQUIRE(traj.t.size() == traj.v.size());
    REQUIRE(traj.t.size() == traj.vprime.size());
    for (std::size_t i = 1; i < traj.t.size(); ++i) CHECK(traj.t[i] > traj.t[i - 1]);
    double err = 0.0, errp = 0.0;
    for (std::size_t i = 0; i < traj.t.size(); ++i) {
        err = std::max(err, std::abs(traj.v[i] - std::cos(traj.t[i])));
        errp = std::max(errp, std::abs(traj.vprime[i] + std::sin(traj.t[i])));
    }
    CHECK(err < 1e-9);
    CHECK(errp < 1e-8);
    auto rep = detect_sign_changes(traj.t, traj.v);
    REQUIRE(rep.count >= 3);
    CHECK(rep.first.value() == Catch::Approx(M_PI / 2).margin(1e-3));
}

TEST_CASE("zero forcing keeps the initial value") {
    auto zero = [](double) { return 0.0; };
    SECTION("local argument") {
        auto traj = simulate_reduced(zero, zero, parse_expression("t"), 0.0, 5.0, 1.0, 0.0, 0.01);
        for (double v : traj.v) CHECK(v == Catch::Approx(1.0).margin(1e-13));
        CHECK(detect_sign_changes(traj.t, traj.v).count == 0);
    }
    SECTION("advanced argument converges in one sweep") {
        auto traj =
            simulate_reduced(zero, zero, parse_expression("2*t"), 1.0, 5.0, 1.0, 0.0, 0.01);
        CHECK(traj.relax.method == "picard");
        CHECK(traj.relax.converged);
        CHECK(traj.relax.iterations == 1);
        for (double v : traj.v) CHECK(v == Catch::Approx(1.0).margin(1e-13));
    }
}

TEST_CASE("rk4 order on the harmonic case") {
    auto zero = [](double) { return 0.0; };
    auto one = [](double) { return 1.0; };
    auto err_at = [&](double dt) {
        auto traj = simulate_reduced(zero, one, parse_expression("t"), 0.0, 1.0, 1.0, 0.0, dt);
        double e = 0.0;
        for (std::size_t i = 0; i < traj.t.size(); ++i)
            e = std::max(e, std::abs(traj.v[i] - std::cos(traj.t[i])));
        return e;
    };
    double ratio = err_at(0.02) / err_at(0.01);
    CHECK(ratio > 13.0);
    CHECK(ratio < 20.0);
}

TEST_CASE("first example reduced equation on [1,60]") {
    auto p1 = [](double t) { return 1.0 / t; };
    auto Q = [](double t) { return 5.0 / t; };
    auto m = parse_expression("2*t");

    auto traj = simulate_reduced(p1, Q, m, 1.0, 60.0, 1.0, 0.0, 0.01);
    REQUIRE(traj.relax.converged);
    CHECK(traj.relax.method == "damped");
    CHECK(traj.relax.restart_iteration >= 1);
    CHECK(traj.relax.final_delta <= 1e-6);

    SECTION("oscillation and the frozen anchor") {
        auto rep = detect_sign_changes(traj.t, traj.v);
        REQUIRE(rep.count >= 1);
        CHECK(rep.first.value() == Catch::Approx(kReducedFirstCrossing).margin(5e-3));
    }
    SECTION("crossing stable under dt halving") {
        auto fine = simulate_reduced(p1, Q, m, 1.0, 60.0, 1.0, 0.0, 0.005);
        REQUIRE(fine.relax.converged);
        auto c1 = detect_sign_changes(traj.t, traj.v).first.value();
        auto c2 = detect_sign_changes(fine.t, fine.v).first.value();
        CHECK(std::abs(c1 - c2) / std::abs(c1) < 0.01);
    }
    SECTION("damped deltas decrease monotonically") {
        const auto& d = traj.relax.deltas;
        std::size_t start = static_cast<std::size_t>(traj.relax.restart_iteration);
        REQUIRE(d.size() > start + 10);
        for (std::size_t i = start + 1; i < d.size(); ++i)
            CHECK(d[i] <= d[i - 1] * (1.0 + 1e-12));
    }
    SECTION("converged trajectory satisfies the equation") {
        auto rep = reduced_residual(traj, p1, Q, m);
        REQUIRE(rep.points > 1000);
        CHECK(rep.sup_residual <= 1e-4 * rep.sup_v2);
    }
}

TEST_CASE("pde linear sanity") {
    auto spec = linear_spec(M_PI);
    auto trace = simulate_pde(spec, 201, 1e-3, 0.0, M_PI, {},
                              [](double x) { return std::sin(x); }, [](double) { return 0.0; });
    REQUIRE(trace.relax.method == "direct");
    REQUIRE(trace.relax.converged);
    CHECK(trace.formulation == "substitution");
    CHECK(trace.regularization_eps == 0.0);
    const auto& last = trace.u.back();
    double err = 0.0;
    for (std::size_t i = 0; i < trace.x.size(); ++i)
        err = std::max(err, std::abs(last[i] - std::sin(trace.x[i]) * std::cos(M_PI)));
    CHECK(err <= 1e-3);
}

TEST_CASE("pde residual shrinks under refinement") {
    auto spec = linear_spec(M_PI);
    auto run = [&](int nx, double dt) {
        auto trace = simulate_pde(spec, nx, dt, 0.0, 1.0, {},
                                  [](double x) { return std::sin(x); },
                                  [](double) { return 0.0; });
        return pde_residual(trace, spec);
    };
    auto coarse = run(51, M_PI / 200.0);
    auto fine = run(101, M_PI / 400.0);
    REQUIRE(coarse.points > 0);
    REQUIRE(fine.points > 0);
    CHECK(coarse.sup_residual / fine.sup_residual > 3.0);
}

TEST_CASE("zero field is a fixed point") {
    auto spec = builtin_example("3.1");
    auto trace = simulate_pde(spec, 41, 0.01, 1.0, 2.0, {}, [](double) { return 0.0; },
                              [](double) { return 0.0; });
    REQUIRE(trace.relax.converged);
    for (const auto& row : trace.u)
        for (double u : row) CHECK(std::abs(u) <= 1e-14);
}

TEST_CASE("substituted and regularized forms agree") {
    auto spec = cubic_neumann_spec("2");
    RelaxOptions opt;
    auto a = simulate_pde(spec, 101, 1e-3, 0.0, 0.4, opt, {}, {}, Formulation::Auto);
    auto b = simulate_pde(spec, 101, 1e-3, 0.0, 0.4, opt, {}, {}, Formulation::Regularized);
    REQUIRE(a.formulation == "substitution");
    REQUIRE(b.formulation == "regularized");
    CHECK(b.regularization_eps > 0.0);
    double min_u = 1e300, diff = 0.0;
    for (std::size_t j = 0; j < a.u.size(); ++j)
        for (std::size_t i = 0; i < a.u[j].size(); ++i) {
            min_u = std::min(min_u, std::abs(a.u[j][i]));
            diff = std::max(diff, std::abs(a.u[j][i] - b.u[j][i]));
        }
    REQUIRE(min_u >= 0.1);
    CHECK(diff <= 1e-3);
}

TEST_CASE("forced substitution requires the exact damping match") {
    auto spec = cubic_neumann_spec("1");
    CHECK_THROWS_AS(simulate_pde(spec, 21, 0.01, 0.0, 0.1, {}, {}, {}, Formulation::Substitution),
                    SimError);
}

TEST_CASE("dirichlet walls override incompatible initial data") {
    auto spec = linear_spec(M_PI);
    auto trace = simulate_pde(spec, 21, 1e-3, 1.0, 1.1, {}, [](double) { return 1.0; });
    CHECK(trace.closure_note.find("Dirichlet walls override") != std::string::npos);
    CHECK(trace.u.front().front() == 0.0);
    CHECK(trace.u.front().back() == 0.0);
}

// Frozen regression anchor for the second built-in example on [1, 6],
// nx = 101 (dt = 1e-3 against dt = 5e-4 agrees to 5e-5 relative).  The
// deviated Laplacian family dominates the local term (their ratio runs
// from 9 to 40 across the window), so waveform sweeps expand instead of
// contracting and no iterate can be certified as a fixed point; the
// solver flags that and hands back its best-residual iterate, which is
// deterministic and refinement-stable.
constexpr double kPdeFirstCrossing = 1.1615;

TEST_CASE("second example pde run oscillates") {
    auto spec = builtin_example("3.2");
    RelaxOptions opt;
    opt.max_iter = 40;
    auto run = [&](double dt) {
        return simulate_pde(spec, 101, dt, 1.0, 6.0, opt, {}, {}, Formulation::Auto, 1e-2);
    };
    auto trace = run(1e-3);
    CHECK(trace.formulation == "regularized");
    CHECK(trace.regularization_eps == Catch::Approx(1e-2));
    CHECK(trace.relax.method == "anderson-damped");
    CHECK_FALSE(trace.relax.converged);
    CHECK(trace.relax.note.find("returning the iteration") != std::string::npos);
    REQUIRE(trace.t.back() == Catch::Approx(6.0));
    auto v = reduce_trace(trace, spec.alpha, spec.bc);
    auto rep = detect_sign_changes(v.t, v.v);
    REQUIRE(rep.count >= 1);
    CHECK(rep.first.value() == Catch::Approx(kPdeFirstCrossing).epsilon(5e-3));
    auto fine = run(5e-4);
    auto vf = reduce_trace(fine, spec.alpha, spec.bc);
    auto repf = detect_sign_changes(vf.t, vf.v);
    REQUIRE(repf.count >= 1);
    CHECK(std::abs(repf.first.value() - rep.first.value()) / rep.first.value() < 0.01);
}

TEST_CASE("blow-up aborts with a partial trace") {
    ProblemSpec s;
    s.alpha = OddRatio{3, 1};
    s.r = parse_expression("1");
    s.p = parse_expression("2");
    s.p_hat = parse_expression("0");
    s.q = parse_expression("1");
    s.a = parse_expression("1");
    s.family_count = 0;
    s.m = parse_expression("t");
    s.eta = parse_expression("t");
    s.f_form = PowerLawF{parse_expression("-10000")};
    s.bc = RobinBc{parse_expression("0")};
    s.domain = Domain::interval(0.0, M_PI);
    s.t0 = 1.0;
    auto trace = simulate_pde(s, 41, 1e-3, 0.0, 2.0);
    REQUIRE_FALSE(trace.relax.converged);
    CHECK(trace.relax.note.find("blow-up") != std::string::npos);
    CHECK(trace.closure_note.find("abort") != std::string::npos);
    REQUIRE(trace.t.size() < 2001);
    REQUIRE(trace.u.size() == trace.t.size());
    for (const auto& row : trace.u)
        for (double u : row) REQUIRE(std::isfinite(u));
}

TEST_CASE("cfl diagnostic recorded") {
    auto spec = linear_spec(M_PI);
    spec.a = parse_expression("100");
    auto trace = simulate_pde(spec, 101, 0.05, 0.0, 0.1, {},
                              [](double x) { return 0.01 * std::sin(x); },
                              [](double) { return 0.0; });
    CHECK(trace.cfl_dt_limit > 0.0);
    CHECK(trace.dt > trace.cfl_dt_limit);
    CHECK(trace.closure_note.find("CFL") != std::string::npos);
}
