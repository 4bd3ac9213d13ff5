#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oscwave/quad.hpp"

using namespace oscwave;

TEST_CASE("proper integrals", "[quad]") {
    SECTION("ln 2") {
        auto q = integrate([](double s) { return 1.0 / s; }, 1.0, 2.0);
        CHECK(q.converged);
        CHECK(q.value == Catch::Approx(std::log(2.0)).epsilon(1e-9));
    }
    SECTION("zero integrand") {
        auto q = integrate([](double) { return 0.0; }, 0.0, 1.0);
        CHECK(q.value == 0.0);
        CHECK(q.converged);
    }
    SECTION("sin over a half period") {
        auto q = integrate([](double s) { return std::sin(s); }, 0.0, M_PI);
        CHECK(q.value == Catch::Approx(2.0).epsilon(1e-9));
    }
    SECTION("orientation") {
        auto q = integrate([](double s) { return s; }, 2.0, 0.0);
        CHECK(q.value == Catch::Approx(-2.0).epsilon(1e-9));
    }
    SECTION("narrow spike needs adaptivity") {
        auto f = [](double s) { return std::exp(-1e4 * (s - 0.5) * (s - 0.5)); };
        auto q = integrate(f, 0.0, 1.0, 1e-10);
        CHECK(q.value == Catch::Approx(std::sqrt(M_PI) / 100.0).epsilon(1e-7));
    }
    SECTION("non-finite integrand reported") {
        CHECK_THROWS_AS(
            integrate([](double s) { return s > 0.5 ? std::nan("") : 1.0; }, 0.0, 1.0),
            QuadError);
    }
    SECTION("endpoint singularity flagged as unconverged") {
        auto q = integrate([](double s) { return 1.0 / (s - 0.5); }, 0.5, 1.0);
        CHECK(!q.converged);
    }
}

TEST_CASE("interval additivity and linearity", "[quad]") {
    std::mt19937 rng(7u);
    std::uniform_real_distribution<double> pick(0.2, 5.0);
    auto f = [](double s) { return std::sin(3.0 * s) + s * s / 10.0; };
    for (int i = 0; i < 10; ++i) {
        double a = pick(rng), c = pick(rng);
        if (a > c) std::swap(a, c);
        double b = 0.5 * (a + c);
        double whole = integrate(f, a, c).value;
        double split = integrate(f, a, b).value + integrate(f, b, c).value;
        CHECK(whole == Catch::Approx(split).margin(1e-8));
    }
    double one = integrate(f, 1.0, 4.0).value;
    double scaled = integrate([&](double s) { return 3.0 * f(s); }, 1.0, 4.0).value;
    CHECK(scaled == Catch::Approx(3.0 * one).epsilon(1e-9));
}

TEST_CASE("classification of standard tails", "[quad][classify]") {
    SECTION("1/s diverges logarithmically") {
        auto v = classify_improper([](double s) { return 1.0 / s; }, 1.0);
        REQUIRE(v.kind == DivergenceVerdict::Kind::Divergent);
        CHECK(v.direction == 1);
        CHECK(v.growth == Growth::Log);
        CHECK(v.fit_r2 >= 0.99);
    }
    SECTION("1/s^2 converges to 1") {
        auto v = classify_improper([](double s) { return 1.0 / (s * s); }, 1.0);
        REQUIRE(v.kind == DivergenceVerdict::Kind::Convergent);
        CHECK(v.limit_estimate == Catch::Approx(1.0).epsilon(1e-4));
    }
    SECTION("constant 5 diverges like T") {
        auto v = classify_improper([](double) { return 5.0; }, 1.0);
        REQUIRE(v.kind == DivergenceVerdict::Kind::Divergent);
        CHECK(v.growth == Growth::Power);
        CHECK(v.exponent == Catch::Approx(1.0).margin(0.1));
    }
    SECTION("negative constant diverges to minus infinity") {
        auto v = classify_improper([](double) { return -2.0; }, 1.0);
        REQUIRE(v.kind == DivergenceVerdict::Kind::Divergent);
        CHECK(v.direction == -1);
        CHECK(!v.divergent_to_plus_inf());
    }
    SECTION("exponential growth recognized") {
        auto v = classify_improper([](double s) { return std::exp(s / 3.0); }, 1.0);
        REQUIRE(v.kind == DivergenceVerdict::Kind::Divergent);
        CHECK(v.growth == Growth::Exp);
    }
    SECTION("sign-changing tail is inconclusive") {
        auto v = classify_improper([](double s) { return std::sin(s); }, 1.0);
        CHECK(v.kind == DivergenceVerdict::Kind::Inconclusive);
        CHECK(v.tail_sign_change);
    }
    SECTION("zero integrand converges to zero") {
        auto v = classify_improper([](double) { return 0.0; }, 1.0);
        REQUIRE(v.kind == DivergenceVerdict::Kind::Convergent);
        CHECK(v.limit_estimate == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("power family oracle", "[quad][classify]") {
    // f = s^p on [1, inf): divergent for p >= -1, else convergent to 1/(-p-1).
    const double powers[] = {-3.0, -2.0, -1.5, -1.0, -0.5, 0.0, 1.0, 2.0};
    for (double p : powers) {
        INFO("p = " << p);
        auto v = classify_improper([p](double s) { return std::pow(s, p); }, 1.0);
        if (p >= -1.0) {
            REQUIRE(v.kind == DivergenceVerdict::Kind::Divergent);
            CHECK(v.direction == 1);
            if (p == -1.0) {
                CHECK(v.growth == Growth::Log);
            } else {
                CHECK(v.growth == Growth::Power);
                CHECK(v.exponent == Catch::Approx(p + 1.0).margin(0.15));
            }
        } else {
            REQUIRE(v.kind == DivergenceVerdict::Kind::Convergent);
            double want = 1.0 / (-p - 1.0);
            CHECK(v.limit_estimate == Catch::Approx(want).epsilon(1e-4));
        }
    }
}

TEST_CASE("probe tables are recorded", "[quad][classify]") {
    auto v = classify_improper([](double s) { return 1.0 / s; }, 1.0);
    REQUIRE(v.probes.size() >= 10);
    for (const auto& p : v.probes) {
        INFO("T = " << p.T);
        CHECK(p.integral == Catch::Approx(std::log(p.T)).epsilon(1e-8));
    }
}

TEST_CASE("integrate_tail", "[quad]") {
    SECTION("1/s^2 from 2") {
        auto r = integrate_tail([](double s) { return 1.0 / (s * s); }, 2.0);
        REQUIRE(r.verdict.kind == DivergenceVerdict::Kind::Convergent);
        CHECK(r.value == Catch::Approx(0.5).epsilon(1e-4));
    }
    SECTION("5/s from 1 diverges") {
        auto r = integrate_tail([](double s) { return 5.0 / s; }, 1.0);
        REQUIRE(r.verdict.kind == DivergenceVerdict::Kind::Divergent);
        CHECK(std::isinf(r.value));
        CHECK(r.value > 0);
    }
    SECTION("identically zero") {
        auto r = integrate_tail([](double) { return 0.0; }, 3.0);
        CHECK(r.value == 0.0);
    }
}

TEST_CASE("cumulative integral caching", "[quad]") {
    int calls = 0;
    Integrand f = [&calls](double s) {
        ++calls;
        return std::cos(s) + 0.2 * s;
    };
    CumulativeIntegral C(f, 0.0);
    auto exact = [](double t) { return std::sin(t) + 0.1 * t * t; };
    const double ts[] = {0.5, 1.0, 3.0, 7.0, 2.0, 10.0, 10.0, 4.5, 100.0, 57.3};
    for (double t : ts) {
        INFO("t = " << t);
        CHECK(C(t) == Catch::Approx(exact(t)).margin(2e-7 * (1.0 + std::abs(exact(t)))));
    }
    int calls_after_first_pass = calls;
    for (double t : ts) C(t);
    CHECK(calls == calls_after_first_pass);  // fully cached second pass

    SECTION("below the base") {
        CHECK(C(-2.0) == Catch::Approx(exact(-2.0)).margin(1e-6));
    }
}

TEST_CASE("exp_weight", "[quad]") {
    SECTION("p1 = 1/s from base 1 gives 1/t") {
        auto w = exp_weight([](double s) { return 1.0 / s; }, 1.0);
        for (double t : {2.0, 10.0, 100.0}) {
            INFO("t = " << t);
            CHECK(w(t) == Catch::Approx(1.0 / t).epsilon(1e-6));
        }
    }
    SECTION("zero damping gives unit weight") {
        auto w = exp_weight([](double) { return 0.0; }, 1.0);
        CHECK(w(17.0) == Catch::Approx(1.0).epsilon(1e-12));
    }
    SECTION("constant damping gives exponential decay") {
        auto w = exp_weight([](double) { return 1.0; }, 0.0);
        CHECK(w(3.0) == Catch::Approx(std::exp(-3.0)).epsilon(1e-8));
    }
    SECTION("nonnegative damping gives a non-increasing weight") {
        auto w = exp_weight([](double s) { return 0.3 + std::abs(std::sin(s)); }, 1.0);
        double prev = w(1.0);
        for (double t = 2.0; t <= 20.0; t += 1.0) {
            double cur = w(t);
            CHECK(cur <= prev + 1e-12);
            CHECK(cur > 0.0);
            prev = cur;
        }
    }
}

TEST_CASE("invert_monotone", "[quad]") {
    auto lin = parse_expression("2*t");
    CHECK(invert_monotone(lin, 10.0, 0.0, 100.0) == Catch::Approx(5.0).margin(1e-10));
    auto shift = parse_expression("t+1");
    CHECK(invert_monotone(shift, 7.0, 0.0, 100.0) == Catch::Approx(6.0).margin(1e-10));

    SECTION("value outside the bracket") {
        CHECK_THROWS_AS(invert_monotone(lin, 1000.0, 0.0, 10.0), std::domain_error);
    }
    SECTION("round trip property") {
        auto m = parse_expression("t+ln(t)");
        std::mt19937 rng(11u);
        std::uniform_real_distribution<double> pick(1.0, 50.0);
        for (int i = 0; i < 20; ++i) {
            double s = pick(rng);
            double y = eval(m, Bindings::at_t(s));
            double back = invert_monotone(m, y, 0.5, 100.0);
            CHECK(back == Catch::Approx(s).margin(1e-8));
        }
    }
    SECTION("endpoint values") {
        CHECK(invert_monotone(lin, 0.0, 0.0, 10.0) == Catch::Approx(0.0).margin(1e-12));
        CHECK(invert_monotone(lin, 20.0, 0.0, 10.0) == Catch::Approx(10.0).margin(1e-12));
    }
}

TEST_CASE("classification is stable under tighter settings", "[quad][classify]") {
    ProbeSchedule base;
    auto f = [](double s) { return 1.0 / s; };
    auto v1 = classify_improper(f, 1.0, base);
    auto v2 = classify_improper(f, 1.0, base.halved_tolerances());
    auto v3 = classify_improper(f, 1.0, base.doubled_range());
    CHECK(v1.kind == v2.kind);
    CHECK(v1.kind == v3.kind);
    CHECK(v1.growth == v3.growth);
}
