#pragma once

// Problem description for the damped quasilinear wave equation
//
//   r(t) u^(alpha-1) u_tt + p(x,t) u^(alpha-2) u_t^2 + p_hat(x,t) u^(alpha-1) u_t
//     + f(u, x, m(t)) = a(t) Lap u + sum_k a_k(t) Lap u(x, eta(t))
//
// with alpha a ratio of positive odd integers, on a spatial interval or box
// with Robin (du/dn + psi u = 0) or Dirichlet boundary data, plus the
// structural hypotheses the oscillation criteria assume:
//
//   H1: r, a, a_k positive; p >= (alpha-1) r on the domain
//   H2: m(t) >= t, m and eta nondecreasing and positive
//   H3: f(u,x,s)/u^alpha >= q(s) > 0 along solutions (power-law form:
//       coefficient dominates q; other forms are reported unchecked)

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "oscwave/expr.hpp"

namespace oscwave {

struct SpecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Ratio of two positive odd integers, e.g. 5, 5/3, 1/3.
struct OddRatio {
    long long num = 1;
    long long den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    bool valid() const { return num > 0 && den > 0 && num % 2 == 1 && den % 2 == 1; }

    static OddRatio parse(std::string_view s) {
        OddRatio r;
        auto slash = s.find('/');
        try {
            if (slash == std::string_view::npos) {
                r.num = std::stoll(std::string(s));
                r.den = 1;
            } else {
                r.num = std::stoll(std::string(s.substr(0, slash)));
                r.den = std::stoll(std::string(s.substr(slash + 1)));
            }
        } catch (const std::exception&) {
            throw SpecError("alpha must be an odd integer or odd/odd ratio, got '" +
                            std::string(s) + "'");
        }
        if (!r.valid())
            throw SpecError("alpha must be a ratio of positive odd integers, got '" +
                            std::string(s) + "'");
        return r;
    }

    std::string str() const {
        return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
    }
};

/// Spatial domain: an interval or an axis-aligned box.
struct Domain {
    std::vector<std::pair<double, double>> extents;

    static Domain interval(double lo, double hi) {
        if (!(lo < hi)) throw SpecError("domain interval must have lo < hi");
        return Domain{{{lo, hi}}};
    }
    static Domain box(std::vector<std::pair<double, double>> ext) {
        if (ext.empty()) throw SpecError("domain box needs at least one extent");
        for (auto& [lo, hi] : ext)
            if (!(lo < hi)) throw SpecError("domain box must have lo < hi in every direction");
        return Domain{std::move(ext)};
    }

    bool is_interval() const { return extents.size() == 1; }
    std::size_t dim() const { return extents.size(); }
    double lo(std::size_t i = 0) const { return extents.at(i).first; }
    double hi(std::size_t i = 0) const { return extents.at(i).second; }
    double length(std::size_t i = 0) const { return extents.at(i).second - extents.at(i).first; }
};

/// f(u, x, m(t)) = coef(m-bound) * u^alpha evaluated at the deviated time.
struct PowerLawF {
    ExprPtr coef;
};

/// f(u, x, m(t)) = coef * u^exponent with an explicit exponent; H3 is only
/// verifiable against q when the exponent matches alpha.
struct CustomF {
    ExprPtr coef;
    double exponent = 1.0;
};

using FForm = std::variant<PowerLawF, CustomF>;

struct RobinBc {
    ExprPtr psi;  // du/dn + psi(t) u = 0
};
struct DirichletBc {};
using BoundaryCondition = std::variant<RobinBc, DirichletBc>;

inline bool is_dirichlet(const BoundaryCondition& bc) {
    return std::holds_alternative<DirichletBc>(bc);
}

struct ProblemSpec {
    OddRatio alpha;
    ExprPtr r;         // r(t)
    ExprPtr p;         // p(x,t)
    ExprPtr p_hat;     // p_hat(x,t)
    ExprPtr q;         // q(t), the H3 minorant
    ExprPtr a;         // a(t)
    ExprPtr a_family;  // a_k(t) with the family index bound to k
    int family_count = 0;
    ExprPtr m;    // deviating argument of f, m(t) >= t
    ExprPtr eta;  // deviating argument of the coupled Laplacian
    FForm f_form;
    BoundaryCondition bc;
    Domain domain = Domain::interval(0.0, 1.0);
    double t0 = 1.0;

    /// Structural sanity; throws SpecError on violation.
    void validate() const {
        if (!alpha.valid()) throw SpecError("alpha must be a ratio of positive odd integers");
        if (!r || !p || !p_hat || !q || !a || !m || !eta)
            throw SpecError("all coefficient expressions must be present");
        if (family_count < 0) throw SpecError("family count s must be >= 0");
        if (family_count > 0 && !a_family)
            throw SpecError("a_k expression required when s > 0");
        if (!(t0 > 0.0)) throw SpecError("t0 must be positive");
        if (depends_on(r, Var::X) || depends_on(q, Var::X) || depends_on(a, Var::X) ||
            depends_on(m, Var::X) || depends_on(eta, Var::X))
            throw SpecError("r, q, a, m, eta must not depend on x");
        if (a_family && depends_on(a_family, Var::X))
            throw SpecError("a_k must not depend on x");
        if (auto* robin = std::get_if<RobinBc>(&bc)) {
            if (!robin->psi) throw SpecError("Robin boundary requires psi");
        }
    }

    double alpha_value() const { return alpha.value(); }

    /// Sum over the family: a_1(t) + ... + a_s(t).
    double family_sum(double t) const {
        double acc = 0.0;
        for (int k = 1; k <= family_count; ++k)
            acc += eval(a_family, Bindings::at_kt(static_cast<double>(k), t));
        return acc;
    }

    const ExprPtr& f_coef() const {
        if (auto* pl = std::get_if<PowerLawF>(&f_form)) return pl->coef;
        return std::get<CustomF>(f_form).coef;
    }
    double f_exponent() const {
        if (std::holds_alternative<PowerLawF>(f_form)) return alpha.value();
        return std::get<CustomF>(f_form).exponent;
    }
};

// ---------------------------------------------------------------------------
// hypothesis checking

enum class HypothesisId { H1, H2, H3 };

inline const char* hypothesis_name(HypothesisId h) {
    switch (h) {
        case HypothesisId::H1: return "H1";
        case HypothesisId::H2: return "H2";
        default: return "H3";
    }
}

/// A grid point at which an inequality failed, with both sides recorded so
/// the failure can be re-evaluated independently.
struct Witness {
    double t = 0.0;
    std::optional<double> x;
    std::string inequality;
    double lhs = 0.0;
    double rhs = 0.0;
};

struct HypothesisEntry {
    enum class Verdict { Satisfied, Violated, Unchecked };
    HypothesisId id = HypothesisId::H1;
    Verdict verdict = Verdict::Satisfied;
    std::vector<Witness> witnesses;
    std::string note;
};

inline const char* verdict_name(HypothesisEntry::Verdict v) {
    switch (v) {
        case HypothesisEntry::Verdict::Satisfied: return "Satisfied";
        case HypothesisEntry::Verdict::Violated: return "Violated";
        default: return "Unchecked";
    }
}

struct HypothesisReport {
    std::array<HypothesisEntry, 3> entries;
    double t_lo = 0.0, t_hi = 0.0;
    int n_t = 0, n_x = 0;

    const HypothesisEntry& entry(HypothesisId id) const {
        return entries[static_cast<std::size_t>(id)];
    }
    bool all_satisfied() const {
        for (const auto& e : entries)
            if (e.verdict == HypothesisEntry::Verdict::Violated) return false;
        return true;
    }
};

namespace detail {

constexpr double kHypSlack = 1e-12;
constexpr std::size_t kWitnessCap = 8;

inline void record(HypothesisEntry& e, Witness w) {
    e.verdict = HypothesisEntry::Verdict::Violated;
    if (e.witnesses.size() < kWitnessCap) e.witnesses.push_back(std::move(w));
}

}  // namespace detail

/// Sample the hypotheses on a t-grid (n_t points across [t_lo, t_hi]) and,
/// for x-dependent coefficients, an x-grid per extent.  A pass is evidence,
/// not proof; violations come with concrete witnesses.
inline HypothesisReport check_hypotheses(const ProblemSpec& spec, double t_lo, double t_hi,
                                         int n_t = 200, int n_x = 20) {
    spec.validate();
    if (!(t_lo < t_hi) || n_t < 2 || n_x < 2)
        throw SpecError("hypothesis grid requires t_lo < t_hi, n_t >= 2, n_x >= 2");
    HypothesisReport rep;
    rep.t_lo = t_lo;
    rep.t_hi = t_hi;
    rep.n_t = n_t;
    rep.n_x = n_x;
    auto& h1 = rep.entries[0];
    auto& h2 = rep.entries[1];
    auto& h3 = rep.entries[2];
    h1.id = HypothesisId::H1;
    h2.id = HypothesisId::H2;
    h3.id = HypothesisId::H3;

    double am1 = spec.alpha_value() - 1.0;
    bool p_has_x = depends_on(spec.p, Var::X);
    bool f_checkable = std::holds_alternative<PowerLawF>(spec.f_form) ||
                       std::get<CustomF>(spec.f_form).exponent == spec.alpha_value();
    if (!f_checkable) {
        h3.verdict = HypothesisEntry::Verdict::Unchecked;
        h3.note = "f exponent differs from alpha; f/u^alpha bound not verifiable on this form";
    }
    bool f_coef_has_x = depends_on(spec.f_coef(), Var::X);

    // x-grid covering every extent; interval domains use the first extent.
    std::vector<double> xs;
    for (int j = 0; j < n_x; ++j)
        xs.push_back(spec.domain.lo() +
                     spec.domain.length() * static_cast<double>(j) / (n_x - 1));

    double prev_m = 0.0, prev_eta = 0.0;
    for (int i = 0; i < n_t; ++i) {
        double t = t_lo + (t_hi - t_lo) * static_cast<double>(i) / (n_t - 1);
        Bindings bt = Bindings::at_t(t);

        double rv = eval(spec.r, bt);
        if (!(rv > detail::kHypSlack))
            detail::record(h1, {t, std::nullopt, "r(t) > 0", rv, 0.0});
        double av = eval(spec.a, bt);
        if (!(av > detail::kHypSlack))
            detail::record(h1, {t, std::nullopt, "a(t) > 0", av, 0.0});
        for (int k = 1; k <= spec.family_count; ++k) {
            double akv = eval(spec.a_family, Bindings::at_kt(static_cast<double>(k), t));
            if (!(akv > detail::kHypSlack))
                detail::record(h1, {t, std::nullopt,
                                    "a_" + std::to_string(k) + "(t) > 0", akv, 0.0});
        }
        // p >= (alpha-1) r pointwise in x.
        double bound = am1 * rv;
        if (p_has_x) {
            for (double x : xs) {
                double pv = eval(spec.p, Bindings::at_xt(x, t));
                if (pv < bound - detail::kHypSlack) {
                    detail::record(h1, {t, x, "p(x,t) >= (alpha-1) r(t)", pv, bound});
                    break;
                }
            }
        } else {
            double pv = eval(spec.p, bt);
            if (pv < bound - detail::kHypSlack)
                detail::record(h1, {t, std::nullopt, "p(t) >= (alpha-1) r(t)", pv, bound});
        }

        // H2: deviation geometry.
        double mv = eval(spec.m, bt);
        double ev = eval(spec.eta, bt);
        if (mv < t - detail::kHypSlack)
            detail::record(h2, {t, std::nullopt, "m(t) >= t", mv, t});
        if (!(mv > 0.0)) detail::record(h2, {t, std::nullopt, "m(t) > 0", mv, 0.0});
        if (!(ev > 0.0)) detail::record(h2, {t, std::nullopt, "eta(t) > 0", ev, 0.0});
        if (i > 0) {
            if (mv < prev_m - detail::kHypSlack)
                detail::record(h2, {t, std::nullopt, "m nondecreasing", mv, prev_m});
            if (ev < prev_eta - detail::kHypSlack)
                detail::record(h2, {t, std::nullopt, "eta nondecreasing", ev, prev_eta});
        }
        prev_m = mv;
        prev_eta = ev;

        // H3: q positive, coefficient of f dominating q at the same slot.
        double qv = eval(spec.q, bt);
        if (!(qv > detail::kHypSlack))
            detail::record(h3, {t, std::nullopt, "q(t) > 0", qv, 0.0});
        if (f_checkable) {
            if (f_coef_has_x) {
                for (double x : xs) {
                    double cv = eval(spec.f_coef(), Bindings::at_xt(x, t));
                    if (cv < qv - detail::kHypSlack) {
                        detail::record(h3, {t, x, "f coefficient >= q", cv, qv});
                        break;
                    }
                }
            } else {
                double cv = eval(spec.f_coef(), bt);
                if (cv < qv - detail::kHypSlack)
                    detail::record(h3, {t, std::nullopt, "f coefficient >= q", cv, qv});
            }
        }
    }
    if (h3.verdict == HypothesisEntry::Verdict::Satisfied && f_checkable)
        h3.note = "coefficient bound coef(t) >= q(t) sampled; strictness of the f bound "
                  "is not machine-checkable pointwise";
    return rep;
}

// ---------------------------------------------------------------------------
// built-in examples

/// Ready-made specs: "3.1" (Robin, strongly advanced argument) and
/// "3.2" (Dirichlet, unit advance with rapidly growing q).
inline ProblemSpec builtin_example(std::string_view id) {
    if (id == "3.1") {
        ProblemSpec s;
        s.alpha = OddRatio{5, 1};
        s.r = parse_expression("t");
        s.p = parse_expression("1");
        s.p_hat = parse_expression("1");
        s.q = parse_expression("1");
        s.a = parse_expression("1");
        s.a_family = parse_expression("3+cos(k*t)");
        s.family_count = 3;
        s.m = parse_expression("2*t");
        s.eta = parse_expression("t/2");
        s.f_form = PowerLawF{parse_expression("2")};
        s.bc = RobinBc{parse_expression("t")};
        s.domain = Domain::interval(0.0, 1.0);
        s.t0 = 1.0;
        return s;
    }
    if (id == "3.2") {
        ProblemSpec s;
        s.alpha = OddRatio{3, 1};
        s.r = parse_expression("t^2");
        s.p = parse_expression("1");
        s.p_hat = parse_expression("2*t");
        s.q = parse_expression("t^4");
        s.a = parse_expression("1");
        s.a_family = parse_expression("1+k*t");
        s.family_count = 3;
        s.m = parse_expression("t+1");
        s.eta = parse_expression("t+2");
        s.f_form = PowerLawF{parse_expression("2*t^4")};
        s.bc = DirichletBc{};
        s.domain = Domain::interval(0.0, M_PI);
        s.t0 = 1.0;
        return s;
    }
    throw SpecError("unknown example id '" + std::string(id) + "' (expected 3.1 or 3.2)");
}

}  // namespace oscwave
