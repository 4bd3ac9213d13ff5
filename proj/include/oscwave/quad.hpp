#pragma once

// Quadrature and improper-integral classification.
//
// integrate        adaptive Gauss-Kronrod (G7,K15) with interval bisection
// classify_improper probe-based divergence/convergence decision for
//                  integrals over [t0, infinity)
// CumulativeIntegral cached cumulative integral with lazy knot refinement
// exp_weight       t -> exp(-int_base^t p1)
// integrate_tail   int_t^infinity f, with the classification evidence
// invert_monotone  functional inverse of a nondecreasing map by bisection
//
// Classification never guesses: a verdict is Divergent only when the
// partial-integral sequence grows without bound and a growth model fits
// with r^2 at or above the schedule threshold; Convergent only when the
// increments decay geometrically and extrapolated limits agree; anything
// else, including sign-changing tails, is Inconclusive.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscwave/expr.hpp"

namespace oscwave {

using Integrand = std::function<double(double)>;

struct QuadError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct QuadResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
    int evaluations = 0;
};

namespace detail {

// Kronrod 15 / Gauss 7 nodes and weights on [-1, 1].
inline constexpr double kKronrodNodes[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

inline constexpr double kKronrodWeights[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

inline constexpr double kGaussWeights[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct PanelEstimate {
    double kronrod = 0.0;
    double error = 0.0;
};

inline PanelEstimate kronrod_panel(const Integrand& f, double a, double b) {
    double c = 0.5 * (a + b);
    double h = 0.5 * (b - a);
    double fc = f(c);
    if (!std::isfinite(fc)) throw QuadError("integrand not finite at " + std::to_string(c));
    double resk = kKronrodWeights[7] * fc;
    double resg = kGaussWeights[3] * fc;
    for (int j = 0; j < 7; ++j) {
        double dx = h * kKronrodNodes[j];
        double f1 = f(c - dx);
        double f2 = f(c + dx);
        if (!std::isfinite(f1))
            throw QuadError("integrand not finite at " + std::to_string(c - dx));
        if (!std::isfinite(f2))
            throw QuadError("integrand not finite at " + std::to_string(c + dx));
        resk += kKronrodWeights[j] * (f1 + f2);
        if (j % 2 == 1) resg += kGaussWeights[j / 2] * (f1 + f2);
    }
    PanelEstimate est;
    est.kronrod = resk * h;
    double diff = std::abs((resk - resg) * h);
    est.error = diff;
    return est;
}

struct Segment {
    double a, b, value, error;
    bool operator<(const Segment& o) const { return error < o.error; }
};

}  // namespace detail

inline QuadResult integrate(const Integrand& f, double a, double b, double tol = 1e-9,
                            int max_panels = 4000) {
    QuadResult out;
    if (a == b) return out;
    double sign = 1.0;
    if (a > b) {
        std::swap(a, b);
        sign = -1.0;
    }
    std::priority_queue<detail::Segment> heap;
    auto first = detail::kronrod_panel(f, a, b);
    out.evaluations = 15;
    heap.push({a, b, first.kronrod, first.error});
    double total_val = first.kronrod;
    double total_err = first.error;
    int panels = 1;
    double span = b - a;
    while (total_err > tol * (1.0 + std::abs(total_val)) && panels < max_panels) {
        detail::Segment worst = heap.top();
        if (worst.b - worst.a < 1e-14 * (std::abs(worst.a) + std::abs(worst.b) + 1.0)) break;
        if (worst.error <= 1e-16 * (std::abs(total_val) + 1.0) / span) break;
        heap.pop();
        double mid = 0.5 * (worst.a + worst.b);
        auto left = detail::kronrod_panel(f, worst.a, mid);
        auto right = detail::kronrod_panel(f, mid, worst.b);
        out.evaluations += 30;
        total_val += left.kronrod + right.kronrod - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push({worst.a, mid, left.kronrod, left.error});
        heap.push({mid, worst.b, right.kronrod, right.error});
        ++panels;
    }
    out.value = sign * total_val;
    out.error = total_err;
    out.converged = total_err <= tol * (1.0 + std::abs(total_val));
    return out;
}

// ---------------------------------------------------------------------------
// improper-integral classification

enum class Growth { Log, Power, Exp };

inline const char* growth_name(Growth g) {
    switch (g) {
        case Growth::Log: return "log";
        case Growth::Power: return "power";
        default: return "exp";
    }
}

struct ProbePoint {
    double T = 0.0;
    double integral = 0.0;
};

struct DivergenceVerdict {
    enum class Kind { Divergent, Convergent, Inconclusive };
    Kind kind = Kind::Inconclusive;
    int direction = +1;  // for Divergent: sign of the infinity
    Growth growth = Growth::Power;
    double exponent = 0.0;  // Power: I ~ T^exponent
    double fit_r2 = 0.0;
    double limit_estimate = std::numeric_limits<double>::quiet_NaN();
    double error_estimate = std::numeric_limits<double>::quiet_NaN();
    bool tail_sign_change = false;
    std::string reason;
    std::string schedule;  // "geometric" or "additive"
    std::vector<ProbePoint> probes;

    bool divergent_to_plus_inf() const {
        return kind == Kind::Divergent && direction > 0;
    }
    bool convergent() const { return kind == Kind::Convergent; }
};

struct ProbeSchedule {
    int exponent_max = 16;           // probes at 2^1 .. 2^exponent_max
    double quad_tol = 1e-9;
    double r2_threshold = 0.99;
    double convergence_ratio_max = 0.95;
    double limit_agreement_tol = 1e-6;
    int sign_samples = 64;

    ProbeSchedule halved_tolerances() const {
        ProbeSchedule s = *this;
        s.quad_tol *= 0.5;
        s.limit_agreement_tol *= 0.5;
        return s;
    }
    ProbeSchedule doubled_range() const {
        ProbeSchedule s = *this;
        s.exponent_max += 1;
        return s;
    }
};

namespace detail {

struct LinFit {
    double slope = 0.0, intercept = 0.0, r2 = 0.0;
    bool ok = false;
};

inline LinFit linear_fit(const std::vector<double>& u, const std::vector<double>& y) {
    LinFit fit;
    std::size_t n = u.size();
    if (n < 3 || y.size() != n) return fit;
    double su = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        su += u[i];
        sy += y[i];
    }
    double mu = su / n, my = sy / n;
    double suu = 0, suy = 0, syy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        suu += (u[i] - mu) * (u[i] - mu);
        suy += (u[i] - mu) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (suu <= 0) return fit;
    fit.slope = suy / suu;
    fit.intercept = my - fit.slope * mu;
    double ss_res = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = fit.intercept + fit.slope * u[i];
        ss_res += (y[i] - pred) * (y[i] - pred);
    }
    fit.r2 = syy > 0 ? std::max(0.0, 1.0 - ss_res / syy) : (ss_res < 1e-20 ? 1.0 : 0.0);
    fit.ok = true;
    return fit;
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Classify one probe run.  `probes` holds cumulative integrals from t0.
inline DivergenceVerdict evaluate_probes(const Integrand& f, std::vector<ProbePoint> probes,
                                         const ProbeSchedule& sched, const char* schedule_name,
                                         const std::string& truncation_note) {
    DivergenceVerdict v;
    v.schedule = schedule_name;
    v.probes = probes;
    std::size_t n = probes.size();
    if (n < 5) {
        v.reason = "too few finite probes (" + std::to_string(n) + ")" +
                   (truncation_note.empty() ? "" : "; " + truncation_note);
        return v;
    }

    std::vector<double> d(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) d[i] = probes[i + 1].integral - probes[i].integral;

    // Local noise floor for increment i, relative to the nearby cumulative values.
    auto dzero_at = [&](std::size_t i) {
        return 1e-14 * (1.0 + std::abs(probes[i].integral) + std::abs(probes[i + 1].integral));
    };
    double dzero = dzero_at(n - 2);

    // Integrand sign changes over the probed tail.
    {
        double lo = probes[n / 2].T;
        double hi = probes[n - 1].T;
        int prev_sign = 0;
        int changes = 0;
        double fscale = 0.0;
        std::vector<double> fs(static_cast<std::size_t>(sched.sign_samples));
        for (int i = 0; i < sched.sign_samples; ++i) {
            double s = lo * std::pow(hi / lo, (i + 0.5) / sched.sign_samples);
            double fv = f(s);
            if (!std::isfinite(fv)) continue;
            fs[static_cast<std::size_t>(i)] = fv;
            fscale = std::max(fscale, std::abs(fv));
        }
        for (int i = 0; i < sched.sign_samples; ++i) {
            double fv = fs[static_cast<std::size_t>(i)];
            if (std::abs(fv) <= 1e-12 * fscale) continue;
            int sgn = fv > 0 ? 1 : -1;
            if (prev_sign != 0 && sgn != prev_sign) ++changes;
            prev_sign = sgn;
        }
        v.tail_sign_change = changes > 0;
    }

    // All increments negligible beyond some point: the integral has settled.
    {
        std::size_t tail_from = d.size() - std::min<std::size_t>(4, d.size());
        bool settled = true;
        for (std::size_t i = tail_from; i < d.size(); ++i)
            if (std::abs(d[i]) > dzero) settled = false;
        if (settled) {
            v.kind = DivergenceVerdict::Kind::Convergent;
            v.limit_estimate = probes[n - 1].integral;
            v.error_estimate = 0.0;
            v.reason = "increments vanish beyond T = " +
                       std::to_string(probes[n - std::min<std::size_t>(5, n)].T);
            return v;
        }
    }

    // Geometric decay of increments: Aitken-extrapolated limit.
    {
        std::size_t m = std::min<std::size_t>(6, d.size() - 1);
        std::vector<double> ratios;
        bool usable = true;
        for (std::size_t i = d.size() - m; i < d.size(); ++i) {
            if (std::abs(d[i - 1]) <= dzero_at(i - 1)) {
                usable = false;
                break;
            }
            ratios.push_back(d[i] / d[i - 1]);
        }
        if (usable && !ratios.empty()) {
            bool all_small = true;
            for (double r : ratios)
                if (!(std::abs(r) <= sched.convergence_ratio_max)) all_small = false;
            if (all_small) {
                double rho = median_of(ratios);
                std::vector<double> limits;
                for (std::size_t k = n - 3; k < n; ++k) {
                    double dk = probes[k].integral - probes[k - 1].integral;
                    limits.push_back(probes[k].integral + dk * rho / (1.0 - rho));
                }
                double spread = 0.0;
                for (double a : limits)
                    for (double b : limits) spread = std::max(spread, std::abs(a - b));
                double L = limits.back();
                if (spread <= 1e-3 * (1.0 + std::abs(L))) {
                    if (v.tail_sign_change) {
                        v.reason = "increments decay but the integrand changes sign in the tail";
                        return v;
                    }
                    v.kind = DivergenceVerdict::Kind::Convergent;
                    v.limit_estimate = L;
                    v.error_estimate = std::max(spread, std::abs(dzero));
                    v.reason = "geometric increment decay (ratio ~ " + std::to_string(rho) + ")";
                    return v;
                }
            }
        }
    }

    // Divergence requires a one-signed, unbounded tail.
    std::size_t tail_len = std::min<std::size_t>(8, d.size());
    std::size_t tail_from = d.size() - tail_len;
    bool all_pos = true, all_neg = true;
    for (std::size_t i = tail_from; i < d.size(); ++i) {
        if (d[i] < -dzero_at(i)) all_pos = false;
        if (d[i] > dzero_at(i)) all_neg = false;
    }
    if (!all_pos && !all_neg) {
        v.reason = "mixed-sign increments in the tail";
        return v;
    }
    if (v.tail_sign_change) {
        v.reason = "integrand changes sign in the tail";
        return v;
    }
    int dir = all_pos ? +1 : -1;

    std::vector<double> dd(d.begin() + static_cast<std::ptrdiff_t>(tail_from), d.end());
    if (dir < 0)
        for (double& x : dd) x = -x;
    std::vector<double> ratios;
    for (std::size_t i = 1; i < dd.size(); ++i) {
        if (dd[i - 1] <= dzero_at(tail_from + i - 1)) {
            v.reason = "stalled increments in the tail";
            return v;
        }
        ratios.push_back(dd[i] / dd[i - 1]);
    }
    if (ratios.size() < 3) {
        v.reason = "too few tail increments";
        return v;
    }
    double rmed = median_of(ratios);
    double rmin = *std::min_element(ratios.begin(), ratios.end());
    double rmax = *std::max_element(ratios.begin(), ratios.end());

    std::optional<Growth> model;
    double p_hat = 0.0;
    if (rmin > 0 && rmax / rmin <= 1.25) {
        if (std::abs(rmed - 1.0) <= 0.08) {
            model = Growth::Log;
        } else if (rmed > 1.0) {
            model = Growth::Power;
            p_hat = std::log2(rmed);
        } else {
            v.reason = "increments decay too slowly to extrapolate, too fast to diverge";
            return v;
        }
    } else if (ratios.back() > ratios.front() * 1.8 && rmed > 1.05) {
        bool increasing = true;
        for (std::size_t i = 1; i < ratios.size(); ++i)
            if (ratios[i] < ratios[i - 1] * 0.95) increasing = false;
        if (increasing) model = Growth::Exp;
    }
    if (!model) {
        v.reason = "no stable growth pattern in the increments";
        return v;
    }

    // Validation regression over the later portion of the probe curve.
    std::size_t fit_from = n >= 10 ? n - (n * 3) / 5 : n - std::min<std::size_t>(6, n);
    std::vector<double> us, ys;
    for (std::size_t i = fit_from; i < n; ++i) {
        double T = probes[i].T;
        double I = dir > 0 ? probes[i].integral : -probes[i].integral;
        switch (*model) {
            case Growth::Log: us.push_back(std::log(T)); break;
            case Growth::Power: us.push_back(std::pow(T, p_hat)); break;
            case Growth::Exp:
                if (I <= 0) continue;
                us.push_back(T);
                break;
        }
        ys.push_back(*model == Growth::Exp ? std::log(I) : I);
    }
    auto fit = detail::linear_fit(us, ys);
    if (!fit.ok || fit.slope <= 0 || fit.r2 < sched.r2_threshold) {
        v.reason = std::string("growth model '") + growth_name(*model) +
                   "' fit rejected (r^2 = " + std::to_string(fit.ok ? fit.r2 : 0.0) + ")";
        return v;
    }
    v.kind = DivergenceVerdict::Kind::Divergent;
    v.direction = dir;
    v.growth = *model;
    v.exponent = *model == Growth::Power ? p_hat : 0.0;
    v.fit_r2 = fit.r2;
    v.reason = std::string("partial integrals grow like ") + growth_name(*model) +
               (*model == Growth::Power ? " (exponent ~ " + std::to_string(p_hat) + ")" : "") +
               ", r^2 = " + std::to_string(fit.r2) +
               (truncation_note.empty() ? "" : "; " + truncation_note);
    return v;
}

inline DivergenceVerdict run_schedule(const Integrand& f, double t0,
                                      const std::vector<double>& Ts,
                                      const ProbeSchedule& sched, const char* name) {
    std::vector<ProbePoint> probes;
    std::string note;
    double I = 0.0;
    double prev = t0;
    for (double T : Ts) {
        QuadResult q;
        try {
            q = integrate(f, prev, T, sched.quad_tol);
        } catch (const QuadError& e) {
            note = std::string("probe at T = ") + std::to_string(T) + " failed: " + e.what();
            break;
        }
        if (!std::isfinite(q.value) || std::abs(I + q.value) > 1e250) {
            note = "partial integral overflow at T = " + std::to_string(T);
            break;
        }
        if (!q.converged) {
            note = "quadrature did not converge at T = " + std::to_string(T);
            break;
        }
        I += q.value;
        probes.push_back({T, I});
        prev = T;
    }
    return evaluate_probes(f, std::move(probes), sched, name, note);
}

inline int verdict_strength(const DivergenceVerdict& v) {
    switch (v.kind) {
        case DivergenceVerdict::Kind::Divergent: return 2;
        case DivergenceVerdict::Kind::Convergent: return 2;
        default: return 0;
    }
}

}  // namespace detail

/// Decide the fate of the improper integral of f over [t0, infinity).
/// Two probe schedules run (T = t0 * 2^i and T = t0 + 2^i); the stronger
/// conclusion wins, the geometric schedule breaking ties.
inline DivergenceVerdict classify_improper(const Integrand& f, double t0,
                                           const ProbeSchedule& sched = {}) {
    std::vector<double> geo, add;
    for (int i = 1; i <= sched.exponent_max; ++i) {
        double p = std::pow(2.0, i);
        if (t0 > 0.0) geo.push_back(t0 * p);
        add.push_back(t0 + p);
    }
    DivergenceVerdict va = detail::run_schedule(f, t0, add, sched, "additive");
    if (t0 <= 0.0) return va;
    DivergenceVerdict vg = detail::run_schedule(f, t0, geo, sched, "geometric");
    if (detail::verdict_strength(vg) >= detail::verdict_strength(va)) {
        if (vg.kind != va.kind && detail::verdict_strength(va) > 0)
            vg.reason += "; additive schedule disagreed (" + va.reason + ")";
        return vg;
    }
    return va;
}

struct TailResult {
    double value = std::numeric_limits<double>::quiet_NaN();
    DivergenceVerdict verdict;
};

/// int_t^infinity f, by classification: a convergent tail yields its
/// extrapolated value, a divergent one +/-infinity, otherwise NaN.
inline TailResult integrate_tail(const Integrand& f, double t, const ProbeSchedule& sched = {}) {
    TailResult r;
    r.verdict = classify_improper(f, t, sched);
    switch (r.verdict.kind) {
        case DivergenceVerdict::Kind::Convergent: r.value = r.verdict.limit_estimate; break;
        case DivergenceVerdict::Kind::Divergent:
            r.value = r.verdict.direction > 0 ? std::numeric_limits<double>::infinity()
                                              : -std::numeric_limits<double>::infinity();
            break;
        default: break;
    }
    return r;
}

// ---------------------------------------------------------------------------
// cached cumulative integral

/// C(t) = int_base^t f, backed by a lazily grown knot table with linear
/// interpolation between knots refined to ~1e-8 relative accuracy.  Not
/// synchronized: use one instance per worker.
class CumulativeIntegral {
public:
    CumulativeIntegral(Integrand f, double base, double rel_tol = 1e-8,
                       double quad_tol = 1e-10)
        : s_(std::make_shared<State>(State{std::move(f), base, rel_tol, quad_tol, {}, {}})) {
        s_->knots[base] = 0.0;
    }

    double base() const { return s_->base; }

    double operator()(double t) const {
        auto& knots = s_->knots;
        extend_to(t);
        auto hi = knots.lower_bound(t);
        if (hi->first == t) return hi->second;
        auto lo = std::prev(hi);
        // Refine the bracketing segment until midpoint interpolation holds,
        // then remember it so later reads are pure table lookups.
        for (int depth = 0; depth < 48; ++depth) {
            double a = lo->first, b = hi->first;
            if (s_->verified.count(a)) break;
            if (b - a <= 1e-12 * (1.0 + std::abs(a) + std::abs(b))) break;
            double mid = 0.5 * (a + b);
            double exact = lo->second + integrate(s_->f, a, mid, s_->quad_tol).value;
            double interp = lo->second + (hi->second - lo->second) * 0.5;
            if (std::abs(exact - interp) <= s_->rel_tol * (1.0 + std::abs(exact))) {
                s_->verified.insert(a);
                break;
            }
            auto mit = knots.emplace(mid, exact).first;
            if (t < mid)
                hi = mit;
            else
                lo = mit;
        }
        double a = lo->first, b = hi->first;
        if (b == a) return lo->second;
        double w = (t - a) / (b - a);
        return lo->second + w * (hi->second - lo->second);
    }

private:
    struct State {
        Integrand f;
        double base;
        double rel_tol;
        double quad_tol;
        std::map<double, double> knots;
        std::set<double> verified;  // left endpoints of interpolation-safe segments
    };
    std::shared_ptr<State> s_;

    void extend_to(double t) const {
        auto& knots = s_->knots;
        while (t > knots.rbegin()->first) {
            double last_t = knots.rbegin()->first;
            double last_v = knots.rbegin()->second;
            double step = std::max(1.0, 0.25 * std::abs(last_t - s_->base));
            double next = std::min(t, last_t + step);
            knots[next] = last_v + integrate(s_->f, last_t, next, s_->quad_tol).value;
        }
        while (t < knots.begin()->first) {
            double first_t = knots.begin()->first;
            double first_v = knots.begin()->second;
            double step = std::max(1.0, 0.25 * std::abs(first_t - s_->base));
            double next = std::max(t, first_t - step);
            knots[next] = first_v - integrate(s_->f, next, first_t, s_->quad_tol).value;
        }
    }
};

/// Weight t -> exp(-int_base^t p1(s) ds), shared cumulative cache inside.
inline Integrand exp_weight(Integrand p1, double base) {
    CumulativeIntegral cum(std::move(p1), base);
    return [cum](double t) { return std::exp(-cum(t)); };
}

// ---------------------------------------------------------------------------
// functional inverse

/// Solve m(s) = y for s in [lo, hi]; m must be nondecreasing.
inline double invert_monotone(const std::function<double(double)>& m, double y, double lo,
                              double hi) {
    if (!(lo <= hi)) throw std::domain_error("invert_monotone: empty bracket");
    double mlo = m(lo);
    double mhi = m(hi);
    if (mlo > mhi)
        throw std::domain_error("invert_monotone: map is decreasing on the bracket");
    double slack = 1e-9 * (1.0 + std::abs(y));
    if (y < mlo - slack || y > mhi + slack)
        throw std::domain_error("invert_monotone: y = " + std::to_string(y) +
                                " outside [" + std::to_string(mlo) + ", " +
                                std::to_string(mhi) + "]");
    if (y <= mlo) return lo;
    if (y >= mhi) return hi;
    for (int i = 0; i < 200; ++i) {
        double mid = 0.5 * (lo + hi);
        if (hi - lo <= 1e-13 * (1.0 + std::abs(mid))) return mid;
        if (m(mid) < y)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline double invert_monotone(const ExprPtr& m, double y, double lo, double hi) {
    return invert_monotone(
        [&m](double s) { return eval(m, Bindings::at_t(s)); }, y, lo, hi);
}

}  // namespace oscwave
