#pragma once

// Spatial averaging u(x,t) -> v(t).
//
// Robin:     v = (1/alpha) * integral of u^alpha
// Dirichlet: v = (1/alpha) * integral of phi * u^alpha, phi the first
//            Dirichlet eigenfunction of -Laplace, normalized to max 1.

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "oscwave/problem.hpp"
#include "oscwave/sim.hpp"

namespace oscwave {

struct ReductionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct EigenWeight {
    Domain domain;
    double lambda1 = 0.0;

    double operator()(const std::vector<double>& xs) const {
        if (xs.size() != domain.extents.size())
            throw ReductionError("eigenweight: coordinate count mismatch");
        double prod = 1.0;
        for (std::size_t d = 0; d < xs.size(); ++d) {
            auto [lo, hi] = domain.extents[d];
            prod *= std::sin(M_PI * (xs[d] - lo) / (hi - lo));
        }
        return prod;
    }
    double at(double x) const { return (*this)(std::vector<double>{x}); }
};

inline EigenWeight dirichlet_weight(const Domain& domain) {
    if (domain.extents.empty()) throw ReductionError("dirichlet_weight: empty domain");
    EigenWeight w;
    w.domain = domain;
    for (auto [lo, hi] : domain.extents) {
        double L = hi - lo;
        if (!(L > 0.0)) throw ReductionError("dirichlet_weight: degenerate extent");
        w.lambda1 += (M_PI / L) * (M_PI / L);
    }
    return w;
}

namespace detail {

/// Composite Simpson on a uniform grid; odd interval counts finish with
/// the 3/8 rule on the last three cells.
inline double simpson_uniform(const std::vector<double>& y, double dx) {
    std::size_t n = y.size();
    if (n < 3) throw ReductionError("simpson: need at least 3 nodes");
    std::size_t intervals = n - 1;
    double total = 0.0;
    std::size_t pair_end = intervals % 2 == 0 ? intervals : intervals - 3;
    for (std::size_t i = 0; i + 2 <= pair_end; i += 2)
        total += dx / 3.0 * (y[i] + 4.0 * y[i + 1] + y[i + 2]);
    if (intervals % 2 != 0) {
        std::size_t b = pair_end;
        total += 3.0 * dx / 8.0 * (y[b] + 3.0 * y[b + 1] + 3.0 * y[b + 2] + y[b + 3]);
    }
    return total;
}

}  // namespace detail

inline Trajectory reduce_trace(const SimulationTrace& trace, const OddRatio& alpha,
                               const BoundaryCondition& bc) {
    if (trace.x.size() < 3) throw ReductionError("reduce_trace: need at least 3 spatial nodes");
    if (trace.t.size() < 2) throw ReductionError("reduce_trace: need at least 2 time rows");
    const double a = alpha.value();
    const std::size_t nx = trace.x.size();
    const std::size_t nt = trace.t.size();
    const double dx = trace.dx > 0 ? trace.dx : trace.x[1] - trace.x[0];

    std::vector<double> weight(nx, 1.0);
    if (is_dirichlet(bc)) {
        Domain dom = Domain::interval(trace.x.front(), trace.x.back());
        EigenWeight w = dirichlet_weight(dom);
        for (std::size_t i = 0; i < nx; ++i) weight[i] = w.at(trace.x[i]);
    }

    Trajectory out;
    out.t = trace.t;
    out.dt = trace.dt;
    out.relax = trace.relax;
    out.v.resize(nt);
    out.vprime.assign(nt, 0.0);
    std::vector<double> integrand(nx);
    for (std::size_t j = 0; j < nt; ++j) {
        for (std::size_t i = 0; i < nx; ++i)
            integrand[i] = weight[i] * spow(trace.u[j][i], a);
        out.v[j] = detail::simpson_uniform(integrand, dx) / a;
    }
    double ht = trace.dt;
    if (nt == 2) {
        out.vprime[0] = out.vprime[1] = (out.v[1] - out.v[0]) / ht;
        return out;
    }
    for (std::size_t j = 0; j < nt; ++j) {
        if (j == 0)
            out.vprime[j] = (-3.0 * out.v[0] + 4.0 * out.v[1] - out.v[2]) / (2.0 * ht);
        else if (j + 1 == nt)
            out.vprime[j] =
                (3.0 * out.v[j] - 4.0 * out.v[j - 1] + out.v[j - 2]) / (2.0 * ht);
        else
            out.vprime[j] = (out.v[j + 1] - out.v[j - 1]) / (2.0 * ht);
    }
    return out;
}

}  // namespace oscwave
