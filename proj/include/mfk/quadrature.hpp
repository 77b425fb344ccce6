#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "mfk/common.hpp"

namespace mfk {

struct QuadResult {
    double value = 0.0;
    double abs_error = 0.0;   // achieved error estimate
    bool converged = true;
    std::size_t n_evals = 0;
};

namespace detail {

// Gauss-Kronrod 7-15 nodes/weights on [-1, 1] (QUADPACK constants).
inline constexpr double kGK15Node[8] = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};
inline constexpr double kGK15WK[8] = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};
inline constexpr double kGK15WG[4] = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

template <class F>
inline void gk15(const F& f, double a, double b, double& result, double& err) {
    const double c = 0.5 * (a + b);
    const double h = 0.5 * (b - a);
    const double fc = f(c);
    double res_g = fc * kGK15WG[3];
    double res_k = fc * kGK15WK[7];
    for (int i = 0; i < 7; ++i) {
        const double dx = h * kGK15Node[i];
        const double fsum = f(c - dx) + f(c + dx);
        res_k += fsum * kGK15WK[i];
        if (i % 2 == 1) res_g += fsum * kGK15WG[i / 2];
    }
    result = res_k * h;
    err = std::abs((res_k - res_g) * h);
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b].
/// Bisects the interval with the largest error estimate until the global
/// estimate meets rel_tol (or abs_tol) or the subdivision budget is spent.
template <class F>
QuadResult integrate(const F& f, double a, double b, double rel_tol = 1e-9,
                     double abs_tol = 0.0, std::size_t max_intervals = 4000) {
    QuadResult out;
    if (a == b) return out;
    struct Seg {
        double a, b, value, err;
    };
    std::vector<Seg> segs;
    segs.reserve(128);
    double v, e;
    detail::gk15(f, a, b, v, e);
    out.n_evals = 15;
    segs.push_back({a, b, v, e});
    for (;;) {
        double total = 0.0, toterr = 0.0;
        std::size_t worst = 0;
        double worst_err = -1.0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            total += segs[i].value;
            toterr += segs[i].err;
            if (segs[i].err > worst_err) {
                worst_err = segs[i].err;
                worst = i;
            }
        }
        const double goal = std::max(abs_tol, rel_tol * std::abs(total));
        if (toterr <= goal || segs.size() >= max_intervals ||
            worst_err <= 0.0) {
            out.value = total;
            out.abs_error = toterr;
            out.converged = toterr <= std::max(goal, 1e-300);
            return out;
        }
        Seg s = segs[worst];
        const double mid = 0.5 * (s.a + s.b);
        if (mid <= s.a || mid >= s.b) {  // interval at machine resolution
            segs[worst].err = 0.0;
            continue;
        }
        Seg left{s.a, mid, 0, 0}, right{mid, s.b, 0, 0};
        detail::gk15(f, left.a, left.b, left.value, left.err);
        detail::gk15(f, right.a, right.b, right.value, right.err);
        out.n_evals += 30;
        segs[worst] = left;
        segs.push_back(right);
    }
}

/// Integrates f over [a, b] with mandatory subdivision at the given interior
/// breakpoints (integrable singularities, kinks).
template <class F>
QuadResult integrate_with_splits(const F& f, double a, double b,
                                 std::initializer_list<double> splits,
                                 double rel_tol = 1e-9, double abs_tol = 0.0,
                                 std::size_t max_intervals = 4000) {
    std::vector<double> pts{a, b};
    for (double s : splits)
        if (s > a && s < b) pts.push_back(s);
    std::sort(pts.begin(), pts.end());
    QuadResult out;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
        if (pts[i] == pts[i + 1]) continue;
        QuadResult part = integrate(f, pts[i], pts[i + 1], rel_tol,
                                    abs_tol / std::max<std::size_t>(1, pts.size() - 1),
                                    max_intervals);
        out.value += part.value;
        out.abs_error += part.abs_error;
        out.n_evals += part.n_evals;
        out.converged = out.converged && part.converged;
    }
    // re-check the combined relative goal
    if (out.abs_error > std::max(abs_tol, rel_tol * std::abs(out.value)) * pts.size())
        out.converged = false;
    return out;
}

}  // namespace mfk
