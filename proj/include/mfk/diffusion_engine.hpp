#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mfk/fit.hpp"

#include "mfk/common.hpp"
#include "mfk/csv.hpp"
#include "mfk/kraichnan_kernel.hpp"
#include "mfk/quadrature.hpp"
#include "mfk/rng.hpp"

namespace mfk {

struct PathMeta {
    std::uint64_t seed = 0;
    double dt = 0.0;
    std::string scheme;
    bool reflected = false;
    bool truncated = false;  // time change ran out of clock before the horizon
    bool absorbed = false;   // clock budget exceeded at the origin
};

/// Sampled trajectory on a uniform time grid, with an optional companion
/// clock value per step.
struct PathRecord {
    std::vector<double> times;
    std::vector<double> values;
    std::vector<double> clock;  // empty unless attached
    PathMeta meta;

    std::size_t size() const { return times.size(); }
};

/// Standard Brownian path; increments have variance dt. If reflected, the
/// values are |.| of the unreflected path.
inline PathRecord sample_brownian(double T, double dt, std::uint64_t seed,
                                  bool reflected = false, double start = 0.0) {
    require(dt > 0.0 && T >= dt, "need dt > 0 and T >= dt");
    const auto n = static_cast<std::size_t>(std::llround(T / dt));
    PathRecord p;
    p.meta = {seed, dt, "brownian", reflected, false, false};
    p.times.resize(n + 1);
    p.values.resize(n + 1);
    GaussianRng rng(seed);
    const double sdt = std::sqrt(dt);
    double x = start;
    p.times[0] = 0.0;
    p.values[0] = reflected ? std::abs(x) : x;
    for (std::size_t k = 1; k <= n; ++k) {
        x += sdt * rng.gaussian();
        p.times[k] = static_cast<double>(k) * dt;
        p.values[k] = reflected ? std::abs(x) : x;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Local time
// ---------------------------------------------------------------------------

struct LocalTimeField {
    std::vector<double> y_grid;
    std::vector<double> t_checkpoints;
    std::vector<std::vector<double>> ell;  // ell[checkpoint][y]
    double bandwidth = 0.0;
};

/// Occupation-binning estimator of the local time: time spent in
/// (y - eps, y + eps) up to each checkpoint, divided by 2 eps. Time within a
/// step is attributed by linear interpolation of the segment (trapezoidal
/// crossing accounting).
inline LocalTimeField local_time(const PathRecord& path, std::vector<double> y_grid,
                                 double bandwidth, std::vector<double> t_checkpoints = {}) {
    require(!path.times.empty(), "empty path");
    require(y_grid.size() >= 2, "need at least 2 window centers");
    const double dt = path.meta.dt;
    if (bandwidth < 2.0 * std::sqrt(dt))
        std::fprintf(stderr, "[mfk] local_time: bandwidth %g under-resolved vs sqrt(dt) %g\n",
                     bandwidth, std::sqrt(dt));
    if (t_checkpoints.empty()) t_checkpoints.push_back(path.times.back());
    std::sort(y_grid.begin(), y_grid.end());
    std::sort(t_checkpoints.begin(), t_checkpoints.end());

    LocalTimeField out;
    out.y_grid = y_grid;
    out.t_checkpoints = t_checkpoints;
    out.bandwidth = bandwidth;
    out.ell.assign(t_checkpoints.size(), std::vector<double>(y_grid.size(), 0.0));

    const double y0 = y_grid.front();
    const double dy = y_grid.size() > 1 ? y_grid[1] - y_grid[0] : 1.0;
    std::vector<double> acc(y_grid.size(), 0.0);
    std::size_t cp = 0;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        while (cp < t_checkpoints.size() && path.times[k] >= t_checkpoints[cp] - 0.5 * dt) {
            out.ell[cp] = acc;
            ++cp;
        }
        const double a = path.values[k], b = path.values[k + 1];
        const double lo = std::min(a, b), hi = std::max(a, b);
        // windows possibly touched: centers within bandwidth of [lo, hi]
        auto j0 = static_cast<std::int64_t>(std::floor((lo - bandwidth - y0) / dy));
        auto j1 = static_cast<std::int64_t>(std::ceil((hi + bandwidth - y0) / dy));
        j0 = std::max<std::int64_t>(j0, 0);
        j1 = std::min<std::int64_t>(j1, static_cast<std::int64_t>(y_grid.size()) - 1);
        for (std::int64_t j = j0; j <= j1; ++j) {
            const double wl = y_grid[j] - bandwidth, wh = y_grid[j] + bandwidth;
            double frac;
            if (hi == lo) {
                frac = (lo >= wl && lo < wh) ? 1.0 : 0.0;
            } else {
                const double ov = std::min(hi, wh) - std::max(lo, wl);
                frac = ov > 0.0 ? ov / (hi - lo) : 0.0;
            }
            acc[static_cast<std::size_t>(j)] += frac * dt;
        }
    }
    while (cp < t_checkpoints.size()) {
        out.ell[cp] = acc;
        ++cp;
    }
    for (auto& row : out.ell)
        for (auto& v : row) v /= 2.0 * bandwidth;
    return out;
}

// ---------------------------------------------------------------------------
// Clocks and the time change
// ---------------------------------------------------------------------------

/// Trapezoidal clock C(t_k) = int_0^{t_k} ds / (2 A(B_s)). Nondecreasing.
template <class CoeffFn>
inline std::vector<double> clock_process(const PathRecord& path, const CoeffFn& A) {
    require(!path.times.empty(), "empty path");
    const double dt = path.meta.dt;
    std::vector<double> C(path.size(), 0.0);
    double f_prev = 0.5 / A(path.values[0]);
    for (std::size_t k = 1; k < path.size(); ++k) {
        const double f = 0.5 / A(path.values[k]);
        C[k] = C[k - 1] + 0.5 * dt * (f_prev + f);
        f_prev = f;
    }
    return C;
}

/// Occupation-formula clock at the path end: int ell(y, T) m(dy) with
/// m(dy) = dy / (2 A(y)) evaluated on the local-time grid.
template <class CoeffFn>
inline double clock_via_occupation(const LocalTimeField& lt, const CoeffFn& A,
                                   std::size_t checkpoint = 0) {
    const auto& row = lt.ell.at(checkpoint);
    const double dy = lt.y_grid[1] - lt.y_grid[0];
    double c = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) c += row[j] * dy * 0.5 / A(lt.y_grid[j]);
    return c;
}

/// Time-changed path R(t) = B(tau(t)) on a uniform grid of process times,
/// with tau the right-continuous generalized inverse of the clock, linear
/// between knots (exact for the trapezoidal clock). If the clock ends before
/// the horizon the result is truncated and flagged.
inline PathRecord time_change(const PathRecord& path, const std::vector<double>& clock,
                              double horizon, double dt_out = 0.0) {
    require(clock.size() == path.size(), "clock not aligned with path");
    require(horizon > 0.0, "horizon must be positive");
    if (dt_out <= 0.0) dt_out = path.meta.dt;
    PathRecord out;
    out.meta = path.meta;
    out.meta.scheme = "time_change";
    out.meta.dt = dt_out;
    const auto n_out = static_cast<std::size_t>(std::floor(horizon / dt_out + 1e-9));
    out.times.reserve(n_out + 1);
    out.values.reserve(n_out + 1);
    for (std::size_t j = 0; j <= n_out; ++j) {
        const double t = static_cast<double>(j) * dt_out;
        if (t > clock.back()) {
            out.meta.truncated = true;
            break;
        }
        const auto it = std::upper_bound(clock.begin(), clock.end(), t);
        double s;
        if (it == clock.begin()) {
            s = path.times.front();
        } else if (it == clock.end()) {
            s = path.times.back();
        } else {
            const auto k = static_cast<std::size_t>(it - clock.begin());
            const double c0 = clock[k - 1], c1 = clock[k];
            const double f = c1 > c0 ? (t - c0) / (c1 - c0) : 1.0;
            s = path.times[k - 1] + f * (path.times[k] - path.times[k - 1]);
        }
        // linear interpolation of the Brownian path at s
        const double fk = s / path.meta.dt;
        auto k0 = static_cast<std::size_t>(std::min<double>(fk, static_cast<double>(path.size() - 1)));
        if (k0 + 1 >= path.size()) k0 = path.size() - 2;
        const double w = std::clamp(fk - static_cast<double>(k0), 0.0, 1.0);
        out.times.push_back(t);
        out.values.push_back(path.values[k0] * (1.0 - w) + path.values[k0 + 1] * w);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Direct SDE route
// ---------------------------------------------------------------------------

/// Euler-Maruyama path of the driftless diffusion with coefficient 2 A:
/// dR = sqrt(2 A(R)) dW.
template <class CoeffFn>
inline PathRecord euler_sde(const CoeffFn& A, double start, double T, double dt,
                            std::uint64_t seed) {
    require(dt > 0.0 && T >= dt, "need dt > 0 and T >= dt");
    const auto n = static_cast<std::size_t>(std::llround(T / dt));
    PathRecord p;
    p.meta = {seed, dt, "euler", false, false, false};
    p.times.resize(n + 1);
    p.values.resize(n + 1);
    GaussianRng rng(seed);
    const double sdt = std::sqrt(dt);
    double x = start;
    p.times[0] = 0.0;
    p.values[0] = x;
    for (std::size_t k = 1; k <= n; ++k) {
        const double a = A(x);
        x += std::sqrt(2.0 * a) * sdt * rng.gaussian();
        if (!std::isfinite(x))
            throw numerical_error("euler_sde: blow-up at step " + std::to_string(k));
        p.times[k] = static_cast<double>(k) * dt;
        p.values[k] = x;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Bessel mapping
// ---------------------------------------------------------------------------

struct BesselMapResult {
    PathRecord mapped;
    double a = 0.0;    // drift parameter xi / (2 xi - 4)
    double d_e = 0.0;  // effective dimension (2 - 2 xi) / (2 - xi)
};

/// Pointwise map X = R^{1 - xi/2} / (1 - xi/2) up to the first nonpositive
/// value of R (the mapped segment ends there).
inline BesselMapResult bessel_map(const PathRecord& path, double xi) {
    require(xi > 0.0 && xi < 2.0, "bessel map degenerate unless 0 < xi < 2");
    BesselMapResult out;
    out.a = xi / (2.0 * xi - 4.0);
    out.d_e = (2.0 - 2.0 * xi) / (2.0 - xi);
    out.mapped.meta = path.meta;
    out.mapped.meta.scheme = "bessel_map";
    const double e = 1.0 - 0.5 * xi;
    for (std::size_t k = 0; k < path.size(); ++k) {
        if (path.values[k] <= 0.0) break;
        out.mapped.times.push_back(path.times[k]);
        out.mapped.values.push_back(std::pow(path.values[k], e) / e);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Escape times
// ---------------------------------------------------------------------------

/// Green function of the half Laplacian on (r1, r2) with Dirichlet boundaries.
inline double green_interval(double r, double z, double r1, double r2) {
    if (r < r1 || r > r2 || z < r1 || z > r2) return 0.0;
    return 2.0 * (std::min(r, z) - r1) * (r2 - std::max(r, z)) / (r2 - r1);
}

/// Expected escape time by quadrature of int G(r, y) m(y) dy.
template <class DensityFn>
inline double escape_time_quadrature(const DensityFn& m, double r1, double r2, double r) {
    require(r1 < r && r < r2, "start must lie inside the interval");
    auto f = [&](double y) { return green_interval(r, y, r1, r2) * m(y); };
    QuadResult q = integrate_with_splits(f, r1, r2, {r}, 1e-8, 0.0, 6000);
    if (!q.converged && q.abs_error > 1e-6 * std::abs(q.value))
        throw numerical_error("escape_time_quadrature: tolerance not met");
    return q.value;
}

struct EscapeCheck {
    double mc_mean = 0.0;
    double mc_stderr = 0.0;
    double quadrature = 0.0;
    std::vector<double> exit_times;  // per path
    std::vector<int> exit_side;      // -1 lower, +1 upper
};

/// Monte Carlo mean exit time of dR = sqrt(2 A(R)) dW from (r1, r2) vs the
/// Green-function quadrature with m = 1 / (2 A).
template <class CoeffFn>
inline EscapeCheck escape_time_check(const CoeffFn& A, double r1, double r2, double r,
                                     std::size_t n_paths, double dt = 1e-6,
                                     std::uint64_t seed = 1, unsigned jobs = 1) {
    require(r1 < r && r < r2, "start must lie inside the interval");
    EscapeCheck out;
    out.quadrature = escape_time_quadrature([&](double y) { return 0.5 / A(y); }, r1, r2, r);
    out.exit_times.resize(n_paths);
    out.exit_side.resize(n_paths);
    const double sdt = std::sqrt(dt);
    parallel_tasks(n_paths, jobs, [&](unsigned, std::size_t i) {
        GaussianRng rng(derive_seed(seed, "escape", i));
        double x = r;
        std::uint64_t k = 0;
        for (;;) {
            ++k;
            x += std::sqrt(2.0 * A(x)) * sdt * rng.gaussian();
            if (x <= r1 || x >= r2) break;
        }
        out.exit_times[i] = static_cast<double>(k) * dt;
        out.exit_side[i] = x <= r1 ? -1 : +1;
    });
    out.mc_mean = mean(out.exit_times);
    out.mc_stderr = standard_error(out.exit_times);
    return out;
}

inline void export_exit_stats_csv(const EscapeCheck& ec, std::uint64_t root_seed,
                                  const std::string& path) {
    CsvWriter csv(path, {"seed", "exit_time", "exit_side", "absorbed_flag"});
    for (std::size_t i = 0; i < ec.exit_times.size(); ++i)
        csv.row(static_cast<std::uint64_t>(derive_seed(root_seed, "escape", i)), ec.exit_times[i],
                ec.exit_side[i], 0);
}

inline void export_path_csv(const PathRecord& p, const std::string& path) {
    CsvWriter csv(path, {"t", "value", "clock"});
    for (std::size_t k = 0; k < p.size(); ++k)
        csv.row(p.times[k], p.values[k], k < p.clock.size() ? p.clock[k] : 0.0);
}

// ---------------------------------------------------------------------------
// Streaming time-changed diffusion (phases, occupation statistics)
// ---------------------------------------------------------------------------

/// Boundary handling for time-changed runs on [0, wall].
struct TimeChangeOptions {
    double dt = 1e-5;
    double outer_wall = 1.0;            // reflecting
    double h_floor_mult = 2.0;          // h_floor = mult * sqrt(dt)
    double excursion_budget_frac = 0.2; // absorbed when one boundary excursion
                                        // consumes this fraction of the horizon
    double boundary_weight = 0.0;       // M0: 0 reflect, inf absorb on touch
    double sample_every = 0.0;          // process-time sampling interval (0 = off)
    double b_time_cap_mult = 400.0;     // safety cap on Brownian time / horizon
};

struct TimeChangeOutcome {
    bool hit_floor = false;    // entered [0, h_floor)
    bool absorbed = false;     // clock blow-up inside a boundary excursion
    bool reached_target = false;
    bool exhausted = false;    // Brownian-time safety cap hit (inconclusive)
    double clock_end = 0.0;
    double b_time = 0.0;
    double max_value = 0.0;
};

/// Reflected Brownian motion on [0, wall], time-changed by the clock with
/// rate(x) = 1 / (2 A(x)) (or any nonnegative rate). Runs until the process
/// time reaches `horizon`, the trajectory is absorbed at the origin, or the
/// Brownian-time safety cap trips. `on_sample(t, x)` is called on a uniform
/// process-time grid when opts.sample_every > 0.
///
/// Absorption: an infinite boundary mass shows up at fixed resolution as a
/// single sub-floor excursion consuming an O(1) fraction of the horizon
/// (finite speed mass near 0 keeps per-excursion clock accrual negligible).
/// The excursion ends only when the path clears 2 h_floor (hysteresis).
template <class RateFn, class SampleFn>
inline TimeChangeOutcome run_time_changed(const RateFn& rate, double start, double horizon,
                                          std::uint64_t seed, const TimeChangeOptions& opts,
                                          double target, SampleFn&& on_sample) {
    const double dt = opts.dt;
    const double sdt = std::sqrt(dt);
    const double h_floor = opts.h_floor_mult * sdt;
    const double budget = opts.excursion_budget_frac * horizon;
    const double m0 = opts.boundary_weight;
    const bool absorb_on_touch = std::isinf(m0);
    const std::uint64_t max_steps =
        static_cast<std::uint64_t>(opts.b_time_cap_mult * horizon / dt);

    GaussianRng rng(seed);
    TimeChangeOutcome out;
    double x = start;
    double clock = 0.0;
    double excursion_clock = 0.0;
    bool in_excursion = false;
    double next_sample = 0.0;
    double rate_prev = rate(x);
    out.max_value = x;
    std::uint64_t k = 0;
    for (; k < max_steps; ++k) {
        double xn = x + sdt * rng.gaussian();
        if (xn < 0.0) xn = -xn;
        if (xn > opts.outer_wall) xn = 2.0 * opts.outer_wall - xn;
        const double rate_next = rate(xn);
        double dc = 0.5 * dt * (rate_prev + rate_next);
        if (xn < h_floor) {
            out.hit_floor = true;
            in_excursion = true;
            if (absorb_on_touch) {
                out.absorbed = true;
                break;
            }
            if (m0 > 0.0) dc += m0 * dt / (2.0 * h_floor);  // atom at 0 via local time
        } else if (xn > 2.0 * h_floor) {
            in_excursion = false;
            excursion_clock = 0.0;
        }
        if (in_excursion) {
            excursion_clock += dc;
            if (excursion_clock > budget) {
                out.absorbed = true;
                break;
            }
        }
        if (opts.sample_every > 0.0) {
            while (next_sample < clock + dc && next_sample <= horizon) {
                on_sample(next_sample, x);
                next_sample += opts.sample_every;
            }
        }
        clock += dc;
        x = xn;
        rate_prev = rate_next;
        out.max_value = std::max(out.max_value, x);
        if (x >= target) out.reached_target = true;
        if (clock >= horizon) break;
    }
    out.clock_end = clock;
    out.b_time = static_cast<double>(k) * dt;
    out.exhausted = !out.absorbed && clock < horizon;
    return out;
}

/// PathRecord of a time-changed run sampled on a uniform process-time grid.
template <class RateFn>
inline PathRecord time_changed_path(const RateFn& rate, double start, double horizon,
                                    double dt_out, std::uint64_t seed,
                                    const TimeChangeOptions& opts) {
    TimeChangeOptions o = opts;
    o.sample_every = dt_out;
    PathRecord p;
    p.meta.seed = seed;
    p.meta.dt = dt_out;
    p.meta.scheme = "time_changed";
    p.meta.reflected = true;
    auto out = run_time_changed(rate, start, horizon, seed, o, 2.0 * opts.outer_wall,
                                [&](double t, double x) {
                                    p.times.push_back(t);
                                    p.values.push_back(x);
                                    p.clock.push_back(t);
                                });
    p.meta.absorbed = out.absorbed;
    p.meta.truncated = out.exhausted;
    return p;
}

}  // namespace mfk
