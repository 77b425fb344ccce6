#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mfk/common.hpp"
#include "mfk/csv.hpp"
#include "mfk/diffusion_engine.hpp"
#include "mfk/fit.hpp"
#include "mfk/kraichnan_kernel.hpp"
#include "mfk/quadrature.hpp"
#include "mfk/rng.hpp"

namespace mfk {

enum class PhaseSetting { monofractal, mf_quenched, mf_annealed, mlbm_quenched, mlbm_annealed };
enum class Verdict { regular, exit, natural, indeterminate };
enum class VerdictMethod { analytic, empirical };

inline const char* to_string(PhaseSetting s) {
    switch (s) {
        case PhaseSetting::monofractal: return "monofractal";
        case PhaseSetting::mf_quenched: return "mf_quenched";
        case PhaseSetting::mf_annealed: return "mf_annealed";
        case PhaseSetting::mlbm_quenched: return "mlbm_quenched";
        case PhaseSetting::mlbm_annealed: return "mlbm_annealed";
    }
    return "?";
}

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::regular: return "regular";
        case Verdict::exit: return "exit";
        case Verdict::natural: return "natural";
        case Verdict::indeterminate: return "indeterminate";
    }
    return "?";
}

struct PhaseVerdict {
    double xi = 0.0;
    double gamma = 0.0;
    PhaseSetting setting = PhaseSetting::monofractal;
    Verdict verdict = Verdict::indeterminate;
    VerdictMethod method = VerdictMethod::analytic;
    bool near_boundary = false;
    // empirical diagnostics
    double hit_fraction = 0.0;
    double absorbed_fraction = 0.0;
    double branch_fraction = 0.0;
};

/// Boundary classification reduces to threshold comparisons of an effective
/// roughness exponent against (1, 2): the origin is regular below 1, exit on
/// [1, 2), natural at and above 2.
inline double effective_exponent(double xi, double gamma, PhaseSetting setting) {
    const double g2 = gamma * gamma;
    switch (setting) {
        case PhaseSetting::monofractal: return xi;
        case PhaseSetting::mf_quenched: return xi + 2.0 * g2;
        case PhaseSetting::mf_annealed: return xi + 4.0 * g2;
        case PhaseSetting::mlbm_quenched: return xi - 2.0 * g2;
        case PhaseSetting::mlbm_annealed: return xi;
    }
    return xi;
}

inline Verdict verdict_from_exponent(double e) {
    if (e < 1.0) return Verdict::regular;
    if (e < 2.0) return Verdict::exit;
    return Verdict::natural;
}

inline PhaseVerdict analytic_phase(double xi, double gamma, PhaseSetting setting) {
    require(xi >= 0.0, "xi must be nonnegative");
    require(gamma >= 0.0 && gamma < kGammaMax, "gamma out of [0, sqrt(2)/2)");
    PhaseVerdict v;
    v.xi = xi;
    v.gamma = gamma;
    v.setting = setting;
    v.method = VerdictMethod::analytic;
    const double e = effective_exponent(xi, gamma, setting);
    v.verdict = verdict_from_exponent(e);
    v.near_boundary = std::abs(e - 1.0) < 0.05 || std::abs(e - 2.0) < 0.05;
    return v;
}

/// The two model families classify identically after shifting the roughness
/// exponent by 4 gamma^2: MK at (xi, gamma) vs MLBM at (xi + 4 gamma^2, gamma),
/// in both the quenched and the annealed setting.
inline std::pair<PhaseVerdict, PhaseVerdict> phase_mapping_check(double xi, double gamma,
                                                                 bool annealed = false) {
    const auto mk = analytic_phase(
        xi, gamma, annealed ? PhaseSetting::mf_annealed : PhaseSetting::mf_quenched);
    const auto lbm = analytic_phase(
        xi + 4.0 * gamma * gamma, gamma,
        annealed ? PhaseSetting::mlbm_annealed : PhaseSetting::mlbm_quenched);
    if (mk.verdict != lbm.verdict)
        throw numerical_error("phase mapping mismatch at xi=" + std::to_string(xi) +
                              " gamma=" + std::to_string(gamma));
    return {mk, lbm};
}

// ---------------------------------------------------------------------------
// Divergence detection for boundary integrals
// ---------------------------------------------------------------------------

enum class TrendClass { convergent, divergent, indeterminate };

struct TrendReport {
    TrendClass cls = TrendClass::indeterminate;
    double slope = 0.0;       // d log(increment) / d log(eps)
    double slope_stderr = 0.0;
    std::vector<double> cutoffs;
    std::vector<double> values;  // I(eps)
};

/// Classifies I(eps) as eps -> 0 from the increments I(eps_{k+1}) - I(eps_k)
/// on a decreasing cutoff sequence. Growing increments mean divergence; a
/// positive log-log increment slope (significant at ~2 sigma) means the tail
/// sum converges; a nonpositive significant slope (power or log divergence)
/// means it diverges.
inline TrendReport classify_trend(const std::vector<double>& cutoffs,
                                  const std::vector<double>& values) {
    require(cutoffs.size() == values.size() && cutoffs.size() >= 4,
            "need >= 4 cutoffs for trend classification");
    TrendReport rep;
    rep.cutoffs = cutoffs;
    rep.values = values;
    std::vector<double> le, linc;
    for (std::size_t k = 0; k + 1 < cutoffs.size(); ++k) {
        require(cutoffs[k + 1] < cutoffs[k], "cutoffs must decrease");
        const double inc = values[k + 1] - values[k];
        if (inc <= 0.0) continue;  // exhausted below resolution
        le.push_back(std::log(cutoffs[k + 1]));
        linc.push_back(std::log(inc));
    }
    if (le.size() < 3) {
        // increments vanished immediately: nothing left to diverge
        rep.cls = TrendClass::convergent;
        return rep;
    }
    const auto f = fit_line(le, linc);
    rep.slope = f.slope;
    rep.slope_stderr = f.stderr_slope;
    // Decision threshold: twice the fit error when the sequence is precise
    // (closed forms, fine grids), capped by a deadband for noisy chaos sums
    // where the per-realization slope sign carries the information.
    const double thr = std::min(std::max(2.0 * f.stderr_slope, 1e-9), 0.02);
    if (f.slope > thr)
        rep.cls = TrendClass::convergent;
    else if (f.slope < -thr)
        rep.cls = TrendClass::divergent;
    else if (2.0 * f.stderr_slope <= 0.02)
        rep.cls = TrendClass::divergent;  // precisely flat increments: log divergence
    else
        rep.cls = TrendClass::indeterminate;
    return rep;
}

struct SpeedTestReport {
    TrendReport accessibility;  // I1(eps) = int_eps^delta r m(r) dr
    TrendReport exit_test;      // I2(eps) = int_eps^delta m(r) dr
    Verdict verdict = Verdict::indeterminate;
    bool accessible = false;
};

/// Feller-type boundary test on a speed density m: the origin is accessible
/// iff int_0 r m(r) dr converges, and (when accessible) regular iff
/// int_0 m(r) dr converges; inaccessible means natural for driftless
/// diffusions on the half line.
template <class DensityFn>
inline SpeedTestReport speed_integral_test(const DensityFn& m, double delta,
                                           std::vector<double> cutoffs = {}) {
    if (cutoffs.empty())
        for (double e = 1e-2; e >= 0.99e-8; e *= 0.1) cutoffs.push_back(e);
    require(cutoffs.front() < delta, "cutoffs must start below delta");
    std::vector<double> i1(cutoffs.size()), i2(cutoffs.size());
    double hi = delta;
    double acc1 = 0.0, acc2 = 0.0;
    for (std::size_t k = 0; k < cutoffs.size(); ++k) {
        const double lo = cutoffs[k];
        auto q1 = integrate([&](double r) { return r * m(r); }, lo, hi, 1e-9, 0.0, 4000);
        auto q2 = integrate([&](double r) { return m(r); }, lo, hi, 1e-9, 0.0, 4000);
        if (!q1.converged && q1.abs_error > 1e-5 * std::abs(q1.value + acc1))
            throw numerical_error("speed_integral_test: quadrature failure on subinterval");
        acc1 += q1.value;
        acc2 += q2.value;
        i1[k] = acc1;
        i2[k] = acc2;
        hi = lo;
    }
    SpeedTestReport rep;
    rep.accessibility = classify_trend(cutoffs, i1);
    rep.exit_test = classify_trend(cutoffs, i2);
    if (rep.accessibility.cls == TrendClass::divergent) {
        rep.accessible = false;
        rep.verdict = Verdict::natural;
    } else if (rep.accessibility.cls == TrendClass::convergent) {
        rep.accessible = true;
        if (rep.exit_test.cls == TrendClass::convergent)
            rep.verdict = Verdict::regular;
        else if (rep.exit_test.cls == TrendClass::divergent)
            rep.verdict = Verdict::exit;
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Vanishing-regularization study
// ---------------------------------------------------------------------------

struct RegularizationLimitReport {
    double xi = 0.0, beta = 0.0;
    std::vector<double> etas;
    std::vector<double> masses;  // m(( -eta, eta)) with kappa = eta^{2 xi / beta}
    double slope = 0.0;          // d log(mass) / d log(eta)
    int limit_class = 0;         // +1 -> 0, 0 -> O(1), -1 -> infinity
};

/// Boundary-layer mass of the speed measure under the beta-regularized norm
/// with kappa = eta^{2 xi / beta}, swept over decreasing eta. The sign of the
/// log-log trend separates the vanishing / order-one / diverging limits.
inline RegularizationLimitReport regularization_limit_study(double xi, double beta,
                                                            std::vector<double> etas = {},
                                                            double slope_tol = 0.05) {
    require(xi > 0.0 && xi <= 2.0, "xi out of (0, 2]");
    require(beta > 0.0, "beta must be positive");
    if (etas.empty())
        for (double e = 1e-2; e >= 0.99e-8; e *= 0.1) etas.push_back(e);
    RegularizationLimitReport rep;
    rep.xi = xi;
    rep.beta = beta;
    rep.etas = etas;
    for (double eta : etas) {
        const double kappa = std::pow(eta, 2.0 * xi / beta);
        auto f = [&](double r) {
            return 1.0 / (2.0 * (std::pow(regularized_norm(r, eta, beta), xi) + kappa));
        };
        // integrand is bounded but varies over decades; split logarithmically
        double mass = 0.0;
        double hi = eta;
        for (int k = 0; k < 40 && hi > 1e-14 * eta; ++k) {
            const double lo = hi * 0.25;
            auto q = integrate(f, lo, hi, 1e-9, 0.0, 2000);
            if (!q.converged && q.abs_error > 1e-5 * std::abs(mass + q.value))
                throw numerical_error("regularization_limit_study: quadrature failure");
            mass += q.value;
            hi = lo;
        }
        mass += f(0.0) * hi;  // flat remainder near zero
        rep.masses.push_back(2.0 * mass);  // symmetric interval (-eta, eta)
    }
    std::vector<double> le(etas.size()), lm(etas.size());
    for (std::size_t k = 0; k < etas.size(); ++k) {
        le[k] = std::log(etas[k]);
        lm[k] = std::log(rep.masses[k]);
    }
    rep.slope = fit_line(le, lm).slope;
    rep.limit_class = rep.slope > slope_tol ? +1 : (rep.slope < -slope_tol ? -1 : 0);
    return rep;
}

// ---------------------------------------------------------------------------
// Annealed speed density
// ---------------------------------------------------------------------------

/// Evaluable speed density on a log-spaced grid; log-log interpolation with
/// power-law continuation below the first node, clamped above the last.
struct SpeedDensity {
    bool quenched = false;
    std::vector<double> r;        // ascending, positive
    std::vector<double> density;  // m(r) = E 1 / (2 A(r)) or a quenched value

    double operator()(double rr) const {
        require(r.size() >= 2, "empty speed density");
        const double lr = std::log(std::abs(rr));
        const double l0 = std::log(r.front());
        if (lr <= l0) {
            const double step = std::log(r[1]) - l0;
            const double s = (std::log(density[1]) - std::log(density[0])) / step;
            return density[0] * std::exp(s * (lr - l0));
        }
        if (lr >= std::log(r.back())) return density.back();
        const auto it = std::upper_bound(r.begin(), r.end(), std::abs(rr));
        const auto k = static_cast<std::size_t>(it - r.begin()) - 1;
        const double lk = std::log(r[k]);
        const double t = (lr - lk) / (std::log(r[k + 1]) - lk);
        return std::exp(std::log(density[k]) * (1.0 - t) + std::log(density[k + 1]) * t);
    }
};

/// Ensemble average of the inverse quenched coefficient at grid-aligned
/// separations near the requested r grid.
inline SpeedDensity annealed_speed_density(const KernelSpec& spec,
                                           const std::vector<ChaosMeasure>& ensemble,
                                           const std::vector<double>& r_grid,
                                           double kappa = 0.0) {
    require(ensemble.size() >= 2, "need an ensemble of chaos realizations");
    const auto& g = *ensemble.front().grid;
    QuenchedKernelTable tab(spec, g.n_points, g.domain_halfwidth);
    std::vector<std::int64_t> cells;
    for (double r : r_grid) {
        const auto k = tab.snap(r);
        if (k >= 1 && (cells.empty() || k != cells.back())) cells.push_back(k);
    }
    require(cells.size() >= 2, "r grid collapses under grid alignment");
    SpeedDensity out;
    out.quenched = false;
    for (auto k : cells) out.r.push_back(static_cast<double>(k) * g.dx());
    out.density.assign(cells.size(), 0.0);
    for (const auto& mu : ensemble)
        for (std::size_t j = 0; j < cells.size(); ++j)
            out.density[j] += 0.5 / tab.evaluate(cells[j], mu, kappa);
    for (auto& d : out.density) d /= static_cast<double>(ensemble.size());
    return out;
}

// ---------------------------------------------------------------------------
// Empirical phase verdicts
// ---------------------------------------------------------------------------

struct EmpiricalPhaseConfig {
    double horizon = 5.0;
    double r0_hit = 0.1;
    double r0_branch = 1e-3;
    double branch_target = 0.1;
    std::size_t n_paths = 400;
    double dt = 1e-5;
    double outer_wall = 1.0;
    double hit_threshold = 0.35;      // at or below: inaccessible at this resolution
    double absorb_threshold = 0.5;    // among hitting paths: exit
    double branch_natural_max = 0.05; // natural also requires no branching
    double branch_regular_min = 0.5;  // regular requires branching from below
    unsigned jobs = 1;
};

/// One clock rate per quenched realization; deterministic settings pass one.
using ClockRate = std::function<double(double)>;

namespace detail {

struct PhaseCellStats {
    double hit_fraction = 0.0;
    double absorbed_fraction = 0.0;
    double branch_fraction = 0.0;
};

inline PhaseCellStats phase_statistics(const ClockRate& rate, const EmpiricalPhaseConfig& cfg,
                                       std::uint64_t seed) {
    TimeChangeOptions opts;
    opts.dt = cfg.dt;
    opts.outer_wall = cfg.outer_wall;
    PhaseCellStats st;
    std::vector<int> hit(cfg.n_paths), absorbed(cfg.n_paths), branch(cfg.n_paths);
    parallel_tasks(cfg.n_paths, cfg.jobs, [&](unsigned, std::size_t i) {
        auto a = run_time_changed(rate, cfg.r0_hit, cfg.horizon,
                                  derive_seed(seed, "phase-hit", i), opts,
                                  2.0 * cfg.outer_wall, [](double, double) {});
        hit[i] = a.hit_floor ? 1 : 0;
        absorbed[i] = a.absorbed ? 1 : 0;
        auto b = run_time_changed(rate, cfg.r0_branch, cfg.horizon,
                                  derive_seed(seed, "phase-branch", i), opts,
                                  cfg.branch_target, [](double, double) {});
        branch[i] = b.reached_target ? 1 : 0;
    });
    double nh = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < cfg.n_paths; ++i) {
        nh += hit[i];
        na += absorbed[i];
        nb += branch[i];
    }
    st.hit_fraction = nh / static_cast<double>(cfg.n_paths);
    st.absorbed_fraction = nh > 0 ? na / nh : 0.0;
    st.branch_fraction = nb / static_cast<double>(cfg.n_paths);
    return st;
}

inline Verdict verdict_from_stats(const PhaseCellStats& st, const EmpiricalPhaseConfig& cfg) {
    if (st.hit_fraction <= cfg.hit_threshold && st.branch_fraction <= cfg.branch_natural_max)
        return Verdict::natural;
    if (st.absorbed_fraction >= cfg.absorb_threshold) return Verdict::exit;
    if (st.branch_fraction >= cfg.branch_regular_min) return Verdict::regular;
    return Verdict::indeterminate;
}

}  // namespace detail

/// Monte Carlo verdict from three statistics of the time-changed process:
/// hitting of the origin from r0 = 0.1 within the horizon, clock-budget
/// exceedance at the origin, and branching from r0 = 1e-3 up to 0.1. For
/// quenched settings pass one clock rate per chaos realization (>= 30); the
/// per-realization verdicts are combined by majority, ties reported as
/// indeterminate. Near-boundary parameters are routed to the analytic
/// classifier and flagged.
inline PhaseVerdict empirical_phase(const std::vector<ClockRate>& clock_rates, double xi,
                                    double gamma, PhaseSetting setting,
                                    const EmpiricalPhaseConfig& cfg, std::uint64_t seed) {
    require(!clock_rates.empty(), "need at least one clock rate");
    const bool quenched_setting =
        setting == PhaseSetting::mf_quenched || setting == PhaseSetting::mlbm_quenched;
    if (quenched_setting)
        require(clock_rates.size() >= 30, "quenched settings require >= 30 realizations");

    PhaseVerdict out = analytic_phase(xi, gamma, setting);
    if (out.near_boundary) return out;  // MC cannot resolve boundary lines
    out.method = VerdictMethod::empirical;

    std::size_t votes[4] = {0, 0, 0, 0};
    double hf = 0, af = 0, bf = 0;
    for (std::size_t r = 0; r < clock_rates.size(); ++r) {
        const auto st = detail::phase_statistics(clock_rates[r], cfg, derive_seed(seed, "cell", r));
        hf += st.hit_fraction;
        af += st.absorbed_fraction;
        bf += st.branch_fraction;
        ++votes[static_cast<int>(detail::verdict_from_stats(st, cfg))];
    }
    const auto n = static_cast<double>(clock_rates.size());
    out.hit_fraction = hf / n;
    out.absorbed_fraction = af / n;
    out.branch_fraction = bf / n;
    std::size_t best = 0;
    for (std::size_t v = 1; v < 4; ++v)
        if (votes[v] > votes[best]) best = v;
    bool tie = false;
    for (std::size_t v = 0; v < 4; ++v)
        if (v != best && votes[v] == votes[best]) tie = true;
    out.verdict = tie ? Verdict::indeterminate : static_cast<Verdict>(best);
    return out;
}

// ---------------------------------------------------------------------------
// Phase-diagram rasters
// ---------------------------------------------------------------------------

struct RasterCell {
    double xi, gamma;
    Verdict verdict;
};

inline std::vector<RasterCell> verdict_raster(PhaseSetting setting, double xi_lo, double xi_hi,
                                              std::size_t nx, double g_lo, double g_hi,
                                              std::size_t ng) {
    std::vector<RasterCell> out;
    out.reserve(nx * ng);
    for (std::size_t j = 0; j < ng; ++j) {
        const double g = g_lo + (g_hi - g_lo) * (static_cast<double>(j) + 0.5) /
                                    static_cast<double>(ng);
        for (std::size_t i = 0; i < nx; ++i) {
            const double x = xi_lo + (xi_hi - xi_lo) * (static_cast<double>(i) + 0.5) /
                                         static_cast<double>(nx);
            out.push_back({x, g, analytic_phase(x, g, setting).verdict});
        }
    }
    return out;
}

inline void export_phase_csv(const std::vector<PhaseVerdict>& verdicts, const std::string& path) {
    CsvWriter csv(path, {"xi", "gamma", "setting", "verdict", "method", "flags"});
    for (const auto& v : verdicts)
        csv.row(v.xi, v.gamma, to_string(v.setting), to_string(v.verdict),
                v.method == VerdictMethod::analytic ? "analytic" : "empirical",
                v.near_boundary ? "near-boundary" : "");
}

}  // namespace mfk
