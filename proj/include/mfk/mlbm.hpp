#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mfk/common.hpp"
#include "mfk/csv.hpp"
#include "mfk/diffusion_engine.hpp"
#include "mfk/field_sampler.hpp"
#include "mfk/phase_classifier.hpp"
#include "mfk/scaling_lab.hpp"

namespace mfk {

/// Multiplicative Liouville Brownian motion: reflected Brownian motion
/// time-changed by the chaos clock int ell(t, rho) |rho|^{-xi} mu(d rho).
struct MlbmSpec {
    double xi = 0.0;         // in [0, 2] for the model; the clock accepts any
    double gamma = 0.0;
    ChaosMeasure measure;    // grid must cover [0, wall]
    double boundary_weight = 0.0;  // M0: 0 reflect, finite atom, inf absorb
    double wall = 0.0;       // reflecting outer boundary; 0 = correlation length

    void validate() const {
        require(xi >= 0.0, "xi must be nonnegative");
        require(gamma >= 0.0 && gamma < kGammaMax, "gamma out of [0, sqrt(2)/2)");
        require(measure.grid != nullptr, "measure required");
        require(outer_wall() <= measure.grid->domain_halfwidth,
                "measure grid must cover [0, wall]");
    }
    double outer_wall() const {
        return wall > 0.0 ? wall : measure.grid->correlation_length;
    }
};

/// Clock rate per grid cell: |rho_i|^{-xi} w_i / dx at cell midpoints. The
/// origin sits on a cell edge, so the cells touching it use |dx/2|^{-xi};
/// the boundary atom M0 is handled by the time-change machinery, not here.
class MlbmClockRate {
  public:
    explicit MlbmClockRate(const MlbmSpec& spec) : grid_(spec.measure.grid) {
        spec.validate();
        const auto& g = *grid_;
        const double dx = g.dx();
        rate_.resize(g.values.size());
        for (std::size_t i = 0; i < rate_.size(); ++i) {
            const double mid = g.x_mid(static_cast<std::int64_t>(i));
            rate_[i] = std::pow(std::abs(mid), -spec.xi) * spec.measure.weights[i] / dx;
        }
    }

    double operator()(double x) const {
        return rate_[static_cast<std::size_t>(grid_->cell_of(x))];
    }

  private:
    std::shared_ptr<const FieldGrid> grid_;
    std::vector<double> rate_;
};

/// Chaos clock along a given reflected path: trapezoid of the cell-density
/// rate (path-integral estimator). The occupation-formula estimator over a
/// local-time grid is clock_via_occupation with the same rate.
inline std::vector<double> mlbm_clock(const PathRecord& path, const MlbmSpec& spec) {
    spec.validate();
    require(path.meta.reflected, "mlbm clock expects a reflected path");
    const MlbmClockRate rate(spec);
    const double W = spec.measure.grid->domain_halfwidth;
    for (double v : path.values)
        require(v >= 0.0 && v <= W, "path exits the measure support");
    std::vector<double> C(path.size(), 0.0);
    double prev = rate(path.values[0]);
    const double dt = path.meta.dt;
    for (std::size_t k = 1; k < path.size(); ++k) {
        const double cur = rate(path.values[k]);
        C[k] = C[k - 1] + 0.5 * dt * (prev + cur);
        prev = cur;
    }
    return C;
}

/// Occupation-formula estimate of the clock at the path end: exact time in
/// each measure cell (linear crossing accounting) against the cell rates.
inline double mlbm_clock_occupation(const PathRecord& path, const MlbmSpec& spec) {
    spec.validate();
    const auto& g = *spec.measure.grid;
    const double dx = g.dx();
    std::vector<double> occ(g.values.size(), 0.0);
    const double dt = path.meta.dt;
    for (std::size_t k = 0; k + 1 < path.size(); ++k) {
        const double a = path.values[k], b = path.values[k + 1];
        const double lo = std::min(a, b), hi = std::max(a, b);
        const auto i0 = g.cell_of(lo), i1 = g.cell_of(hi);
        if (i0 == i1) {
            occ[static_cast<std::size_t>(i0)] += dt;
            continue;
        }
        const double inv = dt / (hi - lo);
        for (std::int64_t i = i0; i <= i1; ++i) {
            const double cl = -g.domain_halfwidth + static_cast<double>(i) * dx;
            const double ov = std::min(hi, cl + dx) - std::max(lo, cl);
            if (ov > 0.0) occ[static_cast<std::size_t>(i)] += ov * inv;
        }
    }
    const MlbmClockRate rate(spec);
    double c = 0.0;
    for (std::size_t i = 0; i < occ.size(); ++i)
        if (occ[i] > 0.0) c += occ[i] * rate(g.x_mid(static_cast<std::int64_t>(i)));
    return c;
}

/// MLBM path on a uniform process-time grid.
inline PathRecord mlbm_path(const MlbmSpec& spec, double start, double horizon, double dt,
                            std::uint64_t seed, double dt_out = 0.0) {
    spec.validate();
    require(start > 0.0, "start must be positive");
    if (dt_out <= 0.0) dt_out = horizon / 1024.0;
    MlbmClockRate rate(spec);
    TimeChangeOptions opts;
    opts.dt = dt;
    opts.outer_wall = spec.outer_wall();
    opts.boundary_weight = spec.boundary_weight;
    return time_changed_path(rate, start, horizon, dt_out, seed, opts);
}

// ---------------------------------------------------------------------------
// Seiberg-bound integrability
// ---------------------------------------------------------------------------

struct SeibergReport {
    double xi = 0.0, gamma = 0.0, delta = 0.0;
    std::vector<TrendReport> per_realization;
    std::size_t n_convergent = 0, n_divergent = 0, n_indeterminate = 0;
    TrendClass majority = TrendClass::indeterminate;
};

/// Integrability of int_0^delta r^{-xi} mu(dr): per realization the partial
/// sums over decreasing cutoffs are classified by their increment trend, then
/// combined by majority vote.
inline SeibergReport seiberg_test(double xi, double gamma,
                                  const std::vector<ChaosMeasure>& ensemble, double delta = 0.1,
                                  std::vector<double> cutoffs = {}) {
    require(!ensemble.empty(), "need chaos realizations");
    SeibergReport rep;
    rep.xi = xi;
    rep.gamma = gamma;
    rep.delta = delta;
    for (const auto& mu : ensemble) {
        const auto& g = *mu.grid;
        const double dx = g.dx();
        std::vector<double> cuts = cutoffs;
        if (cuts.empty()) {
            // 8 log-spaced cutoffs from delta/10 down to 20 cells
            const double lo = std::max(20.0 * dx, 1e-6);
            require(lo < delta / 10.0, "grid too coarse for the cutoff ladder");
            for (int k = 0; k < 8; ++k)
                cuts.push_back(delta / 10.0 *
                               std::pow(lo / (delta / 10.0), static_cast<double>(k) / 7.0));
        }
        for (double c : cuts) require(c >= dx, "cutoff under-resolved");
        // cumulative sums I(eps) = sum_{eps <= rho_i <= delta} rho^-xi w_i
        std::vector<double> vals;
        for (double eps : cuts) {
            double acc = 0.0;
            const auto i0 = g.cell_of(eps);
            const auto i1 = g.cell_of(delta);
            for (std::int64_t i = i0; i <= i1; ++i) {
                const double mid = g.x_mid(i);
                if (mid < eps || mid > delta) continue;
                acc += std::pow(mid, -xi) * mu.weights[static_cast<std::size_t>(i)];
            }
            vals.push_back(acc);
        }
        auto tr = classify_trend(cuts, vals);
        rep.per_realization.push_back(tr);
        if (tr.cls == TrendClass::convergent)
            ++rep.n_convergent;
        else if (tr.cls == TrendClass::divergent)
            ++rep.n_divergent;
        else
            ++rep.n_indeterminate;
    }
    if (rep.n_convergent > rep.n_divergent)
        rep.majority = TrendClass::convergent;
    else if (rep.n_divergent > rep.n_convergent)
        rep.majority = TrendClass::divergent;
    return rep;
}

// ---------------------------------------------------------------------------
// Occupation statistics (thick-point visiting)
// ---------------------------------------------------------------------------

struct OccupationReport {
    std::vector<double> bin_centers;
    std::vector<double> time_fraction;
    double median_alpha = 0.0;
    double target_alpha = 0.0;
    double deviation = 0.0;  // median - target
    std::size_t n_samples = 0;
};

/// Uniform-process-time samples of the path, thick-point exponent at each
/// visited position, time-fraction histogram and median.
inline OccupationReport occupation_statistics(const PathRecord& path, const FieldGrid& field,
                                              std::vector<double> resolutions,
                                              double target_alpha,
                                              double bin_width = 0.1) {
    require(resolutions.size() >= 3, "need at least 3 resolutions");
    const ThickPointLadder ladder(field, resolutions);
    const double r_max = *std::max_element(resolutions.begin(), resolutions.end());
    const double W = field.domain_halfwidth;
    std::vector<double> alphas;
    alphas.reserve(path.size());
    for (double x : path.values) {
        require(std::abs(x) <= W, "path leaves the field domain");
        if (W - std::abs(x) < 0.5 * r_max) continue;  // window clipped at the edge
        alphas.push_back(ladder.alpha_at(ladder.cell_of(x)));
    }
    require(!alphas.empty(), "no usable path samples");
    OccupationReport rep;
    rep.n_samples = alphas.size();
    rep.target_alpha = target_alpha;
    double lo = *std::min_element(alphas.begin(), alphas.end());
    double hi = *std::max_element(alphas.begin(), alphas.end());
    const auto nb = static_cast<std::size_t>(std::ceil((hi - lo) / bin_width)) + 1;
    rep.bin_centers.resize(nb);
    rep.time_fraction.assign(nb, 0.0);
    for (std::size_t b = 0; b < nb; ++b)
        rep.bin_centers[b] = lo + (static_cast<double>(b) + 0.5) * bin_width;
    for (double a : alphas) {
        auto b = static_cast<std::size_t>((a - lo) / bin_width);
        if (b >= nb) b = nb - 1;
        rep.time_fraction[b] += 1.0;
    }
    for (auto& f : rep.time_fraction) f /= static_cast<double>(alphas.size());
    rep.median_alpha = median_inplace(alphas);
    rep.deviation = rep.median_alpha - target_alpha;
    return rep;
}

inline void export_occupation_csv(const OccupationReport& rep, const char* process_kind,
                                  double xi, double gamma, std::uint64_t seed,
                                  const std::string& path) {
    CsvWriter csv(path, {"alpha_bin", "time_fraction", "process_kind", "xi", "gamma", "seed"});
    for (std::size_t b = 0; b < rep.bin_centers.size(); ++b)
        csv.row(rep.bin_centers[b], rep.time_fraction[b], process_kind, xi, gamma, seed);
}

}  // namespace mfk
