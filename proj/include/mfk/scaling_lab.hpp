#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mfk/common.hpp"
#include "mfk/field_sampler.hpp"
#include "mfk/fit.hpp"
#include "mfk/grid.hpp"
#include "mfk/rng.hpp"

namespace mfk {

// ---------------------------------------------------------------------------
// Closed-form exponent families
// ---------------------------------------------------------------------------

/// zeta_U(p) = (xi/2 + gamma^2) p - gamma^2 p^2 / 2
inline double zeta_u(double p, double xi, double gamma) {
    return (0.5 * xi + gamma * gamma) * p - 0.5 * gamma * gamma * p * p;
}

/// zeta_A(p) = zeta_U(2p) = (xi + 2 gamma^2) p - 2 gamma^2 p^2
inline double zeta_a(double p, double xi, double gamma) { return zeta_u(2.0 * p, xi, gamma); }

/// Mass-moment exponent correction tau(p) = 2 gamma^2 p (1 - p).
inline double tau_exponent(double p, double gamma) { return 2.0 * gamma * gamma * p * (1.0 - p); }

/// Singularity spectrum D_alpha = (1 - alpha^2/2)_+.
inline double spectrum_dimension(double alpha) {
    return std::max(0.0, 1.0 - 0.5 * alpha * alpha);
}

/// Legendre form of the mass exponents: inf over alpha in (-sqrt2, sqrt2) of
/// alpha^2/2 + 2 p gamma (gamma - alpha). Coincides with tau(p) while the
/// minimizer alpha* = 2 p gamma stays inside the window, then linear in p.
inline double legendre_tau(double p, double gamma) {
    constexpr double sqrt2 = 1.41421356237309504880;
    double a = 2.0 * p * gamma;
    a = std::clamp(a, -sqrt2, sqrt2);
    return 0.5 * a * a + 2.0 * p * gamma * (gamma - a);
}

struct ExponentEntry {
    std::string name;
    double p;
    double value;
};

struct ExponentTable {
    double xi = 0.0;
    double gamma = 0.0;
    std::vector<ExponentEntry> entries;

    // derived parameters
    double xi_eff = 0.0;    // xi + 2 gamma^2
    double xi_mf = 0.0;     // xi + 4 gamma^2
    double xi_min = 0.0;    // xi + 2 gamma^2 - 2 sqrt2 gamma
    double holder_bar = 0.0;   // xi/2 + gamma^2
    double holder_min = 0.0;
    double holder_max = 0.0;
    double flatness = 0.0;  // zeta_U(4) - 2 zeta_U(2) = -16 gamma^2

    double find(const std::string& name, double p) const {
        for (const auto& e : entries)
            if (e.name == name && e.p == p) return e.value;
        throw invalid_parameter("no exponent entry " + name);
    }
};

inline ExponentTable closed_form_exponents(double xi, double gamma, std::span<const double> p_list) {
    require(xi > 0.0 && xi <= 2.0, "xi out of (0, 2]");
    require(gamma >= 0.0 && gamma < kGammaMax, "gamma out of [0, sqrt(2)/2)");
    constexpr double sqrt2 = 1.41421356237309504880;
    ExponentTable t;
    t.xi = xi;
    t.gamma = gamma;
    for (double p : p_list) {
        t.entries.push_back({"zeta_U", p, zeta_u(p, xi, gamma)});
        t.entries.push_back({"zeta_A", p, zeta_a(p, xi, gamma)});
        t.entries.push_back({"tau", p, tau_exponent(p, gamma)});
        t.entries.push_back({"legendre_tau", p, legendre_tau(p, gamma)});
    }
    t.xi_eff = xi + 2.0 * gamma * gamma;
    t.xi_mf = xi + 4.0 * gamma * gamma;
    t.xi_min = xi + 2.0 * gamma * gamma - 2.0 * sqrt2 * gamma;
    t.holder_bar = 0.5 * xi + gamma * gamma;
    t.holder_min = t.holder_bar - sqrt2 * gamma;
    t.holder_max = t.holder_bar + sqrt2 * gamma;
    t.flatness = -16.0 * gamma * gamma;
    return t;
}

// ---------------------------------------------------------------------------
// Moment-scaling fits
// ---------------------------------------------------------------------------

/// One member of a scaling ensemble: values sampled on a common r grid.
struct ScalingCurve {
    std::vector<double> r;
    std::vector<double> value;
};

struct ScalingFit {
    double p = 0.0;
    double slope = 0.0;     // fitted zeta(p)/p
    double stderr_slope = 0.0;  // bootstrap standard error
    double r_min = 0.0, r_max = 0.0;
    std::size_t n_samples = 0;
    double fit_r2 = 0.0;    // residual diagnostic of the final fit
};

namespace detail {

inline double moment_slope(const std::vector<const ScalingCurve*>& members, double p,
                           std::span<const std::size_t> keep, double r_min, double r_max,
                           double* r2 = nullptr) {
    const auto& r = members.front()->r;
    std::vector<double> lr, lm;
    for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[j] < r_min || r[j] > r_max) continue;
        double acc = 0.0;
        for (std::size_t k : keep) acc += std::pow(members[k]->value[j], p);
        require(acc > 0.0, "nonpositive moment; cannot take log");
        lr.push_back(std::log(r[j]));
        lm.push_back(std::log(acc / static_cast<double>(keep.size())) / p);
    }
    require(lr.size() >= 3, "fewer than 3 separations inside the fit range");
    auto f = fit_line(lr, lm);
    if (r2) *r2 = f.r2;
    return f.slope;
}

}  // namespace detail

/// Compensated-moment estimator: ensemble mean of value^p per separation,
/// slope of log(mean)/p against log r, bootstrap stderr over members.
inline ScalingFit fit_moment_scaling(std::span<const ScalingCurve> ensemble, double p,
                                     double r_min, double r_max,
                                     std::size_t n_bootstrap = 1000,
                                     std::uint64_t bootstrap_seed = 0x5eedULL) {
    require(p != 0.0, "p must be nonzero");
    require(!ensemble.empty(), "empty ensemble");
    require(r_min < r_max, "empty fit range");
    const std::size_t n = ensemble.size();
    std::vector<const ScalingCurve*> members(n);
    for (std::size_t i = 0; i < n; ++i) {
        members[i] = &ensemble[i];
        require(ensemble[i].r == ensemble[0].r, "ensemble members must share the r grid");
        if (p != std::floor(p))
            for (double v : ensemble[i].value)
                require(v > 0.0, "nonpositive sample with non-integer p");
    }
    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;

    ScalingFit out;
    out.p = p;
    out.r_min = r_min;
    out.r_max = r_max;
    out.n_samples = n;
    out.slope = detail::moment_slope(members, p, all, r_min, r_max, &out.fit_r2);

    if (n_bootstrap > 0 && n > 1) {
        GaussianRng rng(bootstrap_seed);
        std::vector<double> slopes;
        slopes.reserve(n_bootstrap);
        std::vector<std::size_t> res(n);
        for (std::size_t b = 0; b < n_bootstrap; ++b) {
            for (std::size_t i = 0; i < n; ++i)
                res[i] = static_cast<std::size_t>(rng.raw() % n);
            slopes.push_back(detail::moment_slope(members, p, res, r_min, r_max));
        }
        out.stderr_slope = sample_sd(slopes);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Thick points and the singularity spectrum
// ---------------------------------------------------------------------------

/// Precomputed box averages of a field at a ladder of resolutions, with the
/// per-position thick-point estimate alpha_hat(x) = OLS slope of Gamma_r(x)
/// against -log r.
class ThickPointLadder {
  public:
    ThickPointLadder(const FieldGrid& field, std::span<const double> resolutions)
        : dx_(field.dx()), halfwidth_(field.domain_halfwidth) {
        require(resolutions.size() >= 3, "need at least 3 resolutions");
        for (double r : resolutions) {
            require(r > field.dx() && r < field.correlation_length,
                    "resolutions must lie in (dx, L)");
            x_.push_back(-std::log(r));
            levels_.push_back(remollified_field(field, r));
        }
        const double xm = mean(x_);
        den_ = 0.0;
        for (auto& x : x_) den_ += (x - xm) * (x - xm);
        xm_ = xm;
    }

    double alpha_at(std::size_t cell) const {
        double ym = 0.0;
        for (const auto& lv : levels_) ym += lv[cell];
        ym /= static_cast<double>(levels_.size());
        double num = 0.0;
        for (std::size_t k = 0; k < levels_.size(); ++k)
            num += (x_[k] - xm_) * (levels_[k][cell] - ym);
        return num / den_;
    }

    std::size_t cell_of(double x) const {
        auto i = static_cast<std::int64_t>((x + halfwidth_) / dx_);
        return static_cast<std::size_t>(std::clamp<std::int64_t>(
            i, 0, static_cast<std::int64_t>(levels_.front().size()) - 1));
    }

  private:
    double dx_, halfwidth_, xm_ = 0.0, den_ = 0.0;
    std::vector<double> x_;
    std::vector<std::vector<double>> levels_;
};

/// alpha_hat for a list of positions.
inline std::vector<double> thick_point_exponents(const FieldGrid& field,
                                                 std::span<const double> resolutions,
                                                 std::span<const double> points) {
    ThickPointLadder ladder(field, resolutions);
    std::vector<double> out;
    out.reserve(points.size());
    for (double x : points) {
        require(std::abs(x) <= field.domain_halfwidth, "point outside domain");
        out.push_back(ladder.alpha_at(ladder.cell_of(x)));
    }
    return out;
}

struct SpectrumBin {
    double alpha = 0.0;
    double d_hat = 0.0;
    std::uint64_t n_boxes = 0;  // total count across scales
};

/// Coarse singularity spectrum: at each dyadic scale r, counts boxes whose
/// box-averaged field lies in a fixed-width window around alpha log(1/r);
/// D_hat is the count-weighted slope of log N against log(1/r). Bins with
/// fewer than 3 populated scales report D_hat = 0 (empty / near-empty).
inline std::vector<SpectrumBin> singularity_spectrum(const FieldGrid& field,
                                                     std::span<const double> alpha_bins,
                                                     int coarsest_level = 5,
                                                     double window = 1.0) {
    const auto n = static_cast<std::size_t>(field.n_points);
    const double dx = field.dx();
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + field.values[i];

    // dyadic box scales from 2^-coarsest down to ~64 dx
    std::vector<std::size_t> box_cells;
    std::vector<double> ells;
    for (int k = coarsest_level;; ++k) {
        const double r = std::pow(2.0, -k);
        const auto h = static_cast<std::size_t>(std::llround(r / dx));
        if (h < 64) break;
        if (r >= field.correlation_length) continue;
        box_cells.push_back(h);
        ells.push_back(std::log(1.0 / r));
    }
    require(box_cells.size() >= 4, "need >= 4 resolutions; grid too small");

    std::vector<SpectrumBin> out;
    for (double a : alpha_bins) {
        std::vector<double> lx, ly, lw;
        std::uint64_t total = 0;
        for (std::size_t s = 0; s < box_cells.size(); ++s) {
            const std::size_t h = box_cells[s];
            const double target = a * ells[s];
            std::uint64_t cnt = 0;
            for (std::size_t b = 0; b + h <= n; b += h) {
                const double avg = (cum[b + h] - cum[b]) / static_cast<double>(h);
                if (std::abs(avg - target) <= 0.5 * window) ++cnt;
            }
            total += cnt;
            if (cnt > 0) {
                lx.push_back(ells[s]);
                ly.push_back(std::log(static_cast<double>(cnt)));
                lw.push_back(static_cast<double>(cnt));
            }
        }
        SpectrumBin bin;
        bin.alpha = a;
        bin.n_boxes = total;
        bin.d_hat = lx.size() >= 3 ? fit_line(lx, ly, lw).slope : 0.0;
        out.push_back(bin);
    }
    return out;
}

}  // namespace mfk
