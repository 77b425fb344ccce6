#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mfk/common.hpp"
#include "mfk/csv.hpp"
#include "mfk/grid.hpp"
#include "mfk/quadrature.hpp"

namespace mfk {

/// Large-scale cutoff profiles. The smooth tanh profile is the production
/// choice; the box profile (exactly 1 on |x| <= 2) exists for closed-form
/// cross-checks.
enum class PsiProfile { tanh_smooth, box };

/// psi evaluated on the scaled coordinate x / L; even in x, zero beyond 2.
inline double psi_cutoff(double x, PsiProfile profile = PsiProfile::tanh_smooth) {
    const double ax = std::abs(x);
    if (ax > 2.0) return 0.0;
    if (profile == PsiProfile::box) return 1.0;
    return 0.5 - 0.5 * std::tanh(4.0 * ax - 1.5);
}

/// beta-regularized norm: |r| above eta, quadratic cap below.
inline double regularized_norm(double r, double eta, double beta) {
    require(eta > 0.0 && beta > 0.0, "regularized_norm: eta, beta must be positive");
    const double cap = std::pow(eta, 2.0 / beta - 1.0);
    require(cap < 2.0, "regularized_norm: eta^(2/beta-1) >= 2 makes the cap nonpositive");
    const double ar = std::abs(r);
    if (ar > eta) return ar;
    const double C = 2.0 / (2.0 - cap);
    return ar * ar / (C * eta) + 0.5 * std::pow(eta, 2.0 / beta);
}

/// Parameters of the filtering kernel phi.
/// beta controls the sub-cutoff cap of |.|_eta; beta = 2 keeps |0|_eta = O(eta)
/// and makes A_{eta,kappa} converge to the unregularized coefficient (smaller
/// beta caps at O(eta^{2/beta}), inflating the kernel below the cutoff).
struct KernelSpec {
    double xi = 2.0 / 3.0;   // roughness exponent in (0, 2]
    double L = 1.0;          // correlation length
    double eta = 0.0;        // small-scale cutoff (0 = unregularized)
    double beta = 2.0;       // shape of |.|_eta inside the kernel
    PsiProfile psi = PsiProfile::tanh_smooth;

    void validate() const {
        require(xi > 0.0 && xi <= 2.0, "xi out of (0, 2]");
        require(L > 0.0, "L must be positive");
        require(eta >= 0.0 && beta > 0.0, "eta >= 0 and beta > 0 required");
    }
};

/// Filtering kernel phi_eta(x) = L^{-xi/2} psi(x/L) x / |x|_eta^{3/2 - xi/2}.
/// Odd in x, zero beyond 2L.
inline double rv_kernel(double x, const KernelSpec& spec) {
    if (x == 0.0) return 0.0;
    const double ax = std::abs(x);
    if (ax > 2.0 * spec.L) return 0.0;
    const double nrm = spec.eta > 0.0 ? regularized_norm(x, spec.eta, spec.beta) : ax;
    return std::pow(spec.L, -0.5 * spec.xi) * psi_cutoff(x / spec.L, spec.psi) * x *
           std::pow(nrm, 0.5 * spec.xi - 1.5);
}

/// Structure-function coefficient A_{eta,kappa}(r) by adaptive quadrature of
/// the squared kernel increment; relative tolerance 1e-6, subdivision forced
/// at the integrable singularities z = 0 and z = r.
inline double diffusion_coefficient(double r, const KernelSpec& spec, double kappa = 0.0) {
    spec.validate();
    require(kappa >= 0.0, "kappa must be nonnegative");
    r = std::abs(r);  // A is even
    if (r == 0.0) return kappa;
    const double L = spec.L;
    auto f = [&](double z) {
        const double d = rv_kernel(r - z, spec) - rv_kernel(-z, spec);
        return d * d;
    };
    QuadResult q = integrate_with_splits(f, -2.0 * L, 2.0 * L + r, {0.0, r, r - 2.0 * L, 2.0 * L},
                                         1e-8, 0.0, 6000);
    if (!q.converged && q.abs_error > 1e-6 * std::abs(q.value))
        throw numerical_error("diffusion_coefficient: quadrature tolerance not met (err " +
                              std::to_string(q.abs_error) + ")");
    return 0.5 * q.value + kappa;
}

/// Dimensionless prefactor c_d(rho) with A(r) = c_d(r/L) (r/L)^xi in the
/// unregularized case. Integrable singularities at z = 0 and z = -1.
inline double prefactor_cd(double rho, double xi, PsiProfile profile = PsiProfile::tanh_smooth) {
    require(rho > 0.0 && rho < 1.0, "rho out of (0, 1)");
    require(xi > 0.0 && xi <= 2.0, "xi out of (0, 2]");
    const double ex = 1.5 - 0.5 * xi;
    auto term = [&](double u, double scaled) {
        if (u == 0.0) return 0.0;
        return psi_cutoff(scaled, profile) * u / std::pow(std::abs(u), ex);
    };
    auto f = [&](double z) {
        const double d = term(1.0 + z, rho * (1.0 + z)) - term(z, rho * z);
        return d * d;
    };
    const double lo = -1.0 - 2.0 / rho, hi = 2.0 / rho;
    QuadResult q = integrate_with_splits(f, lo, hi,
                                         {-1.0, 0.0, 2.0 / rho - 1.0, -2.0 / rho}, 1e-8, 0.0, 6000);
    if (!q.converged && q.abs_error > 1e-6 * std::abs(q.value))
        throw numerical_error("prefactor_cd: quadrature tolerance not met");
    return 0.5 * q.value;
}

/// Chaos-integral coefficient: midpoint-rule sum of the squared kernel
/// increment against the measure weights, plus kappa. The measure grid must
/// cover [-2L, 2L + r].
inline double quenched_diffusion_coefficient(double r, const KernelSpec& spec,
                                             const ChaosMeasure& mu, double kappa = 0.0) {
    spec.validate();
    r = std::abs(r);
    const FieldGrid& g = *mu.grid;
    require(-g.domain_halfwidth <= -2.0 * spec.L && g.domain_halfwidth >= 2.0 * spec.L + r,
            "measure grid does not cover the kernel support [-2L, 2L + r]");
    const double W = g.domain_halfwidth, dx = g.dx();
    const auto ilo = static_cast<std::int64_t>(std::floor((-2.0 * spec.L - r + W) / dx));
    const auto ihi = static_cast<std::int64_t>(std::ceil((2.0 * spec.L + r + W) / dx));
    double acc = 0.0;
    for (std::int64_t i = std::max<std::int64_t>(0, ilo);
         i < std::min<std::int64_t>(g.n_points, ihi); ++i) {
        const double z = g.x_mid(i);
        const double d = rv_kernel(r - z, spec) - rv_kernel(-z, spec);
        acc += d * d * mu.weights[static_cast<std::size_t>(i)];
    }
    return 0.5 * acc + kappa;
}

/// Precomputed kernel samples at half-cell offsets for fast repeated
/// evaluation of the chaos-integral coefficient on a fixed grid geometry.
/// Separations are snapped to whole cells; the result matches
/// quenched_diffusion_coefficient at grid-aligned r to rounding error.
class QuenchedKernelTable {
  public:
    QuenchedKernelTable(const KernelSpec& spec, std::int64_t n_points, double halfwidth)
        : spec_(spec), n_(n_points), dx_(2.0 * halfwidth / static_cast<double>(n_points)),
          halfwidth_(halfwidth) {
        spec.validate();
        half_k_ = static_cast<std::int64_t>(std::ceil(2.0 * spec.L / dx_)) + 2;
        table_.resize(static_cast<std::size_t>(2 * half_k_ + 1));
        for (std::int64_t j = -half_k_; j <= half_k_; ++j)
            table_[static_cast<std::size_t>(j + half_k_)] =
                rv_kernel((static_cast<double>(j) + 0.5) * dx_, spec_);
    }

    double dx() const { return dx_; }
    std::int64_t snap(double r) const { return std::llround(std::abs(r) / dx_); }

    /// A^(gamma)(k dx) as the midpoint-rule sum against the weights.
    double evaluate(std::int64_t k_cells, const ChaosMeasure& mu, double kappa = 0.0) const {
        require(mu.grid->n_points == n_ && std::abs(mu.grid->dx() - dx_) < 1e-12 * dx_,
                "measure grid does not match the kernel table geometry");
        const double r = static_cast<double>(k_cells) * dx_;
        require(halfwidth_ >= 2.0 * spec_.L + r,
                "measure grid does not cover the kernel support [-2L, 2L + r]");
        const std::int64_t h = n_ / 2;
        const std::int64_t ilo = std::max<std::int64_t>(
            0, h - half_k_ - 1);
        const std::int64_t ihi = std::min<std::int64_t>(
            n_, k_cells + h + half_k_ + 1);
        const double* w = mu.weights.data();
        double acc = 0.0;
        for (std::int64_t i = ilo; i < ihi; ++i) {
            const double d = phi_half(k_cells - i + h - 1) - phi_half(h - i - 1);
            acc += d * d * w[i];
        }
        return 0.5 * acc + kappa;
    }

  private:
    double phi_half(std::int64_t j) const {
        if (j < -half_k_ || j > half_k_) return 0.0;
        return table_[static_cast<std::size_t>(j + half_k_)];
    }

    KernelSpec spec_;
    std::int64_t n_;
    double dx_, halfwidth_;
    std::int64_t half_k_ = 0;
    std::vector<double> table_;
};

// ---------------------------------------------------------------------------
// Tabulated diffusion profiles
// ---------------------------------------------------------------------------

enum class ProfileKind { deterministic, quenched };

/// Tabulated A(r) on a log-spaced grid with log-log interpolation. Below the
/// first node the first segment's power law is continued; above the last node
/// the last value is held. Evaluation floors at kappa + 1e-30 (the
/// unregularized profile is genuinely singular at zero).
struct DiffusionProfile {
    ProfileKind kind = ProfileKind::deterministic;
    double kappa = 0.0;
    KernelSpec params;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    bool uniform = true;         // uniform log spacing enables O(1) lookup
    std::vector<double> log_r;   // ascending
    std::vector<double> log_a;   // log of the kappa-free coefficient

    double operator()(double r) const {
        r = std::abs(r);
        double v;
        if (r <= 0.0) {
            v = 0.0;
        } else {
            const double lr = std::log(r);
            if (lr <= log_r.front()) {
                const double step0 = log_r[1] - log_r[0];
                const double slope = (log_a[1] - log_a[0]) / step0;
                v = std::exp(log_a.front() + slope * (lr - log_r.front()));
            } else if (lr >= log_r.back()) {
                v = std::exp(log_a.back());
            } else {
                std::size_t k;
                if (uniform) {
                    const double step = (log_r.back() - log_r.front()) /
                                        static_cast<double>(log_r.size() - 1);
                    k = static_cast<std::size_t>((lr - log_r.front()) / step);
                    k = std::min(k, log_r.size() - 2);
                    while (k > 0 && lr < log_r[k]) --k;
                    while (k + 2 < log_r.size() && lr >= log_r[k + 1]) ++k;
                } else {
                    k = static_cast<std::size_t>(
                            std::upper_bound(log_r.begin(), log_r.end(), lr) - log_r.begin()) - 1;
                }
                const double t = (lr - log_r[k]) / (log_r[k + 1] - log_r[k]);
                v = std::exp(log_a[k] * (1.0 - t) + log_a[k + 1] * t);
            }
        }
        return std::max(v + kappa, kappa + 1e-30);
    }

    double r_min() const { return std::exp(log_r.front()); }
    double r_max() const { return std::exp(log_r.back()); }
};

namespace detail {
inline std::vector<double> log_spaced(double r_min, double r_max, std::size_t per_decade) {
    require(r_min > 0 && r_max > r_min, "bad tabulation range");
    const double lo = std::log(r_min), hi = std::log(r_max);
    const auto n = std::max<std::size_t>(
        8, static_cast<std::size_t>(std::ceil((hi - lo) / std::log(10.0) * per_decade)) + 1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return out;
}
}  // namespace detail

/// Deterministic profile from quadrature of the kernel.
inline DiffusionProfile tabulate_profile(const KernelSpec& spec, double kappa,
                                         double r_min = 0.0, double r_max = 0.0,
                                         std::size_t per_decade = 256) {
    spec.validate();
    DiffusionProfile p;
    p.kind = ProfileKind::deterministic;
    p.kappa = kappa;
    p.params = spec;
    if (r_min <= 0.0) r_min = spec.eta > 0.0 ? 0.1 * spec.eta : 1e-4 * spec.L;
    if (r_max <= 0.0) r_max = 2.0 * spec.L;
    p.log_r = detail::log_spaced(r_min, r_max, per_decade);
    p.log_a.resize(p.log_r.size());
    for (std::size_t i = 0; i < p.log_r.size(); ++i)
        p.log_a[i] = std::log(diffusion_coefficient(std::exp(p.log_r[i]), spec, 0.0));
    return p;
}

/// Analytic power-law profile A(r) = coeff r^expo + kappa (exact under
/// log-log interpolation).
inline DiffusionProfile power_law_profile(double coeff, double expo, double kappa,
                                          double r_min = 1e-8, double r_max = 10.0) {
    require(coeff > 0, "power_law_profile: coeff must be positive");
    DiffusionProfile p;
    p.kind = ProfileKind::deterministic;
    p.kappa = kappa;
    p.log_r = detail::log_spaced(r_min, r_max, 4);
    p.log_a.resize(p.log_r.size());
    for (std::size_t i = 0; i < p.log_r.size(); ++i)
        p.log_a[i] = std::log(coeff) + expo * p.log_r[i];
    return p;
}

/// Profile tabulated from an arbitrary kappa-free coefficient function.
template <class Fn>
inline DiffusionProfile function_profile(Fn&& fn, double kappa, double r_min, double r_max,
                                         std::size_t per_decade = 256) {
    DiffusionProfile p;
    p.kind = ProfileKind::deterministic;
    p.kappa = kappa;
    p.log_r = detail::log_spaced(r_min, r_max, per_decade);
    p.log_a.resize(p.log_r.size());
    for (std::size_t i = 0; i < p.log_r.size(); ++i) {
        const double a = fn(std::exp(p.log_r[i]));
        require(a > 0.0, "function_profile: coefficient must be positive on the range");
        p.log_a[i] = std::log(a);
    }
    return p;
}

/// Quenched profile: chaos-integral coefficient tabulated on the measure's
/// native grid (no re-quadrature), at grid-aligned separations. Exposes the
/// same evaluation contract as the deterministic profile. Pass a shared
/// QuenchedKernelTable when tabulating many realizations of one geometry.
inline DiffusionProfile tabulate_quenched_profile(const KernelSpec& spec, const ChaosMeasure& mu,
                                                  double kappa, double r_min = 0.0,
                                                  double r_max = 0.0, std::size_t per_decade = 32,
                                                  const QuenchedKernelTable* table = nullptr) {
    spec.validate();
    DiffusionProfile p;
    p.kind = ProfileKind::quenched;
    p.kappa = kappa;
    p.params = spec;
    p.gamma = mu.gamma;
    p.seed = mu.grid->seed;
    p.uniform = false;
    const double dx = mu.grid->dx();
    if (r_min <= 0.0) r_min = std::max(mu.grid->cutoff, 10.0 * dx);
    if (r_max <= 0.0) r_max = mu.grid->domain_halfwidth - 2.0 * spec.L;
    std::optional<QuenchedKernelTable> local;
    if (!table) local.emplace(spec, mu.grid->n_points, mu.grid->domain_halfwidth);
    const QuenchedKernelTable& tab = table ? *table : *local;
    std::int64_t prev_k = -1;
    for (double lr : detail::log_spaced(r_min, r_max, per_decade)) {
        const std::int64_t k = tab.snap(std::exp(lr));
        if (k == prev_k || k < 1) continue;
        prev_k = k;
        p.log_r.push_back(std::log(static_cast<double>(k) * dx));
        p.log_a.push_back(std::log(tab.evaluate(k, mu, 0.0)));
    }
    require(p.log_r.size() >= 2, "quenched profile needs at least 2 nodes");
    return p;
}

inline void export_profile_csv(const DiffusionProfile& p, const std::string& path) {
    CsvWriter csv(path, {"r", "A_r", "kind", "xi", "gamma", "eta", "kappa", "seed"});
    const char* kind = p.kind == ProfileKind::deterministic ? "deterministic" : "quenched";
    for (std::size_t i = 0; i < p.log_r.size(); ++i) {
        const double r = std::exp(p.log_r[i]);
        csv.row(r, p(r), kind, p.params.xi, p.gamma, p.params.eta, p.kappa,
                static_cast<std::uint64_t>(p.seed));
    }
}

}  // namespace mfk
