#pragma once

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "mfk/common.hpp"
#include "mfk/grid.hpp"
#include "mfk/rng.hpp"

namespace mfk {

namespace detail {

inline std::mutex& fftw_plan_mutex() {
    static std::mutex mu;
    return mu;
}

/// RAII buffer + plans for complex transforms of a fixed length.
class FftEngine {
  public:
    explicit FftEngine(std::size_t n) : n_(n) {
        buf_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
        if (!buf_) throw std::bad_alloc();
        std::lock_guard<std::mutex> lk(fftw_plan_mutex());
        fwd_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_FORWARD, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_1d(static_cast<int>(n), buf_, buf_, FFTW_BACKWARD, FFTW_ESTIMATE);
        if (!fwd_ || !bwd_) throw numerical_error("fftw plan creation failed");
    }
    FftEngine(const FftEngine&) = delete;
    FftEngine& operator=(const FftEngine&) = delete;
    ~FftEngine() {
        std::lock_guard<std::mutex> lk(fftw_plan_mutex());
        if (fwd_) fftw_destroy_plan(fwd_);
        if (bwd_) fftw_destroy_plan(bwd_);
        fftw_free(buf_);
    }

    std::size_t size() const { return n_; }
    std::complex<double>* data() { return reinterpret_cast<std::complex<double>*>(buf_); }
    void forward() { fftw_execute(fwd_); }    // unnormalized e^{-i}
    void backward() { fftw_execute(bwd_); }   // unnormalized e^{+i}

  private:
    std::size_t n_;
    fftw_complex* buf_;
    fftw_plan fwd_ = nullptr, bwd_ = nullptr;
};

}  // namespace detail

/// Mollified log kernel: log(L/r) on [eta, L], linear cap
/// log(L/eta) + v0 (1 - r/eta) below eta (v0 = 1), zero beyond L.
inline double log_kernel(double r, double L, double eta) {
    r = std::abs(r);
    if (r >= L) return 0.0;
    if (r >= eta) return std::log(L / r);
    return std::log(L / eta) + (1.0 - r / eta);
}

/// Exact sampler for the regularized log-correlated field on a uniform grid,
/// by circulant embedding of the mollified kernel on the doubled periodic
/// grid. Embedding eigenvalues are computed once at construction; negative
/// eigenvalues within 1e-12 of the dominant one are clipped to zero (the
/// clipped mass is retained for inspection), anything worse is an error.
///
/// One sampler instance is not thread-safe; use one per worker thread.
class LogFieldSampler {
  public:
    LogFieldSampler(std::int64_t n_points, double domain_halfwidth, double L, double eta)
        : n_(n_points), halfwidth_(domain_halfwidth), L_(L), eta_(eta),
          engine_(std::make_unique<detail::FftEngine>(2 * static_cast<std::size_t>(n_points))) {
        require(is_power_of_two(static_cast<std::uint64_t>(n_points)) && n_points >= 2,
                "n_points must be a power of two >= 2");
        require(L > 0 && eta > 0, "L and eta must be positive");
        require(L <= domain_halfwidth, "kernel support must fit: L <= domain_halfwidth");
        const double dx = 2.0 * domain_halfwidth / static_cast<double>(n_points);
        require(eta >= 2.0 * dx, "eta below grid resolution (need eta >= 2 dx)");
        require(eta <= L, "eta must not exceed L");

        const std::size_t m = 2 * static_cast<std::size_t>(n_points);
        auto* z = engine_->data();
        for (std::size_t j = 0; j < m; ++j) {
            const double d = dx * static_cast<double>(std::min(j, m - j));
            z[j] = {log_kernel(d, L, eta), 0.0};
        }
        engine_->forward();
        lambda_.resize(m);
        double lmax = 0.0;
        for (std::size_t k = 0; k < m; ++k) lmax = std::max(lmax, z[k].real());
        double clipped = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            double lk = z[k].real();
            if (lk < 0.0) {
                if (-lk > 1e-12 * lmax)
                    throw numerical_error("circulant embedding not nonnegative-definite: "
                                          "min eigenvalue " + std::to_string(lk));
                clipped += -lk;
                lk = 0.0;
            }
            lambda_[k] = std::sqrt(lk / static_cast<double>(m));
        }
        clipped_mass_ = clipped;
    }

    /// Draws one field realization. Deterministic in (parameters, seed).
    FieldGrid sample(std::uint64_t seed) const {
        const std::size_t m = lambda_.size();
        GaussianRng rng(seed);
        auto* z = engine_->data();
        for (std::size_t k = 0; k < m; ++k) {
            const double a = rng.gaussian();
            const double b = rng.gaussian();
            z[k] = {lambda_[k] * a, lambda_[k] * b};
        }
        engine_->backward();
        FieldGrid g;
        g.domain_halfwidth = halfwidth_;
        g.n_points = n_;
        g.correlation_length = L_;
        g.cutoff = eta_;
        g.seed = seed;
        g.values.resize(static_cast<std::size_t>(n_));
        for (std::size_t i = 0; i < static_cast<std::size_t>(n_); ++i) g.values[i] = z[i].real();
        return g;
    }

    double clipped_mass() const { return clipped_mass_; }
    double variance() const { return std::log(L_ / eta_) + 1.0; }

  private:
    std::int64_t n_;
    double halfwidth_, L_, eta_;
    std::unique_ptr<detail::FftEngine> engine_;
    std::vector<double> lambda_;  // sqrt(eig / m)
    double clipped_mass_ = 0.0;
};

/// One-shot convenience wrapper around LogFieldSampler.
inline FieldGrid sample_log_field(std::int64_t n_points, double domain_halfwidth, double L,
                                  double eta, std::uint64_t seed) {
    return LogFieldSampler(n_points, domain_halfwidth, L, eta).sample(seed);
}

/// Chaos weights w_i = Z^-1 exp(2 gamma Gamma_i) dx with Z = exp(2 gamma^2 Var).
/// With Var = log(1/eta) + 1 (L = 1) this is the (eta/e)^{2 gamma^2} convention.
inline ChaosMeasure build_chaos_measure(FieldGrid field, double gamma) {
    require(gamma >= 0.0 && gamma < kGammaMax, "gamma out of range [0, sqrt(2)/2)");
    ChaosMeasure mu;
    mu.gamma = gamma;
    mu.normalization = std::exp(2.0 * gamma * gamma * field.variance());
    const double dx = field.dx();
    mu.weights.resize(field.values.size());
    if (gamma == 0.0) {
        for (auto& w : mu.weights) w = dx;
    } else {
        const double zinv = 1.0 / mu.normalization;
        for (std::size_t i = 0; i < mu.weights.size(); ++i)
            mu.weights[i] = zinv * std::exp(2.0 * gamma * field.values[i]) * dx;
    }
    mu.grid = std::make_shared<const FieldGrid>(std::move(field));
    return mu;
}

/// Local average mu([x, x+r]) / r with partial-cell linear proration.
inline double coarse_average(const ChaosMeasure& mu, double x, double r) {
    require(r >= mu.dx(), "window below grid resolution");
    return mu.total_mass(x, x + r) / r;
}

/// Box-averaged field Gamma_r at every midpoint, window [x - r/2, x + r/2]
/// clipped to the domain. One pass over a prefix sum.
inline std::vector<double> remollified_field(const FieldGrid& g, double r) {
    const auto n = static_cast<std::size_t>(g.n_points);
    require(r >= 2.0 * g.dx(), "re-mollification scale below resolution");
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + g.values[i];
    const auto h = static_cast<std::int64_t>(std::llround(r / (2.0 * g.dx())));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(i) - h);
        const std::int64_t hi = std::min<std::int64_t>(static_cast<std::int64_t>(n),
                                                       static_cast<std::int64_t>(i) + h);
        out[i] = (cum[hi] - cum[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

/// Moving-average coarsening of chaos weights to a coarser cutoff (same
/// underlying realization, not a fresh draw).
inline ChaosMeasure remollified_measure(const ChaosMeasure& mu, double r) {
    const auto n = mu.weights.size();
    const auto h = static_cast<std::int64_t>(std::llround(r / (2.0 * mu.dx())));
    require(h >= 1, "re-mollification scale below resolution");
    std::vector<double> cum(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) cum[i + 1] = cum[i] + mu.weights[i];
    ChaosMeasure out = mu;
    for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(i) - h);
        const std::int64_t hi = std::min<std::int64_t>(static_cast<std::int64_t>(n),
                                                       static_cast<std::int64_t>(i) + h);
        out.weights[i] = (cum[hi] - cum[lo]) / static_cast<double>(hi - lo);
    }
    return out;
}

}  // namespace mfk
