#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfk/field_sampler.hpp"
#include "mfk/fit.hpp"
#include "mfk/kraichnan_kernel.hpp"
#include "mfk/structure.hpp"

using namespace mfk;

TEST_CASE("regularized norm branches") {
    // |r| branch above eta
    REQUIRE(regularized_norm(0.4, 0.2, 1.0) == Catch::Approx(0.4));
    // continuity at r = eta
    REQUIRE(regularized_norm(0.2, 0.2, 1.0) == Catch::Approx(0.2).epsilon(1e-14));
    REQUIRE(regularized_norm(0.2, 0.2, 0.5) == Catch::Approx(0.2).epsilon(1e-14));
    // r = 0 cap value eta^{2/beta}/2
    REQUIRE(regularized_norm(0.0, 0.2, 1.0) == Catch::Approx(0.02));
    // beta > 2 with eta small enough that eta^{2/beta-1} >= 2 is rejected
    REQUIRE_THROWS_AS(regularized_norm(0.1, 1e-4, 20.0), invalid_parameter);
}

TEST_CASE("kernel shape") {
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    SECTION("vanishes beyond 2L") {
        REQUIRE(rv_kernel(3.0, spec) == 0.0);
        REQUIRE(rv_kernel(-2.5, spec) == 0.0);
    }
    SECTION("odd symmetry") {
        for (double x : {0.1, 0.37, 0.9, 1.7}) {
            REQUIRE(rv_kernel(-x, spec) == Catch::Approx(-rv_kernel(x, spec)));
        }
    }
    SECTION("hand value with box cutoff") {
        KernelSpec box = spec;
        box.psi = PsiProfile::box;
        // x / |x|^{3/2 - xi/2} at x = 1/2: (1/2)^{xi/2 - 1/2} = 2^{1/6}
        REQUIRE(rv_kernel(0.5, box) == Catch::Approx(std::pow(0.5, -1.0 / 6.0)).epsilon(1e-13));
    }
    SECTION("psi profile window") {
        REQUIRE(psi_cutoff(0.0) > 0.9);
        REQUIRE(psi_cutoff(2.0) < 1e-4);
        REQUIRE(psi_cutoff(2.0001) == 0.0);
        REQUIRE(psi_cutoff(-0.3) == psi_cutoff(0.3));
    }
}

TEST_CASE("diffusion coefficient basics") {
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    SECTION("r = 0 returns kappa exactly") {
        REQUIRE(diffusion_coefficient(0.0, spec, 0.25) == 0.25);
    }
    SECTION("even in r and positive") {
        const double a = diffusion_coefficient(0.05, spec);
        REQUIRE(a > 0.0);
        REQUIRE(diffusion_coefficient(-0.05, spec) == Catch::Approx(a));
    }
    SECTION("A >= kappa") {
        REQUIRE(diffusion_coefficient(0.3, spec, 0.7) >= 0.7);
    }
}

TEST_CASE("unregularized coefficient stays in a power-law band") {
    for (double xi : {2.0 / 3.0, 4.0 / 3.0}) {
        KernelSpec spec;
        spec.xi = xi;
        double lo = 1e300, hi = 0.0;
        std::vector<double> lr, la;
        for (int i = 0; i <= 24; ++i) {
            const double r = std::pow(10.0, -4.0 + 4.0 * i / 24.0);
            const double a = diffusion_coefficient(r, spec);
            const double ratio = a / std::pow(r, xi);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            if (r >= 1e-3 && r <= 1e-1) {
                lr.push_back(std::log(r));
                la.push_back(std::log(a));
            }
        }
        CAPTURE(xi);
        REQUIRE(hi / lo < 10.0);
        REQUIRE(lo > 0.0);
        const auto f = fit_line(lr, la);
        REQUIRE(f.slope == Catch::Approx(xi).margin(0.02));
    }
}

TEST_CASE("prefactor matches the coefficient exactly (change of variables)") {
    const double xi = 2.0 / 3.0;
    KernelSpec spec;
    spec.xi = xi;
    for (double rho : {0.01, 0.1, 0.5, 0.9}) {
        const double c = prefactor_cd(rho, xi);
        REQUIRE(c > 0.0);
        REQUIRE(std::isfinite(c));
        const double a = diffusion_coefficient(rho, spec);
        REQUIRE(c * std::pow(rho, xi) == Catch::Approx(a).epsilon(1e-4));
    }
}

TEST_CASE("prefactor bounded on a rho grid") {
    const double xi = 2.0 / 3.0;
    double lo = 1e300, hi = 0.0;
    for (int i = 1; i < 50; ++i) {
        const double c = prefactor_cd(i / 50.0, xi);
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    REQUIRE(lo > 0.0);
    REQUIRE(std::isfinite(hi / lo));
    REQUIRE(hi / lo < 20.0);
}

TEST_CASE("regularization consistency: halving eta moves A(r) by < 1e-3 for r >> eta") {
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    spec.eta = 1e-4;
    const double r = 0.5;  // r/eta = 5000
    const double a1 = diffusion_coefficient(r, spec);
    spec.eta = 5e-5;
    const double a2 = diffusion_coefficient(r, spec);
    REQUIRE(std::abs(a1 - a2) / a1 < 1e-3);
}

TEST_CASE("quenched coefficient") {
    auto field = sample_log_field(1 << 14, 2.56, 1.0, 2.56 * 2.0 / (1 << 13), 99);
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;

    SECTION("gamma = 0 reduces to the deterministic quadrature") {
        auto mu = build_chaos_measure(field, 0.0);
        KernelSpec reg = spec;
        reg.eta = field.cutoff;  // same regularization on both routes
        for (double r : {0.05, 0.1, 0.4}) {
            const double aq = quenched_diffusion_coefficient(r, reg, mu);
            const double ad = diffusion_coefficient(r, reg);
            REQUIRE(aq == Catch::Approx(ad).epsilon(1e-3));
        }
        // unregularized kernel on the grid carries the documented O(dx) error
        const double aq0 = quenched_diffusion_coefficient(0.1, spec, mu);
        REQUIRE(aq0 == Catch::Approx(diffusion_coefficient(0.1, spec)).epsilon(0.02));
    }
    SECTION("linear in the weights") {
        auto mu = build_chaos_measure(field, 0.3);
        const double kappa = 0.05;
        const double a1 = quenched_diffusion_coefficient(0.1, spec, mu, kappa);
        for (auto& w : mu.weights) w *= 2.0;
        const double a2 = quenched_diffusion_coefficient(0.1, spec, mu, kappa);
        REQUIRE(a2 - kappa == Catch::Approx(2.0 * (a1 - kappa)).epsilon(1e-12));
    }
    SECTION("insufficient grid coverage is rejected") {
        auto small = sample_log_field(1 << 10, 1.0, 1.0, 2.0 / (1 << 9), 7);
        auto mu = build_chaos_measure(small, 0.2);
        REQUIRE_THROWS_AS(quenched_diffusion_coefficient(0.1, spec, mu), invalid_parameter);
    }
}

TEST_CASE("ensemble mean of the quenched coefficient matches the deterministic one") {
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    spec.eta = 2.56 * 2.0 / (1 << 12);
    const double gamma = 0.2, r = 0.1;
    const int n_real = 400;
    LogFieldSampler sampler(1 << 13, 2.56, 1.0, spec.eta);
    std::vector<double> vals(n_real);
    for (int i = 0; i < n_real; ++i) {
        auto mu = build_chaos_measure(sampler.sample(derive_seed(5, "meanA", i)), gamma);
        vals[i] = quenched_diffusion_coefficient(r, spec, mu);
    }
    const double m = mean(vals), se = standard_error(vals);
    const double target = diffusion_coefficient(r, spec);
    REQUIRE(std::abs(m - target) < 3.0 * se + 1e-3 * target);
}

TEST_CASE("structure estimator matches direct anchored sums") {
    const std::int64_t n = 1 << 12;
    const double W = 4.0;
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    auto field = sample_log_field(n, W, 1.0, 2.0 * 2.0 * W / n, 2024);
    auto mu = build_chaos_measure(field, 0.25);
    const double dx = field.dx();
    std::vector<double> seps{8 * dx, 16 * dx, 32 * dx, 64 * dx};
    auto est = quenched_structure_mean_log(spec, mu, seps, 0.2);
    REQUIRE(est.r.size() == seps.size());
    for (std::size_t s = 0; s < seps.size(); ++s) {
        const auto kc = static_cast<std::int64_t>(std::llround(seps[s] / dx));
        const auto i_lo = static_cast<std::int64_t>((2.0 + 0.2) / dx);
        const auto i_hi = n - i_lo - kc;
        double acc = 0.0;
        for (std::int64_t i = i_lo; i < i_hi; ++i)
            acc += std::log(anchored_coefficient_direct(spec, mu, i, kc));
        acc /= static_cast<double>(i_hi - i_lo);
        REQUIRE(est.mean_log_a[s] == Catch::Approx(acc).margin(1e-8));
    }
}

TEST_CASE("tabulated profile interpolates and extrapolates") {
    auto p = power_law_profile(0.5, 2.0 / 3.0, 0.0);
    REQUIRE(p(0.1) == Catch::Approx(0.5 * std::pow(0.1, 2.0 / 3.0)).epsilon(1e-12));
    REQUIRE(p(1e-10) == Catch::Approx(0.5 * std::pow(1e-10, 2.0 / 3.0)).epsilon(1e-9));
    auto pk = power_law_profile(0.5, 2.0 / 3.0, 0.01);
    REQUIRE(pk(0.1) == Catch::Approx(0.01 + 0.5 * std::pow(0.1, 2.0 / 3.0)).epsilon(1e-12));
    REQUIRE(pk(0.0) >= 0.01);

    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    auto prof = tabulate_profile(spec, 0.0, 1e-3, 1.0, 32);
    for (double r : {2e-3, 0.05, 0.7}) {
        REQUIRE(prof(r) == Catch::Approx(diffusion_coefficient(r, spec)).epsilon(2e-3));
    }
}
