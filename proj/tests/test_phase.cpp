#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfk/field_sampler.hpp"
#include "mfk/phase_classifier.hpp"
#include "mfk/rng.hpp"

using namespace mfk;

TEST_CASE("analytic phase thresholds") {
    SECTION("monofractal") {
        REQUIRE(analytic_phase(0.5, 0.0, PhaseSetting::monofractal).verdict == Verdict::regular);
        REQUIRE(analytic_phase(1.0, 0.0, PhaseSetting::monofractal).verdict == Verdict::exit);
        REQUIRE(analytic_phase(1.5, 0.0, PhaseSetting::monofractal).verdict == Verdict::exit);
        REQUIRE(analytic_phase(2.0, 0.0, PhaseSetting::monofractal).verdict == Verdict::natural);
    }
    SECTION("quenched multifractal shifts by -2 gamma^2") {
        // 2 - 2 gamma^2 = 1.28 <= 1.5 -> natural
        REQUIRE(analytic_phase(1.5, 0.6, PhaseSetting::mf_quenched).verdict == Verdict::natural);
        REQUIRE(analytic_phase(0.5, 0.4, PhaseSetting::mf_quenched).verdict == Verdict::regular);
        // boundary convention: 1 - 2g^2 <= xi is already exit
        const double g = 0.3;
        REQUIRE(analytic_phase(1.0 - 2.0 * g * g, g, PhaseSetting::mf_quenched).verdict ==
                Verdict::exit);
    }
    SECTION("mlbm shifts the other way") {
        REQUIRE(analytic_phase(1.5, 0.6, PhaseSetting::mlbm_quenched).verdict == Verdict::regular);
        REQUIRE(analytic_phase(1.8, 0.4, PhaseSetting::mlbm_quenched).verdict == Verdict::exit);
        REQUIRE(analytic_phase(2.5, 0.3, PhaseSetting::mlbm_quenched).verdict ==
                Verdict::natural);
    }
    SECTION("annealed uses the mean-field exponent") {
        // xi_mf = 0.9 + 4*0.16 = 1.54 -> exit while quenched is regular
        REQUIRE(analytic_phase(0.9, 0.2, PhaseSetting::mf_quenched).verdict == Verdict::regular);
        REQUIRE(analytic_phase(0.9, 0.4, PhaseSetting::mf_annealed).verdict == Verdict::exit);
    }
    SECTION("parameter validation") {
        REQUIRE_THROWS_AS(analytic_phase(-0.1, 0.2, PhaseSetting::monofractal),
                          invalid_parameter);
        REQUIRE_THROWS_AS(analytic_phase(1.0, 0.8, PhaseSetting::monofractal),
                          invalid_parameter);
    }
}

TEST_CASE("verdicts are monotone in xi") {
    for (double g : {0.0, 0.2, 0.45, 0.65}) {
        for (auto setting : {PhaseSetting::monofractal, PhaseSetting::mf_quenched,
                             PhaseSetting::mf_annealed, PhaseSetting::mlbm_quenched,
                             PhaseSetting::mlbm_annealed}) {
            int prev = -1;
            for (double xi = 0.01; xi <= 3.0; xi += 0.01) {
                const int v = static_cast<int>(analytic_phase(xi, g, setting).verdict);
                REQUIRE(v >= prev);
                prev = v;
            }
        }
    }
}

TEST_CASE("phase mapping xi -> xi + 4 gamma^2") {
    SECTION("hand-checked example") {
        auto [mk, lbm] = phase_mapping_check(0.4, 0.5);
        REQUIRE(mk.verdict == Verdict::regular);
        REQUIRE(lbm.verdict == Verdict::regular);
    }
    SECTION("gamma = 0 reduces to the same threshold rule") {
        for (double xi = 0.05; xi < 2.5; xi += 0.05) {
            auto [mk, lbm] = phase_mapping_check(xi, 0.0);
            REQUIRE(mk.verdict == lbm.verdict);
        }
    }
    SECTION("1000 random parameter pairs, both settings") {
        GaussianRng rng(314159);
        for (int i = 0; i < 1000; ++i) {
            const double xi = 2.5 * rng.uniform();
            const double g = 0.7 * rng.uniform();
            REQUIRE_NOTHROW(phase_mapping_check(xi, g, false));
            REQUIRE_NOTHROW(phase_mapping_check(xi, g, true));
        }
    }
}

TEST_CASE("region boundaries shift by the exact threshold algebra") {
    for (double g : {0.1, 0.3, 0.5}) {
        const double g2 = g * g;
        auto boundary = [&](PhaseSetting s, double level) {
            // smallest xi (on a fine grid) whose verdict is at least `level`
            for (double xi = 0.0; xi < 4.0; xi += 1e-4) {
                if (static_cast<double>(analytic_phase(xi, g, s).verdict) >= level)
                    return xi;
            }
            return 4.0;
        };
        REQUIRE(boundary(PhaseSetting::mf_quenched, 1) ==
                Catch::Approx(boundary(PhaseSetting::monofractal, 1) - 2.0 * g2).margin(2e-4));
        REQUIRE(boundary(PhaseSetting::mf_annealed, 1) ==
                Catch::Approx(boundary(PhaseSetting::monofractal, 1) - 4.0 * g2).margin(2e-4));
        REQUIRE(boundary(PhaseSetting::mlbm_quenched, 1) ==
                Catch::Approx(boundary(PhaseSetting::monofractal, 1) + 2.0 * g2).margin(2e-4));
        REQUIRE(boundary(PhaseSetting::mf_quenched, 2) ==
                Catch::Approx(2.0 - 2.0 * g2).margin(2e-4));
    }
}

TEST_CASE("raster reproduces the three-region layout") {
    auto raster = verdict_raster(PhaseSetting::mf_quenched, 0.0, 2.0, 64, 0.0, 0.7, 64);
    REQUIRE(raster.size() == 64 * 64);
    int seen[3] = {0, 0, 0};
    for (const auto& c : raster) {
        REQUIRE(c.verdict != Verdict::indeterminate);
        ++seen[static_cast<int>(c.verdict)];
        // verdict agrees with the threshold formulas cell by cell
        const double e = c.xi + 2.0 * c.gamma * c.gamma;
        REQUIRE(c.verdict == verdict_from_exponent(e));
    }
    REQUIRE(seen[0] > 0);
    REQUIRE(seen[1] > 0);
    REQUIRE(seen[2] > 0);
}

TEST_CASE("trend classification on closed forms") {
    std::vector<double> cutoffs;
    for (double e = 1e-2; e >= 0.99e-8; e *= 0.1) cutoffs.push_back(e);
    auto tail = [&](double expo) {
        // I(eps) = int_eps^delta r^expo dr, delta = 0.1
        std::vector<double> v;
        for (double e : cutoffs) {
            if (expo == -1.0)
                v.push_back(std::log(0.1 / e));
            else
                v.push_back((std::pow(0.1, expo + 1.0) - std::pow(e, expo + 1.0)) / (expo + 1.0));
        }
        return v;
    };
    REQUIRE(classify_trend(cutoffs, tail(-0.5)).cls == TrendClass::convergent);
    REQUIRE(classify_trend(cutoffs, tail(-1.0)).cls == TrendClass::divergent);  // log
    REQUIRE(classify_trend(cutoffs, tail(-1.5)).cls == TrendClass::divergent);
    REQUIRE(classify_trend(cutoffs, tail(0.0)).cls == TrendClass::convergent);
}

TEST_CASE("speed integral test classifies the three power-law densities") {
    SECTION("m = r^-0.5: regular") {
        auto rep = speed_integral_test([](double r) { return std::pow(r, -0.5); }, 0.1);
        REQUIRE(rep.accessible);
        REQUIRE(rep.verdict == Verdict::regular);
    }
    SECTION("m = r^-1.5: exit") {
        auto rep = speed_integral_test([](double r) { return std::pow(r, -1.5); }, 0.1);
        REQUIRE(rep.accessible);
        REQUIRE(rep.verdict == Verdict::exit);
    }
    SECTION("m = r^-2: natural") {
        auto rep = speed_integral_test([](double r) { return std::pow(r, -2.0); }, 0.1);
        REQUIRE(!rep.accessible);
        REQUIRE(rep.verdict == Verdict::natural);
    }
}

TEST_CASE("regularization limits reproduce the three regimes") {
    const double xi = 2.0 / 3.0;
    auto zero = regularization_limit_study(xi, 2.0 * xi);
    REQUIRE(zero.limit_class == +1);
    auto order_one = regularization_limit_study(xi, xi);
    REQUIRE(order_one.limit_class == 0);
    REQUIRE(std::abs(order_one.slope) < 0.05);
    auto infty = regularization_limit_study(xi, 0.5 * xi);
    REQUIRE(infty.limit_class == -1);
}

TEST_CASE("speed density interpolation and extension") {
    SpeedDensity d;
    for (double r = 1e-3; r <= 1.1; r *= 1.3) {
        d.r.push_back(r);
        d.density.push_back(2.0 * std::pow(r, -0.8));
    }
    REQUIRE(d(0.01) == Catch::Approx(2.0 * std::pow(0.01, -0.8)).epsilon(1e-3));
    REQUIRE(d(1e-5) == Catch::Approx(2.0 * std::pow(1e-5, -0.8)).epsilon(1e-2));
}

TEST_CASE("annealed speed density: gamma = 0 equals the deterministic inverse") {
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    spec.eta = 2.56 * 2.0 / (1 << 12);
    LogFieldSampler sampler(1 << 13, 2.56, 1.0, spec.eta);
    std::vector<ChaosMeasure> ens;
    for (int i = 0; i < 2; ++i)
        ens.push_back(build_chaos_measure(sampler.sample(derive_seed(6, "ann0", i)), 0.0));
    auto d = annealed_speed_density(spec, ens, {0.05, 0.1, 0.2, 0.4});
    for (std::size_t j = 0; j < d.r.size(); ++j) {
        const double target = 0.5 / diffusion_coefficient(d.r[j], spec);
        REQUIRE(d.density[j] == Catch::Approx(target).epsilon(2e-3));
    }
}

TEST_CASE("kernel table matches the reference chaos sum") {
    KernelSpec spec;
    spec.xi = 2.0 / 3.0;
    auto field = sample_log_field(1 << 13, 2.56, 1.0, 2.56 * 2.0 / (1 << 12), 4711);
    auto mu = build_chaos_measure(field, 0.3);
    QuenchedKernelTable tab(spec, field.n_points, field.domain_halfwidth);
    for (double r : {0.02, 0.1, 0.37}) {
        const auto k = tab.snap(r);
        const double via_table = tab.evaluate(k, mu, 0.01);
        const double direct = quenched_diffusion_coefficient(
            static_cast<double>(k) * field.dx(), spec, mu, 0.01);
        REQUIRE(via_table == Catch::Approx(direct).epsilon(1e-9));
    }
}

TEST_CASE("empirical phase on deterministic profiles") {
    EmpiricalPhaseConfig cfg;
    cfg.n_paths = 150;
    cfg.horizon = 5.0;
    cfg.jobs = 2;
    auto rate_for = [](double xi_eff) {
        auto prof = power_law_profile(0.5, xi_eff, 0.0);
        return ClockRate([prof](double x) { return 0.5 / prof(x); });
    };
    SECTION("monofractal exit at xi = 1.5") {
        auto v = empirical_phase({rate_for(1.5)}, 1.5, 0.0, PhaseSetting::monofractal, cfg, 21);
        REQUIRE(v.method == VerdictMethod::empirical);
        REQUIRE(v.verdict == Verdict::exit);
        REQUIRE(v.hit_fraction > 0.9);
        REQUIRE(v.absorbed_fraction > 0.9);
    }
    SECTION("monofractal regular at xi = 0.5") {
        auto v = empirical_phase({rate_for(0.5)}, 0.5, 0.0, PhaseSetting::monofractal, cfg, 22);
        REQUIRE(v.verdict == Verdict::regular);
    }
    SECTION("natural at effective exponent 2.2") {
        // annealed exponent 1.4 + 4 * 0.45^2 = 2.21, comfortably off-boundary
        auto v = empirical_phase({rate_for(2.21)}, 1.4, 0.45, PhaseSetting::mf_annealed, cfg, 23);
        REQUIRE(v.method == VerdictMethod::empirical);
        REQUIRE(v.verdict == Verdict::natural);
        REQUIRE(v.branch_fraction <= 0.05);
    }
    SECTION("deep natural has a negligible hitting fraction") {
        auto v = empirical_phase({rate_for(2.51)}, 1.7, 0.45, PhaseSetting::mf_annealed, cfg, 26);
        REQUIRE(v.verdict == Verdict::natural);
        REQUIRE(v.hit_fraction < 0.05);
    }
    SECTION("near-boundary inputs route to the analytic verdict") {
        auto v = empirical_phase({rate_for(1.0)}, 1.01, 0.0, PhaseSetting::monofractal, cfg, 24);
        REQUIRE(v.method == VerdictMethod::analytic);
        REQUIRE(v.near_boundary);
    }
    SECTION("quenched settings demand 30 realizations") {
        REQUIRE_THROWS_AS(
            empirical_phase({rate_for(1.0)}, 0.8, 0.3, PhaseSetting::mf_quenched, cfg, 25),
            invalid_parameter);
    }
}
