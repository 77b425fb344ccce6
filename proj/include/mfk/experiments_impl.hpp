#pragma once

// Experiment pipelines behind run_experiment(). Each pipeline writes CSV
// outputs into the run directory and records stages in the manifest.

#include <array>
#include <filesystem>

namespace mfk {

namespace detail {

using Clock = std::chrono::steady_clock;

struct StageTimer {
    RunManifest& man;
    std::string name;
    Clock::time_point t0 = Clock::now();
    StageTimer(RunManifest& m, std::string n, std::uint64_t root) : man(m), name(std::move(n)) {
        man.stage_seeds.emplace_back(name, derive_seed(root, name));
    }
    ~StageTimer() {
        man.stage_wall_ms.emplace_back(
            name, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
};

inline std::string out_path(const std::filesystem::path& dir, const std::string& file) {
    return (dir / file).string();
}

// Records an output by name; digests are computed by run_experiment once the
// pipeline has returned and every writer has flushed.
inline void add_output(RunManifest& man, const std::filesystem::path&, const std::string& file) {
    man.outputs.emplace_back(file, 0);
}

// ---------------------------------------------------------------------------

inline void pipeline_fig1(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                          RunManifest& man) {
    StageTimer t(man, "fig1", cfg.root_seed);
    const auto n_r = static_cast<std::size_t>(cfg.integer("n_r"));
    const double r_lo = cfg.num("r_min"), r_hi = cfg.num("r_max");
    CsvWriter curve(out_path(dir, "fig1_coefficient.csv"), {"xi", "r", "A_r", "ratio", "c_d"});
    CsvWriter summary(out_path(dir, "fig1_summary.csv"),
                      {"xi", "band_ratio", "slope", "slope_lo", "slope_hi"});
    for (double xi : {2.0 / 3.0, 4.0 / 3.0}) {
        KernelSpec spec;
        spec.xi = xi;
        double lo = 1e300, hi = 0.0;
        std::vector<double> lr, la;
        const double fit_lo = cfg.num("fit_lo"), fit_hi = cfg.num("fit_hi");
        for (std::size_t i = 0; i < n_r; ++i) {
            const double r = r_lo * std::pow(r_hi / r_lo,
                                             static_cast<double>(i) / static_cast<double>(n_r - 1));
            const double a = diffusion_coefficient(r, spec);
            const double ratio = a / std::pow(r, xi);
            const double c = r < 1.0 ? prefactor_cd(r, xi) : ratio;
            curve.row(xi, r, a, ratio, c);
            lo = std::min(lo, ratio);
            hi = std::max(hi, ratio);
            if (r >= fit_lo && r <= fit_hi) {
                lr.push_back(std::log(r));
                la.push_back(std::log(a));
            }
        }
        const auto f = fit_line(lr, la);
        summary.row(xi, hi / lo, f.slope, fit_lo, fit_hi);
    }
    add_output(man, dir, "fig1_coefficient.csv");
    add_output(man, dir, "fig1_summary.csv");
}

inline void pipeline_fig2_left(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                               RunManifest& man) {
    StageTimer t(man, "fig2-left", cfg.root_seed);
    CsvWriter csv(out_path(dir, "fig2_left_bessel.csv"), {"xi", "a", "d_e"});
    const auto n = static_cast<std::size_t>(cfg.integer("n_xi"));
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = 1e-3 + (2.0 - 2e-3) * static_cast<double>(i) / static_cast<double>(n - 1);
        csv.row(xi, xi / (2.0 * xi - 4.0), (2.0 - 2.0 * xi) / (2.0 - xi));
    }
    add_output(man, dir, "fig2_left_bessel.csv");
}

inline void pipeline_fig2_right(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                RunManifest& man) {
    StageTimer t(man, "fig2-right", cfg.root_seed);
    const double eta = cfg.num("eta");
    CsvWriter csv(out_path(dir, "fig2_right_norms.csv"), {"beta", "r", "norm"});
    // beta is capped where eta^{2/beta - 1} < 2 keeps the norm positive
    for (double beta : {0.5, 1.0, 2.0, 3.0}) {
        for (int i = 0; i <= 400; ++i) {
            const double r = 1.5 * eta * i / 400.0;
            csv.row(beta, r, regularized_norm(r, eta, beta));
        }
    }
    add_output(man, dir, "fig2_right_norms.csv");
}

inline void pipeline_fig3(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                          RunManifest& man) {
    StageTimer t(man, "fig3", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double gamma = cfg.num("gamma");
    const double W = 1.0;
    const double eta = 2.0 * 2.0 * W / static_cast<double>(n);
    auto field = sample_log_field(n, W, 1.0, eta, derive_seed(cfg.root_seed, "fig3"));
    auto mu = build_chaos_measure(field, gamma);
    auto coarse = remollified_measure(mu, cfg.num("coarse_cutoff"));
    CsvWriter csv(out_path(dir, "fig3_realization.csv"),
                  {"x", "field", "weight_density", "weight_density_coarse"});
    const auto stride = std::max<std::int64_t>(1, n / cfg.integer("n_out"));
    for (std::int64_t i = 0; i < n; i += stride)
        csv.row(field.x_mid(i), field.values[static_cast<std::size_t>(i)],
                mu.weights[static_cast<std::size_t>(i)] / field.dx(),
                coarse.weights[static_cast<std::size_t>(i)] / field.dx());
    add_output(man, dir, "fig3_realization.csv");
}

inline void pipeline_gmc_mass(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                              RunManifest& man) {
    StageTimer t(man, "gmc-mass", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double gamma = cfg.num("gamma");
    const auto n_real = static_cast<std::size_t>(cfg.integer("n_realizations"));
    const double W = 1.0, L = 1.0;
    const double eta = 2.0 * 2.0 * W / static_cast<double>(n);
    std::vector<double> rs;
    for (double r = 10.0 * eta; r <= cfg.num("fit_hi"); r *= 1.5) rs.push_back(r);

    std::vector<double> masses(n_real);
    std::vector<std::vector<double>> m2(n_real, std::vector<double>(rs.size()));
    std::vector<std::unique_ptr<LogFieldSampler>> samplers;
    for (unsigned j = 0; j < std::max(1u, cfg.jobs); ++j)
        samplers.push_back(std::make_unique<LogFieldSampler>(n, W, L, eta));
    parallel_tasks(n_real, cfg.jobs, [&](unsigned tid, std::size_t i) {
        auto mu = build_chaos_measure(
            samplers[tid]->sample(derive_seed(cfg.root_seed, "gmc-mass", i)), gamma);
        masses[i] = mu.total_mass(0.0, L);
        for (std::size_t s = 0; s < rs.size(); ++s) {
            const double m = mu.total_mass(0.0, rs[s]);
            m2[i][s] = m * m;
        }
    });
    std::vector<double> lr(rs.size()), lm(rs.size());
    for (std::size_t s = 0; s < rs.size(); ++s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_real; ++i) acc += m2[i][s];
        lr[s] = std::log(rs[s]);
        lm[s] = std::log(acc / static_cast<double>(n_real));
    }
    const auto f = fit_line(lr, lm);
    CsvWriter curve(out_path(dir, "gmc_mass_moments.csv"), {"r", "second_moment"});
    for (std::size_t s = 0; s < rs.size(); ++s) curve.row(rs[s], std::exp(lm[s]));
    CsvWriter summary(out_path(dir, "gmc_mass_summary.csv"),
                      {"mean_mass", "se_mass", "target_mass", "moment2_slope", "target_slope"});
    summary.row(mean(masses), standard_error(masses), L, f.slope, 2.0 - 4.0 * gamma * gamma);
    add_output(man, dir, "gmc_mass_moments.csv");
    add_output(man, dir, "gmc_mass_summary.csv");
}

inline void pipeline_fig4(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                          RunManifest& man) {
    StageTimer t(man, "fig4", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double W = cfg.num("halfwidth");
    const double xi = cfg.num("xi"), gamma = cfg.num("gamma");
    const auto n_real = static_cast<std::size_t>(cfg.integer("n_realizations"));
    const double L = 1.0;
    const double dx = 2.0 * W / static_cast<double>(n);
    const double eta = 2.0 * dx;
    const double fit_lo = cfg.num("fit_lo_eta_mult") * eta;
    const double fit_hi = cfg.num("fit_hi");

    KernelSpec spec;
    spec.xi = xi;
    spec.L = L;
    const QuenchedKernelTable table(spec, n, W);
    std::vector<std::int64_t> cells;
    {
        std::int64_t prev = 0;
        for (double lr : log_spaced(0.8 * fit_lo, 2.0 * fit_hi, 8)) {
            const auto k = table.snap(std::exp(lr));
            if (k > prev) {
                cells.push_back(k);
                prev = k;
            }
        }
    }
    std::vector<ScalingCurve> ensemble(n_real);
    std::vector<std::unique_ptr<LogFieldSampler>> samplers;
    for (unsigned j = 0; j < std::max(1u, cfg.jobs); ++j)
        samplers.push_back(std::make_unique<LogFieldSampler>(n, W, L, eta));
    parallel_tasks(n_real, cfg.jobs, [&](unsigned tid, std::size_t i) {
        auto mu = build_chaos_measure(
            samplers[tid]->sample(derive_seed(cfg.root_seed, "fig4", i)), gamma);
        auto& c = ensemble[i];
        c.r.reserve(cells.size());
        c.value.reserve(cells.size());
        for (auto k : cells) {
            c.r.push_back(static_cast<double>(k) * dx);
            c.value.push_back(table.evaluate(k, mu, 0.0));
        }
    });

    const std::array<double, 10> ps{1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4,
                                    -1.0 / 64, -1.0 / 32, -1.0 / 16, -1.0 / 8, -1.0 / 4};
    CsvWriter longcsv(out_path(dir, "fig4_moments.csv"), {"p", "r", "compensated_moment"});
    CsvWriter summary(out_path(dir, "fig4_summary.csv"),
                      {"p", "slope", "stderr", "target", "abs_dev"});
    for (std::size_t b = 0; b < ps.size(); ++b) {
        const double p = ps[b];
        for (std::size_t s = 0; s < cells.size(); ++s) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n_real; ++i)
                acc += std::pow(ensemble[i].value[s], p);
            const double m = acc / static_cast<double>(n_real);
            const double r = ensemble[0].r[s];
            longcsv.row(p, r, std::pow(m, 1.0 / p) * std::pow(r, -xi));
        }
        auto fit = fit_moment_scaling(ensemble, p, fit_lo, fit_hi, 1000,
                                      derive_seed(cfg.root_seed, "fig4-boot", b));
        const double target = xi + 2.0 * gamma * gamma - 2.0 * gamma * gamma * p;
        summary.row(p, fit.slope, fit.stderr_slope, target, std::abs(fit.slope - target));
    }
    add_output(man, dir, "fig4_moments.csv");
    add_output(man, dir, "fig4_summary.csv");
}

inline void pipeline_prop2(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                           RunManifest& man) {
    StageTimer t(man, "prop2", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double W = cfg.num("halfwidth");
    const double xi = cfg.num("xi");
    const double L = 1.0;
    const double dx = 2.0 * W / static_cast<double>(n);
    const double eta = 2.0 * dx;
    const double fit_lo = cfg.num("fit_lo_eta_mult") * eta;
    const double fit_hi = cfg.num("fit_hi");
    KernelSpec spec;
    spec.xi = xi;
    spec.L = L;
    LogFieldSampler sampler(n, W, L, eta);
    std::vector<double> seps;
    for (double lr : log_spaced(fit_lo, fit_hi, 10)) seps.push_back(std::exp(lr));

    CsvWriter curve(out_path(dir, "prop2_structure.csv"), {"gamma", "r", "mean_log_A"});
    CsvWriter summary(out_path(dir, "prop2_summary.csv"),
                      {"gamma", "slope", "target", "abs_dev"});
    std::istringstream gs(cfg.params.at("gammas"));
    std::string tok;
    while (std::getline(gs, tok, ',')) {
        const double gamma = std::stod(tok);
        auto mu = build_chaos_measure(
            sampler.sample(derive_seed(cfg.root_seed, "prop2", static_cast<std::uint64_t>(
                                                                   gamma * 1000))),
            gamma);
        auto est = quenched_structure_mean_log(spec, mu, seps, 0.2);
        std::vector<double> lr(est.r.size());
        for (std::size_t s = 0; s < est.r.size(); ++s) {
            lr[s] = std::log(est.r[s]);
            curve.row(gamma, est.r[s], est.mean_log_a[s]);
        }
        const auto f = fit_line(lr, est.mean_log_a);
        const double target = xi + 2.0 * gamma * gamma;
        summary.row(gamma, f.slope, target, std::abs(f.slope - target));
    }
    add_output(man, dir, "prop2_structure.csv");
    add_output(man, dir, "prop2_summary.csv");
}

inline void pipeline_annealed(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                              RunManifest& man) {
    StageTimer t(man, "annealed", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double W = cfg.num("halfwidth");
    const double xi = cfg.num("xi"), gamma = cfg.num("gamma");
    const auto n_real = static_cast<std::size_t>(cfg.integer("n_realizations"));
    const double L = 1.0;
    const double dx = 2.0 * W / static_cast<double>(n);
    const double eta = 2.0 * dx;
    const double fit_lo = cfg.num("fit_lo_eta_mult") * eta;
    const double fit_hi = cfg.num("fit_hi");
    KernelSpec spec;
    spec.xi = xi;
    spec.L = L;
    const QuenchedKernelTable table(spec, n, W);
    std::vector<std::int64_t> cells;
    std::int64_t prev = 0;
    for (double lr : log_spaced(fit_lo, fit_hi, 8)) {
        const auto k = table.snap(std::exp(lr));
        if (k > prev) {
            cells.push_back(k);
            prev = k;
        }
    }
    std::vector<std::vector<double>> inv(n_real, std::vector<double>(cells.size()));
    std::vector<std::unique_ptr<LogFieldSampler>> samplers;
    for (unsigned j = 0; j < std::max(1u, cfg.jobs); ++j)
        samplers.push_back(std::make_unique<LogFieldSampler>(n, W, L, eta));
    parallel_tasks(n_real, cfg.jobs, [&](unsigned tid, std::size_t i) {
        auto mu = build_chaos_measure(
            samplers[tid]->sample(derive_seed(cfg.root_seed, "annealed", i)), gamma);
        for (std::size_t s = 0; s < cells.size(); ++s)
            inv[i][s] = 0.5 / table.evaluate(cells[s], mu, 0.0);
    });
    CsvWriter curve(out_path(dir, "annealed_density.csv"), {"r", "density"});
    std::vector<double> lr(cells.size()), ld(cells.size());
    for (std::size_t s = 0; s < cells.size(); ++s) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_real; ++i) acc += inv[i][s];
        const double d = acc / static_cast<double>(n_real);
        const double r = static_cast<double>(cells[s]) * dx;
        curve.row(r, d);
        lr[s] = std::log(r);
        ld[s] = std::log(d);
    }
    const auto f = fit_line(lr, ld);
    const double target = -(xi + 4.0 * gamma * gamma);
    CsvWriter summary(out_path(dir, "annealed_summary.csv"),
                      {"slope", "target", "abs_dev", "n_realizations"});
    summary.row(f.slope, target, std::abs(f.slope - target),
                static_cast<std::int64_t>(n_real));
    add_output(man, dir, "annealed_density.csv");
    add_output(man, dir, "annealed_summary.csv");
}

inline void write_raster(const std::filesystem::path& dir, const std::string& file,
                         PhaseSetting a, PhaseSetting b, std::size_t nx, std::size_t ng,
                         RunManifest& man) {
    CsvWriter csv(detail::out_path(dir, file),
                  {"xi", "gamma", "setting", "verdict", "method", "flags"});
    for (auto setting : {a, b}) {
        auto raster = verdict_raster(setting, 0.0, 2.0, nx, 0.0, 0.7, ng);
        for (const auto& c : raster) {
            auto v = analytic_phase(c.xi, c.gamma, setting);
            csv.row(c.xi, c.gamma, to_string(setting), to_string(c.verdict), "analytic",
                    v.near_boundary ? "near-boundary" : "");
        }
    }
    add_output(man, dir, file);
}

inline void pipeline_fig5(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                          RunManifest& man) {
    StageTimer t(man, "fig5", cfg.root_seed);
    const auto nx = static_cast<std::size_t>(cfg.integer("grid"));
    write_raster(dir, "fig5_phases.csv", PhaseSetting::mf_quenched, PhaseSetting::mf_annealed,
                 nx, nx, man);
}

inline void pipeline_fig7(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                          RunManifest& man) {
    StageTimer t(man, "fig7", cfg.root_seed);
    const auto nx = static_cast<std::size_t>(cfg.integer("grid"));
    write_raster(dir, "fig7_phases.csv", PhaseSetting::mlbm_quenched,
                 PhaseSetting::mlbm_annealed, nx, nx, man);
}

inline void pipeline_mapping(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                             RunManifest& man) {
    StageTimer t(man, "mapping", cfg.root_seed);
    const auto n = static_cast<std::size_t>(cfg.integer("n_pairs"));
    GaussianRng rng(derive_seed(cfg.root_seed, "mapping"));
    CsvWriter csv(out_path(dir, "mapping_check.csv"),
                  {"xi", "gamma", "annealed", "mk_verdict", "mlbm_verdict", "equal"});
    for (std::size_t i = 0; i < n; ++i) {
        const double xi = 2.5 * rng.uniform();
        const double g = 0.7 * rng.uniform();
        for (bool annealed : {false, true}) {
            auto [mk, lbm] = phase_mapping_check(xi, g, annealed);  // throws on mismatch
            csv.row(xi, g, annealed ? 1 : 0, to_string(mk.verdict), to_string(lbm.verdict), 1);
        }
    }
    add_output(man, dir, "mapping_check.csv");
}

inline void pipeline_reg_limits(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                                RunManifest& man) {
    StageTimer t(man, "reg-limits", cfg.root_seed);
    const double xi = cfg.num("xi");
    CsvWriter curve(out_path(dir, "reg_limits_masses.csv"), {"beta", "eta", "mass"});
    CsvWriter summary(out_path(dir, "reg_limits_summary.csv"),
                      {"beta", "slope", "limit_class"});
    for (double beta : {2.0 * xi, xi, 0.5 * xi}) {
        auto rep = regularization_limit_study(xi, beta);
        for (std::size_t k = 0; k < rep.etas.size(); ++k)
            curve.row(beta, rep.etas[k], rep.masses[k]);
        const char* cls = rep.limit_class > 0 ? "zero" : (rep.limit_class < 0 ? "infinity" : "O(1)");
        summary.row(beta, rep.slope, cls);
    }
    add_output(man, dir, "reg_limits_masses.csv");
    add_output(man, dir, "reg_limits_summary.csv");
}

inline void pipeline_escape(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                            RunManifest& man) {
    StageTimer t(man, "escape", cfg.root_seed);
    const auto n_paths = static_cast<std::size_t>(cfg.integer("n_paths"));
    const double dt = cfg.num("dt");
    CsvWriter summary(out_path(dir, "escape_summary.csv"),
                      {"case", "mc_mean", "mc_stderr", "quadrature", "rel_err"});
    auto bm = [](double) { return 0.5; };
    auto ec1 = escape_time_check(bm, 0.0, 1.0, 0.5, n_paths, dt,
                                 derive_seed(cfg.root_seed, "escape-bm"), cfg.jobs);
    summary.row("brownian", ec1.mc_mean, ec1.mc_stderr, ec1.quadrature,
                std::abs(ec1.mc_mean - ec1.quadrature) / ec1.quadrature);
    auto rough = [](double r) { return 0.5 * std::pow(std::abs(r), 2.0 / 3.0) + 1e-4; };
    auto ec2 = escape_time_check(rough, 0.1, 1.0, 0.3, n_paths, dt,
                                 derive_seed(cfg.root_seed, "escape-rough"), cfg.jobs);
    summary.row("rough", ec2.mc_mean, ec2.mc_stderr, ec2.quadrature,
                std::abs(ec2.mc_mean - ec2.quadrature) / ec2.quadrature);
    export_exit_stats_csv(ec2, cfg.root_seed, out_path(dir, "escape_exit_stats.csv"));
    add_output(man, dir, "escape_summary.csv");
    add_output(man, dir, "escape_exit_stats.csv");
}

inline void pipeline_seiberg(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                             RunManifest& man) {
    StageTimer t(man, "seiberg", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const auto n_real = static_cast<std::size_t>(cfg.integer("n_realizations"));
    const double W = 1.0, L = 1.0;
    const double eta = 2.0 * 2.0 * W / static_cast<double>(n);
    LogFieldSampler sampler(n, W, L, eta);
    CsvWriter csv(out_path(dir, "seiberg_grid.csv"),
                  {"xi", "gamma", "threshold", "verdict", "expected", "match", "n_convergent",
                   "n_divergent", "n_indeterminate"});
    int mismatches = 0;
    for (double gamma : {0.1, 0.3, 0.5}) {
        std::vector<ChaosMeasure> ens;
        ens.reserve(n_real);
        for (std::size_t i = 0; i < n_real; ++i)
            ens.push_back(build_chaos_measure(
                sampler.sample(derive_seed(cfg.root_seed, "seiberg",
                                           i + static_cast<std::uint64_t>(gamma * 1e4))),
                gamma));
        const double thr = 1.0 + 2.0 * gamma * gamma;
        for (double off : {-0.45, -0.25, -0.12, 0.12, 0.30}) {
            const double xi = thr + off;
            auto rep = seiberg_test(xi, gamma, ens);
            const char* verdict = rep.majority == TrendClass::convergent ? "convergent"
                                  : rep.majority == TrendClass::divergent ? "divergent"
                                                                          : "indeterminate";
            const char* expected = off < 0 ? "convergent" : "divergent";
            const bool ok = std::string(verdict) == expected;
            if (!ok) ++mismatches;
            csv.row(xi, gamma, thr, verdict, expected, ok ? 1 : 0,
                    static_cast<std::int64_t>(rep.n_convergent),
                    static_cast<std::int64_t>(rep.n_divergent),
                    static_cast<std::int64_t>(rep.n_indeterminate));
        }
    }
    CsvWriter summary(out_path(dir, "seiberg_summary.csv"), {"cells", "mismatches"});
    summary.row(15, mismatches);
    add_output(man, dir, "seiberg_grid.csv");
    add_output(man, dir, "seiberg_summary.csv");
}

struct CalibCell {
    PhaseSetting setting;
    double xi, gamma;
    Verdict expected;
};

inline void pipeline_calib(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                           RunManifest& man) {
    StageTimer t(man, "calib", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double W = cfg.num("halfwidth");
    const double L = 1.0;
    const double eta = 2.0 * W / static_cast<double>(n) * 2.0;
    const auto n_real = static_cast<std::size_t>(cfg.integer("n_realizations"));

    EmpiricalPhaseConfig ecfg;
    ecfg.n_paths = static_cast<std::size_t>(cfg.integer("n_paths"));
    ecfg.horizon = cfg.num("horizon");
    ecfg.dt = cfg.num("dt");
    ecfg.jobs = cfg.jobs;

    const std::vector<CalibCell> cells{
        {PhaseSetting::monofractal, 0.5, 0.0, Verdict::regular},
        {PhaseSetting::mf_quenched, 0.5, 0.3, Verdict::regular},
        {PhaseSetting::mlbm_quenched, 1.0, 0.45, Verdict::regular},
        {PhaseSetting::monofractal, 1.5, 0.0, Verdict::exit},
        {PhaseSetting::mf_quenched, 1.2, 0.4, Verdict::exit},
        {PhaseSetting::mlbm_quenched, 1.8, 0.4, Verdict::exit},
        {PhaseSetting::mf_quenched, 1.8, 0.45, Verdict::natural},
        {PhaseSetting::mf_quenched, 1.9, 0.4, Verdict::natural},
        {PhaseSetting::mlbm_quenched, 2.6, 0.35, Verdict::natural},
    };

    LogFieldSampler sampler(n, W, L, eta);
    CsvWriter csv(out_path(dir, "calib_grid.csv"),
                  {"setting", "xi", "gamma", "expected", "verdict", "hit_fraction",
                   "absorbed_fraction", "branch_fraction", "match"});
    int matches = 0;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        const auto& cell = cells[ci];
        std::vector<ClockRate> rates;
        KernelSpec spec;
        spec.xi = cell.xi;
        spec.L = L;
        if (cell.setting == PhaseSetting::monofractal) {
            auto prof = tabulate_profile(spec, 0.0, 1e-5, 2.0, 64);
            rates.emplace_back([prof](double x) { return 0.5 / prof(x); });
        } else if (cell.setting == PhaseSetting::mf_quenched) {
            for (std::size_t i = 0; i < n_real; ++i) {
                auto mu = build_chaos_measure(
                    sampler.sample(derive_seed(cfg.root_seed, "calib-field", ci * 1000 + i)),
                    cell.gamma);
                auto prof = tabulate_quenched_profile(spec, mu, 0.0);
                rates.emplace_back([prof](double x) { return 0.5 / prof(x); });
            }
        } else {  // mlbm_quenched
            for (std::size_t i = 0; i < n_real; ++i) {
                MlbmSpec mspec;
                mspec.xi = cell.xi;
                mspec.gamma = cell.gamma;
                mspec.wall = 1.0;
                mspec.measure = build_chaos_measure(
                    sampler.sample(derive_seed(cfg.root_seed, "calib-field", ci * 1000 + i)),
                    cell.gamma);
                MlbmClockRate rate(mspec);
                rates.emplace_back([rate](double x) { return rate(x); });
            }
        }
        auto v = empirical_phase(rates, cell.xi, cell.gamma, cell.setting, ecfg,
                                 derive_seed(cfg.root_seed, "calib-run", ci));
        const bool ok = v.verdict == cell.expected;
        if (ok) ++matches;
        csv.row(to_string(cell.setting), cell.xi, cell.gamma, to_string(cell.expected),
                to_string(v.verdict), v.hit_fraction, v.absorbed_fraction, v.branch_fraction,
                ok ? 1 : 0);
    }
    CsvWriter summary(out_path(dir, "calib_summary.csv"), {"cells", "matches"});
    summary.row(static_cast<std::int64_t>(cells.size()), matches);
    add_output(man, dir, "calib_grid.csv");
    add_output(man, dir, "calib_summary.csv");
}

inline void pipeline_props34(const ExperimentConfig& cfg, const std::filesystem::path& dir,
                             RunManifest& man) {
    StageTimer t(man, "props34", cfg.root_seed);
    const auto n = cfg.integer("n_points");
    const double W = cfg.num("halfwidth");
    const double L = 1.0;
    const double eta = 2.0 * 2.0 * W / static_cast<double>(n);
    const double xi = cfg.num("xi"), gamma = cfg.num("gamma");
    const auto n_real = static_cast<std::size_t>(cfg.integer("n_realizations"));
    const auto n_paths = static_cast<std::size_t>(cfg.integer("n_paths"));
    const double horizon = cfg.num("horizon");
    const double dt = cfg.num("dt");
    const std::vector<double> res{4e-3, 1.26e-2, 4e-2, 1.26e-1};

    KernelSpec spec;
    spec.xi = xi;
    spec.L = L;
    LogFieldSampler sampler(n, W, L, eta);
    const QuenchedKernelTable table(spec, n, W);

    std::vector<double> med_mk, med_lbm;
    std::vector<double> pooled_mk_bins, pooled_lbm_bins;
    CsvWriter occ(out_path(dir, "props34_occupation.csv"),
                  {"alpha_bin", "time_fraction", "process_kind", "xi", "gamma", "seed"});
    for (std::size_t ri = 0; ri < n_real; ++ri) {
        const auto fseed = derive_seed(cfg.root_seed, "props34-field", ri);
        auto field = sampler.sample(fseed);
        auto mu = build_chaos_measure(field, gamma);
        auto prof = tabulate_quenched_profile(spec, mu, 0.0, 0.0, 0.0, 32, &table);
        MlbmSpec mspec;
        mspec.xi = xi;
        mspec.gamma = gamma;
        mspec.wall = 1.0;
        mspec.measure = mu;
        MlbmClockRate lbm_rate(mspec);
        TimeChangeOptions opts;
        opts.dt = dt;
        opts.outer_wall = 1.0;

        std::vector<double> mk_meds(n_paths), lbm_meds(n_paths);
        parallel_tasks(n_paths, cfg.jobs, [&](unsigned, std::size_t pj) {
            auto mk = time_changed_path([&prof](double x) { return 0.5 / prof(x); }, 0.5,
                                        horizon, horizon / 800.0,
                                        derive_seed(fseed, "mk-path", pj), opts);
            mk_meds[pj] = occupation_statistics(mk, field, res, 0.0).median_alpha;
            auto lb = time_changed_path(lbm_rate, 0.5, horizon, horizon / 800.0,
                                        derive_seed(fseed, "lbm-path", pj), opts);
            lbm_meds[pj] = occupation_statistics(lb, field, res, 2.0 * gamma).median_alpha;
        });
        for (std::size_t pj = 0; pj < n_paths; ++pj) {
            med_mk.push_back(mk_meds[pj]);
            med_lbm.push_back(lbm_meds[pj]);
        }
        // pooled per-realization occupation histograms (first path as sample)
        auto mk0 = time_changed_path([&prof](double x) { return 0.5 / prof(x); }, 0.5, horizon,
                                     horizon / 800.0, derive_seed(fseed, "mk-path", 0), opts);
        auto rep = occupation_statistics(mk0, field, res, 0.0);
        for (std::size_t b = 0; b < rep.bin_centers.size(); ++b)
            occ.row(rep.bin_centers[b], rep.time_fraction[b], "mk", xi, gamma, fseed);
        auto lb0 = time_changed_path(lbm_rate, 0.5, horizon, horizon / 800.0,
                                     derive_seed(fseed, "lbm-path", 0), opts);
        auto rep2 = occupation_statistics(lb0, field, res, 2.0 * gamma);
        for (std::size_t b = 0; b < rep2.bin_centers.size(); ++b)
            occ.row(rep2.bin_centers[b], rep2.time_fraction[b], "mlbm", xi, gamma, fseed);
    }
    const double m_mk = median_inplace(med_mk);
    const double m_lbm = median_inplace(med_lbm);
    CsvWriter summary(out_path(dir, "props34_summary.csv"),
                      {"process_kind", "median_alpha", "target", "abs_dev", "n_paths"});
    summary.row("mk", m_mk, 0.0, std::abs(m_mk), static_cast<std::int64_t>(med_mk.size()));
    summary.row("mlbm", m_lbm, 2.0 * gamma, std::abs(m_lbm - 2.0 * gamma),
                static_cast<std::int64_t>(med_lbm.size()));
    add_output(man, dir, "props34_occupation.csv");
    add_output(man, dir, "props34_summary.csv");
}

}  // namespace detail

inline const std::vector<ExperimentInfo>& experiment_registry() {
    static const std::vector<ExperimentInfo> reg = {
        {"fig1", "deterministic coefficient band and slope", "fig1",
         {{"n_r", "25"}, {"r_min", "1e-4"}, {"r_max", "1"}, {"fit_lo", "1e-3"},
          {"fit_hi", "1e-1"}}},
        {"fig2-left", "dual Bessel parameters a(xi), d_e(xi)", "fig2",
         {{"n_xi", "201"}}},
        {"fig2-right", "beta-regularized norms", "fig2", {{"eta", "0.2"}}},
        {"fig3", "field and chaos-measure realization at two cutoffs", "fig3",
         {{"n_points", "32768"}, {"gamma", "0.4"}, {"coarse_cutoff", "1e-2"},
          {"n_out", "4096"}}},
        {"gmc-mass", "chaos normalization and second-moment slope", "fig3",
         {{"n_points", "32768"}, {"gamma", "0.2"}, {"n_realizations", "10000"},
          {"fit_hi", "0.1"}}},
        {"fig4", "compensated moments of the quenched coefficient", "fig4",
         {{"n_points", "262144"}, {"halfwidth", "2.56"}, {"xi", "0.6666666666666666"},
          {"gamma", "0.2"}, {"n_realizations", "1000"}, {"fit_lo_eta_mult", "100"},
          {"fit_hi", "0.1"}}},
        {"prop2", "single-realization quenched structure slope", "fig4",
         {{"n_points", "1048576"}, {"halfwidth", "8"}, {"xi", "0.6666666666666666"},
          {"gammas", "0.2,0.4"}, {"fit_lo_eta_mult", "100"}, {"fit_hi", "0.05"}}},
        {"annealed", "ensemble-averaged inverse coefficient slope", "fig5",
         {{"n_points", "262144"}, {"halfwidth", "2.56"}, {"xi", "0.6666666666666666"},
          {"gamma", "0.2"}, {"n_realizations", "1000"}, {"fit_lo_eta_mult", "100"},
          {"fit_hi", "0.1"}}},
        {"fig5", "phase raster, multifractal Kraichnan", "fig5", {{"grid", "64"}}},
        {"fig7", "phase raster, multiplicative LBM", "fig7", {{"grid", "64"}}},
        {"mapping", "xi -> xi + 4 gamma^2 phase correspondence", "fig7",
         {{"n_pairs", "1000"}}},
        {"reg-limits", "vanishing-regularization trichotomy", "fig2",
         {{"xi", "0.6666666666666666"}}},
        {"escape", "escape times vs Green-function quadrature", "escape",
         {{"n_paths", "10000"}, {"dt", "1e-6"}}},
        {"seiberg", "chaos integrability straddling the Seiberg bound", "fig7",
         {{"n_points", "65536"}, {"n_realizations", "30"}}},
        {"calib", "empirical vs analytic phases on a 3x3 grid", "fig5",
         {{"n_points", "131072"}, {"halfwidth", "3.2"}, {"n_realizations", "30"},
          {"n_paths", "300"}, {"horizon", "5"}, {"dt", "1e-5"}}},
        {"props34", "occupation statistics of MK vs MLBM paths", "props34",
         {{"n_points", "262144"}, {"halfwidth", "3.2"}, {"xi", "0.5"}, {"gamma", "0.4"},
          {"n_realizations", "10"}, {"n_paths", "100"}, {"horizon", "2"}, {"dt", "1e-5"}}},
    };
    return reg;
}

inline RunManifest run_experiment(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    find_experiment(cfg.experiment);  // validates the name
    const auto outdir = fs::path(cfg.output_dir);
    fs::create_directories(outdir);

    RunManifest man;
    man.experiment = cfg.experiment;
    man.version = kVersion;
    man.root_seed = cfg.root_seed;
    man.cfg_hash = config_hash(cfg);
    man.output_dir_source = cfg.output_dir_source;
    man.params = cfg.params;

    char hash_hex[32];
    std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                  static_cast<unsigned long long>(man.cfg_hash));
    const auto cache_dir = outdir / ".mfk-cache" / (cfg.experiment + "-" + hash_hex);

    if (cfg.cache && fs::exists(cache_dir / "digests.json")) {
        // reuse the cached stage when every digest still matches
        try {
            auto cached = load_manifest((cache_dir / "digests.json").string());
            bool ok = cached.cfg_hash == man.cfg_hash;
            for (const auto& [file, digest] : cached.outputs)
                if (!ok || digest_file((cache_dir / file).string()) != digest) ok = false;
            if (ok) {
                for (const auto& [file, digest] : cached.outputs) {
                    fs::copy_file(cache_dir / file, outdir / file,
                                  fs::copy_options::overwrite_existing);
                    man.outputs.emplace_back(file, digest);
                }
                man.from_cache = true;
                save_manifest(man, (outdir / (cfg.experiment + "_manifest.json")).string());
                return man;
            }
        } catch (const std::exception&) {
            // corrupted cache: fall through and recompute
        }
        fs::remove_all(cache_dir);
    }

    using Pipeline = void (*)(const ExperimentConfig&, const fs::path&, RunManifest&);
    static const std::map<std::string, Pipeline> pipelines = {
        {"fig1", detail::pipeline_fig1},
        {"fig2-left", detail::pipeline_fig2_left},
        {"fig2-right", detail::pipeline_fig2_right},
        {"fig3", detail::pipeline_fig3},
        {"gmc-mass", detail::pipeline_gmc_mass},
        {"fig4", detail::pipeline_fig4},
        {"prop2", detail::pipeline_prop2},
        {"annealed", detail::pipeline_annealed},
        {"fig5", detail::pipeline_fig5},
        {"fig7", detail::pipeline_fig7},
        {"mapping", detail::pipeline_mapping},
        {"reg-limits", detail::pipeline_reg_limits},
        {"escape", detail::pipeline_escape},
        {"seiberg", detail::pipeline_seiberg},
        {"calib", detail::pipeline_calib},
        {"props34", detail::pipeline_props34},
    };
    pipelines.at(cfg.experiment)(cfg, outdir, man);
    for (auto& [file, digest] : man.outputs) digest = digest_file((outdir / file).string());

    if (cfg.cache) {
        fs::create_directories(cache_dir);
        for (const auto& [file, digest] : man.outputs)
            fs::copy_file(outdir / file, cache_dir / file, fs::copy_options::overwrite_existing);
        save_manifest(man, (cache_dir / "digests.json").string());
    }
    save_manifest(man, (outdir / (cfg.experiment + "_manifest.json")).string());
    return man;
}

}  // namespace mfk
