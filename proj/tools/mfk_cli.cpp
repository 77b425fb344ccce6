// Command-line runner for the experiment registry.
//
// Exit codes: 0 success, 2 config rejection, 3 numerical failure,
// 4 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

#include "mfk/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"mfk - multifractal Kraichnan flow toolkit"};
    app.require_subcommand(1);

    std::string config_path, manifest_path, output_dir;
    std::uint64_t seed = 0;
    bool seed_set = false, no_cache = false;
    unsigned jobs = 0;

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    run->add_option("config", config_path, "key = value config file")->required();
    run->add_option("--seed", seed, "override the root seed")->each([&](const std::string&) {
        seed_set = true;
    });
    run->add_option("--jobs", jobs, "worker threads for ensembles");
    run->add_option("--output", output_dir, "output directory");
    run->add_flag("--no-cache", no_cache, "disable the stage cache");

    auto* list = app.add_subcommand("list", "list registered experiments");

    auto* verify = app.add_subcommand("verify", "recompute output digests of a run manifest");
    verify->add_option("manifest", manifest_path, "manifest JSON written by run")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (list->parsed()) {
            for (const auto& e : mfk::experiment_registry())
                std::printf("%-12s [%s] %s\n", e.name.c_str(), e.figure.c_str(),
                            e.description.c_str());
            return 0;
        }
        if (verify->parsed()) {
            auto rep = mfk::verify_manifest(manifest_path);
            if (rep.pass) {
                std::printf("verify: PASS\n");
                return 0;
            }
            for (const auto& m : rep.mismatches)
                std::fprintf(stderr, "verify: digest mismatch in %s\n", m.c_str());
            return 4;
        }
        // run
        mfk::ExperimentConfig cfg;
        try {
            cfg = mfk::parse_config_file(config_path);
            if (seed_set) cfg.root_seed = seed;
            if (jobs > 0) cfg.jobs = jobs;
            if (no_cache) cfg.cache = false;
            if (!output_dir.empty()) {
                cfg.output_dir = output_dir;
                cfg.output_dir_source = "flag";
            }
        } catch (const std::exception& e) {
            std::fprintf(stderr, "config rejected: %s\n", e.what());
            return 2;
        }
        const auto man = mfk::run_experiment(cfg);
        std::printf("%s: wrote %zu output(s) to %s%s\n", cfg.experiment.c_str(),
                    man.outputs.size(), cfg.output_dir.c_str(),
                    man.from_cache ? " (from cache)" : "");
        return 0;
    } catch (const mfk::invalid_parameter& e) {
        std::fprintf(stderr, "config rejected: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 3;
    }
}
