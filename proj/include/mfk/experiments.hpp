#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mfk/common.hpp"
#include "mfk/csv.hpp"
#include "mfk/diffusion_engine.hpp"
#include "mfk/field_sampler.hpp"
#include "mfk/kraichnan_kernel.hpp"
#include "mfk/mlbm.hpp"
#include "mfk/phase_classifier.hpp"
#include "mfk/rng.hpp"
#include "mfk/scaling_lab.hpp"
#include "mfk/structure.hpp"

namespace mfk {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t root_seed = 20240601;
    std::string output_dir = ".";
    std::string output_dir_source = "default";  // default | env | flag | file
    bool cache = true;
    unsigned jobs = 1;
    std::map<std::string, std::string> params;  // experiment parameters (after defaults)

    double num(const std::string& key) const {
        auto it = params.find(key);
        require(it != params.end(), "missing parameter: " + key);
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            require(pos == it->second.size(), "trailing junk");
            return v;
        } catch (const std::exception&) {
            throw invalid_parameter("parameter " + key + " is not a number: " + it->second);
        }
    }
    std::int64_t integer(const std::string& key) const {
        const double v = num(key);
        require(v == std::floor(v), "parameter " + key + " must be an integer");
        return static_cast<std::int64_t>(v);
    }
};

struct ExperimentInfo {
    std::string name;
    std::string description;
    std::string figure;  // which figure/table of the study it reproduces
    std::map<std::string, std::string> defaults;
};

const std::vector<ExperimentInfo>& experiment_registry();

inline const ExperimentInfo& find_experiment(const std::string& name) {
    for (const auto& e : experiment_registry())
        if (e.name == name) return e;
    std::string names;
    for (const auto& e : experiment_registry()) names += (names.empty() ? "" : ", ") + e.name;
    throw invalid_parameter("unknown experiment '" + name + "'; valid names: " + names);
}

/// Strict flat key = value parser. Unknown keys are rejected; omitted keys
/// take registry defaults (echoed into the manifest).
inline ExperimentConfig parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        require(eq != std::string::npos,
                "config line " + std::to_string(lineno) + " is not key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        require(!key.empty() && !val.empty(),
                "config line " + std::to_string(lineno) + " has an empty key or value");
        require(!kv.count(key), "duplicate key: " + key);
        kv[key] = val;
    }
    require(kv.count("experiment"), "config must set 'experiment'");
    ExperimentConfig cfg;
    cfg.experiment = kv["experiment"];
    kv.erase("experiment");
    const auto& info = find_experiment(cfg.experiment);
    cfg.params = info.defaults;
    for (auto& [k, v] : kv) {
        if (k == "seed") {
            cfg.root_seed = std::stoull(v);
        } else if (k == "output_dir") {
            cfg.output_dir = v;
            cfg.output_dir_source = "file";
        } else if (k == "cache") {
            require(v == "on" || v == "off", "cache must be on or off");
            cfg.cache = v == "on";
        } else if (k == "jobs") {
            cfg.jobs = static_cast<unsigned>(std::stoul(v));
        } else {
            require(cfg.params.count(k),
                    "unknown key '" + k + "' for experiment " + cfg.experiment);
            cfg.params[k] = v;
        }
    }
    return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw invalid_parameter("cannot read config file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    auto cfg = parse_config_text(ss.str());
    if (cfg.output_dir_source == "default") {
        if (const char* env = std::getenv("MFK_OUTPUT_DIR")) {
            cfg.output_dir = env;
            cfg.output_dir_source = "env";
        }
    }
    return cfg;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::ostringstream ss;
    ss << "experiment=" << cfg.experiment << '\n' << "seed=" << cfg.root_seed << '\n'
       << "version=" << kVersion << '\n';
    for (const auto& [k, v] : cfg.params) ss << k << '=' << v << '\n';
    const auto s = ss.str();
    return fnv1a64_bytes(s.data(), s.size());
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string experiment;
    std::string version;
    std::uint64_t root_seed = 0;
    std::uint64_t cfg_hash = 0;
    std::string output_dir_source;
    bool from_cache = false;
    std::map<std::string, std::string> params;
    std::vector<std::pair<std::string, double>> stage_wall_ms;  // (stage, ms)
    std::vector<std::pair<std::string, std::uint64_t>> stage_seeds;
    std::vector<std::pair<std::string, std::uint64_t>> outputs;  // (file, digest)
};

inline std::uint64_t digest_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw numerical_error("cannot digest missing file: " + path);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (f.read(buf, sizeof buf) || f.gcount() > 0) {
        const auto got = static_cast<std::size_t>(f.gcount());
        for (std::size_t i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (!f) break;
    }
    return h;
}

inline void save_manifest(const RunManifest& m, const std::string& path) {
    nlohmann::json j;
    j["experiment"] = m.experiment;
    j["version"] = m.version;
    j["root_seed"] = m.root_seed;
    j["config_hash"] = m.cfg_hash;
    j["output_dir_source"] = m.output_dir_source;
    j["from_cache"] = m.from_cache;
    j["params"] = m.params;
    for (const auto& [n, ms] : m.stage_wall_ms) j["stages"].push_back({{"name", n}, {"wall_ms", ms}});
    for (const auto& [n, s] : m.stage_seeds) j["stage_seeds"].push_back({{"name", n}, {"seed", s}});
    for (const auto& [f, d] : m.outputs) j["outputs"].push_back({{"file", f}, {"digest", d}});
    std::ofstream out(path, std::ios::binary);
    if (!out) throw numerical_error("cannot write manifest: " + path);
    out << j.dump(2) << '\n';
}

inline RunManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw invalid_parameter("cannot read manifest: " + path);
    nlohmann::json j;
    in >> j;
    RunManifest m;
    m.experiment = j.at("experiment").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.root_seed = j.at("root_seed").get<std::uint64_t>();
    m.cfg_hash = j.at("config_hash").get<std::uint64_t>();
    m.output_dir_source = j.value("output_dir_source", "");
    m.from_cache = j.value("from_cache", false);
    if (j.contains("params"))
        m.params = j.at("params").get<std::map<std::string, std::string>>();
    if (j.contains("outputs"))
        for (const auto& o : j.at("outputs"))
            m.outputs.emplace_back(o.at("file").get<std::string>(),
                                   o.at("digest").get<std::uint64_t>());
    return m;
}

struct VerifyReport {
    bool pass = true;
    std::vector<std::string> mismatches;
};

/// Recomputes output digests relative to the manifest's directory.
inline VerifyReport verify_manifest(const std::string& manifest_path) {
    namespace fs = std::filesystem;
    const auto m = load_manifest(manifest_path);
    const auto dir = fs::path(manifest_path).parent_path();
    VerifyReport rep;
    for (const auto& [file, digest] : m.outputs) {
        const auto p = (dir / file).string();
        try {
            if (digest_file(p) != digest) {
                rep.pass = false;
                rep.mismatches.push_back(file);
            }
        } catch (const std::exception&) {
            rep.pass = false;
            rep.mismatches.push_back(file + " (missing)");
        }
    }
    return rep;
}

RunManifest run_experiment(const ExperimentConfig& cfg);

}  // namespace mfk

#include "mfk/experiments_impl.hpp"
