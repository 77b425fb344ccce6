#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <utility>
#include <vector>

#include "mfk/common.hpp"

namespace mfk {

/// Uniform grid sample of the regularized log-correlated field.
/// Samples live at cell midpoints x_i = -W + (i + 1/2) dx; the cell
/// [x_i - dx/2, x_i + dx/2) is the support of weight i in a ChaosMeasure.
struct FieldGrid {
    double domain_halfwidth = 1.0;     // grid covers [-W, W]
    std::int64_t n_points = 0;         // power of two
    double correlation_length = 1.0;   // L
    double cutoff = 0.0;               // eta, >= 2 dx
    std::uint64_t seed = 0;
    std::vector<double> values;        // field samples at midpoints

    double dx() const { return 2.0 * domain_halfwidth / static_cast<double>(n_points); }
    double x_mid(std::int64_t i) const { return -domain_halfwidth + (static_cast<double>(i) + 0.5) * dx(); }
    /// Index of the cell containing x (clamped to the grid).
    std::int64_t cell_of(double x) const {
        auto i = static_cast<std::int64_t>((x + domain_halfwidth) / dx());
        if (i < 0) i = 0;
        if (i >= n_points) i = n_points - 1;
        return i;
    }
    /// Pinned variance of the regularized field: log(L/eta) + v0 with v0 = 1.
    double variance() const { return std::log(correlation_length / cutoff) + 1.0; }
};

/// Grid approximation of the chaos measure mu(dx) = Z^-1 exp(2 gamma Gamma) dx.
/// weights[i] is the mass of cell i; gamma = 0 collapses to cell lengths.
struct ChaosMeasure {
    std::shared_ptr<const FieldGrid> grid;
    double gamma = 0.0;
    double normalization = 1.0;  // Z_eta
    std::vector<double> weights;

    double dx() const { return grid->dx(); }
    double total_mass(double a, double b) const;  // mass of [a, b] with partial cells
};

inline double ChaosMeasure::total_mass(double a, double b) const {
    if (b < a) std::swap(a, b);
    const double W = grid->domain_halfwidth;
    require(a >= -W && b <= W, "measure window outside grid domain");
    const double d = dx();
    const double fa = (a + W) / d, fb = (b + W) / d;
    auto ia = static_cast<std::int64_t>(fa);
    auto ib = static_cast<std::int64_t>(fb);
    if (ia >= grid->n_points) ia = grid->n_points - 1;
    if (ib >= grid->n_points) ib = grid->n_points - 1;
    if (ia == ib) return weights[ia] * (fb - fa);
    double m = weights[ia] * (static_cast<double>(ia + 1) - fa);
    for (std::int64_t i = ia + 1; i < ib; ++i) m += weights[i];
    m += weights[ib] * (fb - static_cast<double>(ib));
    return m;
}

// ---------------------------------------------------------------------------
// Binary dumps: 64-byte header (magic, version, n_points, L, eta, gamma, seed,
// halfwidth) followed by little-endian IEEE-754 doubles.
// ---------------------------------------------------------------------------

namespace detail {

struct DumpHeader {
    char magic[8];
    std::uint32_t version;
    std::uint32_t pad;
    std::uint64_t n_points;
    double L;
    double eta;
    double gamma;
    std::uint64_t seed;
    double halfwidth;
};
static_assert(sizeof(DumpHeader) == 64, "dump header must be 64 bytes");

inline void write_dump(const std::string& path, const char* magic, const FieldGrid& g,
                       double gamma, const std::vector<double>& payload) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw numerical_error("cannot open for writing: " + path);
    DumpHeader h{};
    std::memcpy(h.magic, magic, 8);
    h.version = 1;
    h.n_points = static_cast<std::uint64_t>(g.n_points);
    h.L = g.correlation_length;
    h.eta = g.cutoff;
    h.gamma = gamma;
    h.seed = g.seed;
    h.halfwidth = g.domain_halfwidth;
    f.write(reinterpret_cast<const char*>(&h), sizeof h);
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!f) throw numerical_error("short write: " + path);
}

inline DumpHeader read_dump(const std::string& path, const char* magic, std::vector<double>& payload) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw numerical_error("cannot open: " + path);
    DumpHeader h{};
    f.read(reinterpret_cast<char*>(&h), sizeof h);
    if (!f || std::memcmp(h.magic, magic, 8) != 0 || h.version != 1)
        throw numerical_error("bad dump header: " + path);
    payload.resize(h.n_points);
    f.read(reinterpret_cast<char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(double)));
    if (!f) throw numerical_error("truncated dump: " + path);
    return h;
}

}  // namespace detail

inline void save_field(const FieldGrid& g, const std::string& path) {
    detail::write_dump(path, "MFKFLD1\0", g, 0.0, g.values);
}

inline FieldGrid load_field(const std::string& path) {
    FieldGrid g;
    auto h = detail::read_dump(path, "MFKFLD1\0", g.values);
    g.n_points = static_cast<std::int64_t>(h.n_points);
    g.correlation_length = h.L;
    g.cutoff = h.eta;
    g.seed = h.seed;
    g.domain_halfwidth = h.halfwidth;
    return g;
}

inline void save_measure(const ChaosMeasure& mu, const std::string& path) {
    detail::write_dump(path, "MFKMEA1\0", *mu.grid, mu.gamma, mu.weights);
}

}  // namespace mfk
