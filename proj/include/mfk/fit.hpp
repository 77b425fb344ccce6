#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "mfk/common.hpp"

namespace mfk {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;  // from fit residuals
    double r2 = 0.0;
};

/// Weighted least-squares line fit y = a + b x. Unit weights if w is empty.
inline LineFit fit_line(std::span<const double> x, std::span<const double> y,
                        std::span<const double> w = {}) {
    require(x.size() == y.size() && x.size() >= 2, "fit_line: need >= 2 points");
    const std::size_t n = x.size();
    double sw = 0, sx = 0, sy = 0;
    auto wi = [&](std::size_t i) { return w.empty() ? 1.0 : w[i]; };
    for (std::size_t i = 0; i < n; ++i) {
        sw += wi(i);
        sx += wi(i) * x[i];
        sy += wi(i) * y[i];
    }
    const double xm = sx / sw, ym = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += wi(i) * (x[i] - xm) * (x[i] - xm);
        sxy += wi(i) * (x[i] - xm) * (y[i] - ym);
    }
    require(sxx > 0, "fit_line: degenerate abscissae");
    LineFit f;
    f.slope = sxy / sxx;
    f.intercept = ym - f.slope * xm;
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y[i] - (f.intercept + f.slope * x[i]);
        ss_res += wi(i) * e * e;
        ss_tot += wi(i) * (y[i] - ym) * (y[i] - ym);
    }
    if (n > 2) f.stderr_slope = std::sqrt(ss_res / (static_cast<double>(n - 2) * sxx));
    f.r2 = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
    return f;
}

inline double median_inplace(std::vector<double>& v) {
    require(!v.empty(), "median of empty vector");
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    double hi = v[v.size() / 2];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + v.size() / 2 - 1, v.end());
    return 0.5 * (hi + v[v.size() / 2 - 1]);
}

inline double mean(std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sample_sd(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

/// Standard error of the mean.
inline double standard_error(std::span<const double> v) {
    return v.size() < 2 ? 0.0 : sample_sd(v) / std::sqrt(static_cast<double>(v.size()));
}

/// Two-sample Kolmogorov-Smirnov statistic. Critical value at level alpha is
/// c(alpha) sqrt((n+m)/(nm)) with c(0.01) = 1.628, c(0.05) = 1.358.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "ks_statistic: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j])
            ++i;
        else
            ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

inline double ks_critical(double n, double m, double c = 1.628) {
    return c * std::sqrt((n + m) / (n * m));
}

}  // namespace mfk
