#pragma once

/**
 * @file statistics.hpp
 * @brief Ensemble statistics for one output column: stable moments, type-7
 * quantiles, histogram, Gaussian KDE and Tukey boxplot.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "hemo_uq/errors.hpp"

namespace hemo_uq {

/// One-pass (Welford) mean and unbiased variance.
class RunningMoments {
public:
    void add(double x) {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }

    [[nodiscard]] std::size_t count() const { return n_; }
    [[nodiscard]] double mean() const { return mean_; }
    [[nodiscard]] double variance() const {
        return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0;
    }
    [[nodiscard]] double sd() const { return std::sqrt(variance()); }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

/// Hyndman-Fan type 7 quantile (linear between order statistics) of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double p) {
    detail::require(!sorted.empty(), "quantile of an empty sample");
    detail::require(p >= 0.0 && p <= 1.0, "quantile level must lie in [0, 1]");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Histogram {
    std::vector<double> edges;        ///< bins + 1 edges
    std::vector<std::size_t> counts;  ///< one per bin; sums to the sample size
};

/// Equal-width histogram over [min, max]. Default bin count follows the
/// Rice rule 2 n^(1/3), kept within [10, 100]. The last bin is closed.
inline Histogram histogram(std::span<const double> x, std::size_t bins = 0) {
    detail::require(!x.empty(), "histogram of an empty sample");
    if (bins == 0) {
        const double rice = 2.0 * std::cbrt(static_cast<double>(x.size()));
        bins = static_cast<std::size_t>(std::clamp(std::ceil(rice), 10.0, 100.0));
    }
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    double lo = *mn;
    double hi = *mx;
    if (!(hi > lo)) {
        // Constant column: a single unit-width bin centred on the value.
        bins = 1;
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram h;
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
        h.edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    }
    h.counts.assign(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (double v : x) {
        auto b = static_cast<std::size_t>((v - lo) / width);
        if (b >= bins) b = bins - 1;
        ++h.counts[b];
    }
    return h;
}

struct KernelDensity {
    double bandwidth = 0.0;
    bool degenerate = false;  ///< zero spread: no density curve
    std::vector<double> grid;
    std::vector<double> density;
};

/// Silverman's rule of thumb, 0.9 min(sd, IQR/1.34) n^(-1/5).
inline double silverman_bandwidth(std::span<const double> sorted, double sd) {
    const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    return 0.9 * spread * std::pow(static_cast<double>(sorted.size()), -0.2);
}

/**
 * Gaussian KDE with Silverman bandwidth on an evenly spaced grid spanning
 * [min - 4h, max + 4h], so the curve carries essentially all of its mass.
 */
inline KernelDensity kernel_density(std::span<const double> x, std::size_t grid_points = 512) {
    detail::require(x.size() >= 2, "KDE needs at least two samples");
    detail::require(grid_points >= 2, "KDE grid needs at least two points");
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    RunningMoments m;
    for (double v : sorted) m.add(v);

    KernelDensity k;
    if (!(sorted.back() > sorted.front()) || !(m.sd() > 0.0)) {
        k.degenerate = true;
        return k;
    }
    k.bandwidth = silverman_bandwidth(sorted, m.sd());
    const double h = k.bandwidth;
    const double lo = sorted.front() - 4.0 * h;
    const double hi = sorted.back() + 4.0 * h;
    k.grid.resize(grid_points);
    k.density.assign(grid_points, 0.0);
    const double step = (hi - lo) / static_cast<double>(grid_points - 1);
    for (std::size_t g = 0; g < grid_points; ++g) k.grid[g] = lo + step * static_cast<double>(g);

    // Kernels are cut at 8h where they are below 1e-14 of their peak.
    const double norm = 1.0 / (static_cast<double>(sorted.size()) * h * std::sqrt(2.0 * std::numbers::pi));
    const double reach = 8.0 * h;
    for (double v : sorted) {
        const auto g0 = static_cast<std::size_t>(std::max(0.0, std::floor((v - reach - lo) / step)));
        const auto g1 = std::min(grid_points - 1,
                                 static_cast<std::size_t>(std::ceil((v + reach - lo) / step)));
        for (std::size_t g = g0; g <= g1; ++g) {
            const double z = (k.grid[g] - v) / h;
            k.density[g] += norm * std::exp(-0.5 * z * z);
        }
    }
    return k;
}

/// Trapezoidal integral of a curve sampled on `grid`.
inline double trapezoid(std::span<const double> grid, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 1; i < grid.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (grid[i] - grid[i - 1]);
    return s;
}

/// Tukey boxplot statistics.
struct BoxplotStats {
    double q1 = 0.0;
    double median = 0.0;
    double q3 = 0.0;
    double iqr = 0.0;
    double whisker_low = 0.0;   ///< smallest sample >= q1 - 1.5 IQR
    double whisker_high = 0.0;  ///< largest sample <= q3 + 1.5 IQR
    std::vector<double> outliers;
};

inline BoxplotStats boxplot(std::span<const double> x) {
    detail::require(!x.empty(), "boxplot of an empty sample");
    std::vector<double> s(x.begin(), x.end());
    std::sort(s.begin(), s.end());
    BoxplotStats b;
    b.q1 = quantile_sorted(s, 0.25);
    b.median = quantile_sorted(s, 0.5);
    b.q3 = quantile_sorted(s, 0.75);
    b.iqr = b.q3 - b.q1;
    const double fence_lo = b.q1 - 1.5 * b.iqr;
    const double fence_hi = b.q3 + 1.5 * b.iqr;
    b.whisker_low = b.q1;
    b.whisker_high = b.q3;
    for (double v : s) {
        if (v < fence_lo || v > fence_hi) {
            b.outliers.push_back(v);
        } else {
            b.whisker_low = std::min(b.whisker_low, v);
            b.whisker_high = std::max(b.whisker_high, v);
        }
    }
    return b;
}

/// Number of strict local maxima of a sampled curve (plateaus count once).
inline std::size_t count_local_maxima(std::span<const double> y) {
    std::size_t peaks = 0;
    std::size_t i = 1;
    while (i + 1 < y.size()) {
        if (y[i] > y[i - 1]) {
            std::size_t j = i;
            while (j + 1 < y.size() && y[j + 1] == y[i]) ++j;
            if (j + 1 < y.size() && y[j + 1] < y[i]) ++peaks;
            i = j + 1;
        } else {
            ++i;
        }
    }
    return peaks;
}

}  // namespace hemo_uq
