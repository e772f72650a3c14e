#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's solvers.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hemo_uq/network.hpp"

namespace oracle {

/// Dense Gaussian elimination with partial pivoting. A is row-major n x n.
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r * n + c]) > std::abs(a[piv * n + c])) piv = r;
        }
        if (a[piv * n + c] == 0.0) throw std::runtime_error("singular oracle system");
        if (piv != c) {
            for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[piv * n + k]);
            std::swap(b[c], b[piv]);
        }
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r * n + c] / a[c * n + c];
            for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
            b[r] -= f * b[c];
        }
    }
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
        x[i] = s / a[i * n + i];
    }
    return x;
}

/// Nodal analysis of a network whose resistive branches are all linear.
/// Capacitors carry no current at steady state. Returns every node
/// pressure (ground = 0) with the arterial source held at `arterial`.
inline std::vector<double> linear_node_pressures(const hemo_uq::NetworkModel& m, double arterial) {
    using hemo_uq::BranchKind;
    const std::size_t nn = m.node_count();
    std::vector<double> fixed(nn, 0.0);
    std::vector<bool> known(nn, false);
    known[0] = true;
    for (const auto& b : m.branches()) {
        if (b.kind != BranchKind::PressureSource) continue;
        known[b.to.index] = true;
        fixed[b.to.index] = b.signal == hemo_uq::SourceSignal::Arterial ? arterial : b.value;
    }
    std::vector<long> idx(nn, -1);
    std::size_t nu = 0;
    for (std::size_t i = 0; i < nn; ++i) {
        if (!known[i]) idx[i] = static_cast<long>(nu++);
    }
    std::vector<double> a(nu * nu, 0.0);
    std::vector<double> rhs(nu, 0.0);
    for (const auto& b : m.branches()) {
        if (b.kind == BranchKind::StarlingResistor) throw std::runtime_error("oracle is linear only");
        if (b.kind != BranchKind::LinearResistor) continue;
        const double g = 1.0 / b.value;
        const std::size_t ends[2] = {b.from.index, b.to.index};
        for (int e = 0; e < 2; ++e) {
            const std::size_t self = ends[e];
            const std::size_t other = ends[1 - e];
            if (idx[self] < 0) continue;
            const auto r = static_cast<std::size_t>(idx[self]);
            a[r * nu + r] += g;
            if (idx[other] >= 0) {
                a[r * nu + static_cast<std::size_t>(idx[other])] -= g;
            } else {
                rhs[r] += g * fixed[other];
            }
        }
    }
    const auto x = solve_dense(a, rhs);
    std::vector<double> p(nn);
    for (std::size_t i = 0; i < nn; ++i) p[i] = idx[i] >= 0 ? x[static_cast<std::size_t>(idx[i])] : fixed[i];
    return p;
}

/// Ishigami function moments for X_i ~ U(-pi, pi).
struct IshigamiIndices {
    double s1, s2, s3, st1, st2, st3;
};

inline IshigamiIndices ishigami_indices(double a = 7.0, double b = 0.1) {
    const double pi4 = std::pow(std::numbers::pi, 4);
    const double pi8 = pi4 * pi4;
    const double v1 = 0.5 * std::pow(1.0 + b * pi4 / 5.0, 2);
    const double v2 = a * a / 8.0;
    const double v13 = b * b * pi8 * (1.0 / 18.0 - 1.0 / 50.0);
    const double v = v1 + v2 + v13;
    return {v1 / v, v2 / v, 0.0, (v1 + v13) / v, v2 / v, v13 / v};
}

inline double ishigami_variance(double a = 7.0, double b = 0.1) {
    const double pi4 = std::pow(std::numbers::pi, 4);
    return a * a / 8.0 + b * pi4 / 5.0 + b * b * pi4 * pi4 / 18.0 + 0.5;
}

/// Source step P0 through R into C (node to ground), from rest.
inline double rc_step_pressure(double p0, double r, double c, double t) {
    return p0 * (1.0 - std::exp(-t / (r * c)));
}

/// Lognormal parameters matching a given mean and sd.
inline std::pair<double, double> lognormal_parameters(double mean, double sd) {
    const double s2 = std::log(1.0 + sd * sd / (mean * mean));
    return {std::log(mean) - 0.5 * s2, std::sqrt(s2)};
}

}  // namespace oracle
