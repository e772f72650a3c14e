#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "hemo_uq/errors.hpp"

namespace hemo_uq {

/// One cosine term a * cos(2*pi*k*t/T + phase).
struct Harmonic {
    int order = 1;
    double amplitude = 0.0;
    double phase = 0.0;
};

/**
 * Periodic arterial pressure signal [mmHg] driving the network.
 *
 * The shape is stored normalised to [0, 1] over one period and mapped
 * affinely onto [DP, SP], so the maximum over a period is exactly SP and
 * the minimum exactly DP. Constant signals have SP == DP.
 */
class Waveform {
public:
    enum class Kind { Constant, Fourier, Tabulated };

    static Waveform constant(double pressure, double period = 1.0) {
        detail::require(period > 0.0, "waveform period must be positive");
        Waveform w;
        w.kind_ = Kind::Constant;
        w.period_ = period;
        w.sp_ = pressure;
        w.dp_ = pressure;
        return w;
    }

    static Waveform fourier(std::vector<Harmonic> harmonics, double sp, double dp, double period) {
        detail::require(period > 0.0, "waveform period must be positive");
        detail::require(!harmonics.empty(), "fourier waveform needs at least one harmonic");
        for (const auto& h : harmonics) {
            detail::require(h.order >= 1, "harmonic order must be >= 1");
        }
        Waveform w;
        w.kind_ = Kind::Fourier;
        w.period_ = period;
        w.harmonics_ = std::move(harmonics);
        w.locate_fourier_extrema();
        w.set_anchors(sp, dp);
        return w;
    }

    /// Samples (t, P) over one period, t in [0, T); periodically extended with
    /// linear interpolation. Only the shape is kept: the samples are rescaled
    /// onto [dp, sp].
    static Waveform tabulated(std::vector<double> times, std::vector<double> pressures, double sp,
                              double dp, double period) {
        detail::require(period > 0.0, "waveform period must be positive");
        detail::require(times.size() == pressures.size() && times.size() >= 2,
                        "tabulated waveform needs at least two (t, P) samples");
        for (std::size_t i = 0; i < times.size(); ++i) {
            detail::require(times[i] >= 0.0 && times[i] < period,
                            "tabulated waveform times must lie in [0, T)");
            detail::require(i == 0 || times[i] > times[i - 1],
                            "tabulated waveform times must be strictly increasing");
        }
        const auto [lo, hi] = std::minmax_element(pressures.begin(), pressures.end());
        detail::require(*hi > *lo, "tabulated waveform is flat");
        Waveform w;
        w.kind_ = Kind::Tabulated;
        w.period_ = period;
        w.shape_min_ = *lo;
        w.shape_max_ = *hi;
        w.argmax_ = times[static_cast<std::size_t>(hi - pressures.begin())];
        w.times_ = std::move(times);
        w.samples_ = std::move(pressures);
        w.set_anchors(sp, dp);
        return w;
    }

    /// Two-harmonic ophthalmic-artery profile cos(th) + 0.5 cos(2 th) with the
    /// diastolic minimum at t = 0 and the systolic peak at t = T/3. Its time
    /// average is exactly SP/3 + 2 DP/3.
    static Waveform ophthalmic_default(double sp, double dp, double period = 1.0) {
        constexpr double third = 2.0 * std::numbers::pi / 3.0;
        return fourier({{1, 1.0, -third}, {2, 0.5, -2.0 * third}}, sp, dp, period);
    }

    /// Same shape, new SP/DP anchors.
    [[nodiscard]] Waveform with_anchors(double sp, double dp) const {
        Waveform w = *this;
        if (kind_ == Kind::Constant) {
            detail::require(sp == dp, "constant waveform needs SP == DP");
            w.sp_ = sp;
            w.dp_ = dp;
        } else {
            w.set_anchors(sp, dp);
        }
        return w;
    }

    [[nodiscard]] double operator()(double t) const {
        if (kind_ == Kind::Constant) {
            return sp_;
        }
        return dp_ + (sp_ - dp_) * normalized(t);
    }

    /// Shape value in [0, 1] at time t.
    [[nodiscard]] double normalized(double t) const {
        if (kind_ == Kind::Constant) {
            return 0.0;
        }
        return (raw(t) - shape_min_) / (shape_max_ - shape_min_);
    }

    [[nodiscard]] Kind kind() const { return kind_; }
    [[nodiscard]] double period() const { return period_; }
    [[nodiscard]] double systolic() const { return sp_; }
    [[nodiscard]] double diastolic() const { return dp_; }
    /// Offset in [0, T) of the systolic peak.
    [[nodiscard]] double argmax() const { return argmax_; }
    [[nodiscard]] const std::vector<Harmonic>& harmonics() const { return harmonics_; }

private:
    Waveform() = default;

    void set_anchors(double sp, double dp) {
        detail::require(std::isfinite(sp) && std::isfinite(dp), "SP/DP must be finite");
        detail::require(sp > dp, "waveform requires SP > DP");
        sp_ = sp;
        dp_ = dp;
    }

    [[nodiscard]] double raw(double t) const {
        double phase = std::fmod(t, period_);
        if (phase < 0.0) {
            phase += period_;
        }
        if (kind_ == Kind::Fourier) {
            const double theta = 2.0 * std::numbers::pi * phase / period_;
            double g = 0.0;
            for (const auto& h : harmonics_) {
                g += h.amplitude * std::cos(h.order * theta + h.phase);
            }
            return g;
        }
        // tabulated, periodic linear interpolation
        const auto it = std::upper_bound(times_.begin(), times_.end(), phase);
        const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
        const std::size_t n = times_.size();
        const std::size_t i1 = hi % n;
        const std::size_t i0 = (hi + n - 1) % n;
        double t0 = times_[i0];
        double t1 = times_[i1];
        if (hi == 0) {
            t0 -= period_;
        }
        if (hi == n) {
            t1 += period_;
        }
        const double w = (phase - t0) / (t1 - t0);
        return samples_[i0] + w * (samples_[i1] - samples_[i0]);
    }

    // Dense scan followed by golden-section refinement of both extrema.
    void locate_fourier_extrema() {
        constexpr int scan = 4096;
        const double h = period_ / scan;
        int imin = 0;
        int imax = 0;
        std::vector<double> g(scan);
        for (int i = 0; i < scan; ++i) {
            g[i] = raw(i * h);
            if (g[i] < g[imin]) imin = i;
            if (g[i] > g[imax]) imax = i;
        }
        detail::require(g[imax] > g[imin], "fourier waveform is flat");
        auto refine = [&](int centre, double sign) {
            double a = (centre - 1) * h;
            double b = (centre + 1) * h;
            const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
            double c = b - ratio * (b - a);
            double d = a + ratio * (b - a);
            for (int it = 0; it < 80; ++it) {
                if (sign * raw(c) > sign * raw(d)) {
                    b = d;
                } else {
                    a = c;
                }
                c = b - ratio * (b - a);
                d = a + ratio * (b - a);
            }
            return 0.5 * (a + b);
        };
        const double tmin = refine(imin, -1.0);
        const double tmax = refine(imax, +1.0);
        shape_min_ = std::min(raw(tmin), g[imin]);
        shape_max_ = std::max(raw(tmax), g[imax]);
        argmax_ = std::fmod(tmax + period_, period_);
        if (std::abs(argmax_ - period_) < 1e-12) {
            argmax_ = 0.0;
        }
    }

    Kind kind_ = Kind::Constant;
    double period_ = 1.0;
    double sp_ = 0.0;
    double dp_ = 0.0;
    double shape_min_ = 0.0;
    double shape_max_ = 1.0;
    double argmax_ = 0.0;
    std::vector<Harmonic> harmonics_;
    std::vector<double> times_;
    std::vector<double> samples_;
};

}  // namespace hemo_uq
