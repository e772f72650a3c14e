#pragma once

/**
 * @file distributions.hpp
 * @brief One-dimensional input distributions: CDF, inverse CDF and seeded
 * sampling by inversion.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <variant>
#include <vector>

#include "hemo_uq/errors.hpp"
#include "hemo_uq/random.hpp"

namespace hemo_uq {

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

namespace detail {

// Lower-half inverse normal CDF, p in (0, 0.5].
inline double normal_quantile_lower(double p) {
    // Acklam's rational approximation (relative error < 1.15e-9) ...
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    }
    // ... polished by one Halley step against erfc, which brings the absolute
    // error down to ~1e-15 over the range used here.
    const double e = normal_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace detail

/// Inverse standard normal CDF for p in (0, 1).
inline double normal_quantile(double p) {
    detail::require(p > 0.0 && p < 1.0, "probability must lie in (0, 1)");
    if (p > 0.5) {
        return -detail::normal_quantile_lower(1.0 - p);
    }
    return detail::normal_quantile_lower(p);
}

struct Normal {
    double mean = 0.0;
    double sd = 1.0;
};

/// exp(N(mu_ln, sigma_ln^2)).
struct LogNormal {
    double mu_ln = 0.0;
    double sigma_ln = 1.0;
};

struct TruncatedNormal {
    double mean = 0.0;
    double sd = 1.0;
    double lo = -1.0;
    double hi = 1.0;
};

struct Uniform {
    double lo = 0.0;
    double hi = 1.0;
};

/// Immutable 1D distribution [mmHg for the physiological inputs].
class Distribution1D {
public:
    using Params = std::variant<Normal, LogNormal, TruncatedNormal, Uniform>;

    static Distribution1D normal(double mean, double sd) {
        detail::require(std::isfinite(mean), "normal mean must be finite");
        detail::require(sd > 0.0 && std::isfinite(sd), "normal sd must be positive");
        return Distribution1D(Normal{mean, sd});
    }

    static Distribution1D lognormal(double mu_ln, double sigma_ln) {
        detail::require(std::isfinite(mu_ln), "lognormal mu must be finite");
        detail::require(sigma_ln > 0.0 && std::isfinite(sigma_ln),
                        "lognormal sigma must be positive");
        return Distribution1D(LogNormal{mu_ln, sigma_ln});
    }

    static Distribution1D truncated_normal(double mean, double sd, double lo, double hi) {
        detail::require(sd > 0.0 && std::isfinite(sd), "truncated normal sd must be positive");
        detail::require(lo < hi, "truncated normal requires lo < hi");
        const double mass = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
        detail::require(mass > 1e-12, "truncation interval holds no probability mass");
        return Distribution1D(TruncatedNormal{mean, sd, lo, hi});
    }

    static Distribution1D uniform(double lo, double hi) {
        detail::require(lo < hi && std::isfinite(lo) && std::isfinite(hi),
                        "uniform requires finite lo < hi");
        return Distribution1D(Uniform{lo, hi});
    }

    [[nodiscard]] const Params& params() const { return params_; }

    [[nodiscard]] std::string kind() const {
        return std::visit(
            [](const auto& p) -> std::string {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Normal>) return "normal";
                else if constexpr (std::is_same_v<T, LogNormal>) return "lognormal";
                else if constexpr (std::is_same_v<T, TruncatedNormal>) return "truncated_normal";
                else return "uniform";
            },
            params_);
    }

    [[nodiscard]] double cdf(double x) const {
        return std::visit(
            [x](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Normal>) {
                    return normal_cdf((x - p.mean) / p.sd);
                } else if constexpr (std::is_same_v<T, LogNormal>) {
                    if (x <= 0.0) return 0.0;
                    return normal_cdf((std::log(x) - p.mu_ln) / p.sigma_ln);
                } else if constexpr (std::is_same_v<T, TruncatedNormal>) {
                    if (x <= p.lo) return 0.0;
                    if (x >= p.hi) return 1.0;
                    const double fa = normal_cdf((p.lo - p.mean) / p.sd);
                    const double fb = normal_cdf((p.hi - p.mean) / p.sd);
                    return (normal_cdf((x - p.mean) / p.sd) - fa) / (fb - fa);
                } else {
                    if (x <= p.lo) return 0.0;
                    if (x >= p.hi) return 1.0;
                    return (x - p.lo) / (p.hi - p.lo);
                }
            },
            params_);
    }

    /// Inverse CDF, u in (0, 1).
    [[nodiscard]] double quantile(double u) const {
        detail::require(u > 0.0 && u < 1.0, "quantile probability must lie in (0, 1)");
        return std::visit(
            [u](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Normal>) {
                    return p.mean + p.sd * normal_quantile(u);
                } else if constexpr (std::is_same_v<T, LogNormal>) {
                    return std::exp(p.mu_ln + p.sigma_ln * normal_quantile(u));
                } else if constexpr (std::is_same_v<T, TruncatedNormal>) {
                    const double fa = normal_cdf((p.lo - p.mean) / p.sd);
                    const double fb = normal_cdf((p.hi - p.mean) / p.sd);
                    const double target = fa + u * (fb - fa);
                    double x = p.mean + p.sd * normal_quantile(std::clamp(target, 1e-300, 1.0 - 1e-16));
                    return std::clamp(x, p.lo, p.hi);
                } else {
                    return p.lo + u * (p.hi - p.lo);
                }
            },
            params_);
    }

    [[nodiscard]] double mean() const {
        return std::visit(
            [](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Normal>) {
                    return p.mean;
                } else if constexpr (std::is_same_v<T, LogNormal>) {
                    return std::exp(p.mu_ln + 0.5 * p.sigma_ln * p.sigma_ln);
                } else if constexpr (std::is_same_v<T, TruncatedNormal>) {
                    const double a = (p.lo - p.mean) / p.sd;
                    const double b = (p.hi - p.mean) / p.sd;
                    const double z = normal_cdf(b) - normal_cdf(a);
                    return p.mean + p.sd * (normal_pdf(a) - normal_pdf(b)) / z;
                } else {
                    return 0.5 * (p.lo + p.hi);
                }
            },
            params_);
    }

    [[nodiscard]] double sd() const {
        return std::visit(
            [](const auto& p) -> double {
                using T = std::decay_t<decltype(p)>;
                if constexpr (std::is_same_v<T, Normal>) {
                    return p.sd;
                } else if constexpr (std::is_same_v<T, LogNormal>) {
                    const double s2 = p.sigma_ln * p.sigma_ln;
                    return std::sqrt(std::expm1(s2) * std::exp(2.0 * p.mu_ln + s2));
                } else if constexpr (std::is_same_v<T, TruncatedNormal>) {
                    const double a = (p.lo - p.mean) / p.sd;
                    const double b = (p.hi - p.mean) / p.sd;
                    const double z = normal_cdf(b) - normal_cdf(a);
                    const double shift = (normal_pdf(a) - normal_pdf(b)) / z;
                    const double var =
                        1.0 + (a * normal_pdf(a) - b * normal_pdf(b)) / z - shift * shift;
                    return p.sd * std::sqrt(var);
                } else {
                    return (p.hi - p.lo) / std::sqrt(12.0);
                }
            },
            params_);
    }

private:
    explicit Distribution1D(Params p) : params_(p) {}

    Params params_;
};

/**
 * Lognormal with prescribed mean and sd (moment matching):
 * sigma_ln^2 = ln(1 + sd^2/mean^2), mu_ln = ln(mean / sqrt(1 + sd^2/mean^2)).
 */
inline Distribution1D lognormal_from_moments(double mean, double sd) {
    detail::require(mean > 0.0, "lognormal moment matching requires a positive mean");
    detail::require(sd > 0.0, "lognormal moment matching requires a positive sd");
    const double ratio = sd * sd / (mean * mean);
    const double sigma2 = std::log1p(ratio);
    const double mu = std::log(mean) - 0.5 * sigma2;
    return Distribution1D::lognormal(mu, std::sqrt(sigma2));
}

/// n i.i.d. draws by inversion; deterministic given the stream.
inline std::vector<double> sample(const Distribution1D& dist, RandomStream& stream, std::size_t n) {
    detail::require(n >= 1, "sample count must be >= 1");
    std::vector<double> out(n);
    for (auto& v : out) v = dist.quantile(stream.uniform());
    return out;
}

}  // namespace hemo_uq
