#pragma once

/**
 * @file sensitivity.hpp
 * @brief First-order and total Sobol' indices by pick-freeze Monte Carlo and
 * by extended FAST, iterative-error convergence and cross-validation.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hemo_uq/distributions.hpp"
#include "hemo_uq/errors.hpp"
#include "hemo_uq/evaluator.hpp"
#include "hemo_uq/inputs.hpp"
#include "hemo_uq/parallel.hpp"
#include "hemo_uq/random.hpp"
#include "hemo_uq/statistics.hpp"

namespace hemo_uq {

enum class Estimator { PickFreeze, Fast };

inline const char* to_string(Estimator e) {
    return e == Estimator::PickFreeze ? "pick_freeze" : "fast";
}

/// Indices for every (output, input) pair, stored as [output][input].
struct SensitivityIndices {
    Estimator estimator = Estimator::PickFreeze;
    std::size_t n = 0;            ///< base sample size (per input for FAST)
    std::size_t evaluations = 0;  ///< model calls actually made
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> total;
    std::vector<std::vector<double>> first_clipped;  ///< 0 <= S <= S_tot
    std::vector<std::vector<double>> total_clipped;  ///< 0 <= S_tot <= 1
    std::vector<double> variance;                    ///< estimated output variance

    [[nodiscard]] std::size_t input_index(const std::string& name) const {
        for (std::size_t i = 0; i < input_names.size(); ++i) {
            if (input_names[i] == name) return i;
        }
        throw InvalidInput("no input '" + name + "' in sensitivity indices");
    }
};

namespace detail {

inline void check_inputs(const ModelEvaluator& f, std::span<const NamedDistribution> inputs) {
    require(!inputs.empty(), "sensitivity analysis needs at least one input");
    require(f.input_count() == inputs.size(), "evaluator and input set differ in dimension");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        require(f.input_names[i] == inputs[i].name,
                "input " + std::to_string(i) + " is '" + inputs[i].name + "' but the evaluator expects '" +
                    f.input_names[i] + "'");
    }
    require(f.output_count() >= 1, "evaluator has no outputs");
}

inline void fill_clipped(SensitivityIndices& s) {
    s.first_clipped = s.first;
    s.total_clipped = s.total;
    for (std::size_t q = 0; q < s.first.size(); ++q) {
        for (std::size_t i = 0; i < s.first[q].size(); ++i) {
            const double t = std::clamp(s.total[q][i], 0.0, 1.0);
            s.total_clipped[q][i] = t;
            s.first_clipped[q][i] = std::clamp(s.first[q][i], 0.0, t);
        }
    }
}

/// Evaluates f on each row of an (rows x d) matrix, results as (rows x m).
inline std::vector<double> evaluate_rows(const ModelEvaluator& f, const std::vector<double>& x,
                                         std::size_t rows, unsigned workers) {
    const std::size_t d = f.input_count();
    const std::size_t m = f.output_count();
    std::vector<double> y(rows * m);
    parallel_for(rows, workers, [&](std::size_t r) {
        const auto out = f(std::span<const double>(&x[r * d], d));
        std::copy(out.begin(), out.end(), y.begin() + static_cast<std::ptrdiff_t>(r * m));
    });
    return y;
}

inline bool negligible_variance(double var, double mean) {
    return !(var > 1e-24 * (1.0 + mean * mean));
}

}  // namespace detail

/**
 * Pick-freeze estimator at cost (d+2) n.
 *
 * Row j of A and B comes from stream (seed, j): d uniforms for A then d for
 * B, so a larger n extends the same sample. With outputs centred on the
 * A u B mean f0,
 *   S_i     = (1/n) sum_j fB_j (fABi_j - fA_j) / V      (Saltelli 2010)
 *   S_tot_i = (1/2n) sum_j (fA_j - fABi_j)^2 / V        (Jansen 1999)
 * where V is the sample variance over A u B.
 */
inline SensitivityIndices pick_freeze_indices(const ModelEvaluator& f,
                                              std::span<const NamedDistribution> inputs,
                                              std::size_t n, std::uint64_t seed,
                                              unsigned workers = 1) {
    detail::check_inputs(f, inputs);
    detail::require(n >= 100, "pick-freeze needs n >= 100");
    const std::size_t d = inputs.size();
    const std::size_t m = f.output_count();
    const std::size_t rows = (d + 2) * n;

    // Block 0: A, block 1: B, block 2 + i: AB^i.
    std::vector<double> x(rows * d);
    parallel_for(n, workers, [&](std::size_t j) {
        RandomStream stream(seed, j);
        double* a = &x[j * d];
        double* b = &x[(n + j) * d];
        for (std::size_t i = 0; i < d; ++i) a[i] = inputs[i].dist.quantile(stream.uniform());
        for (std::size_t i = 0; i < d; ++i) b[i] = inputs[i].dist.quantile(stream.uniform());
        for (std::size_t i = 0; i < d; ++i) {
            double* ab = &x[((2 + i) * n + j) * d];
            std::copy(a, a + d, ab);
            ab[i] = b[i];
        }
    });

    const auto y = detail::evaluate_rows(f, x, rows, workers);
    auto at = [&](std::size_t block, std::size_t j, std::size_t q) { return y[(block * n + j) * m + q]; };

    SensitivityIndices s;
    s.estimator = Estimator::PickFreeze;
    s.n = n;
    s.evaluations = rows;
    s.input_names.resize(d);
    for (std::size_t i = 0; i < d; ++i) s.input_names[i] = inputs[i].name;
    s.output_names = f.output_names;
    s.first.assign(m, std::vector<double>(d));
    s.total.assign(m, std::vector<double>(d));
    s.variance.assign(m, 0.0);

    const double nn = static_cast<double>(n);
    for (std::size_t q = 0; q < m; ++q) {
        RunningMoments mom;
        for (std::size_t j = 0; j < n; ++j) {
            mom.add(at(0, j, q));
            mom.add(at(1, j, q));
        }
        const double f0 = mom.mean();
        const double var = mom.variance();
        if (detail::negligible_variance(var, f0)) {
            throw NumericalFailure("degenerate output: '" + f.output_names[q] + "' has zero variance");
        }
        s.variance[q] = var;
        for (std::size_t i = 0; i < d; ++i) {
            double sum_first = 0.0;
            double sum_total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double fa = at(0, j, q) - f0;
                const double fb = at(1, j, q) - f0;
                const double fab = at(2 + i, j, q) - f0;
                sum_first += fb * (fab - fa);
                sum_total += (fa - fab) * (fa - fab);
            }
            s.first[q][i] = sum_first / nn / var;
            s.total[q][i] = sum_total / (2.0 * nn) / var;
        }
    }
    detail::fill_clipped(s);
    return s;
}

/// Harmonics summed around each driver frequency.
inline constexpr int kFastHarmonics = 4;

/// Smallest FAST sample size per input for d inputs.
inline std::size_t fast_min_samples(std::size_t d, int harmonics = kFastHarmonics) {
    const auto mm = static_cast<std::size_t>(harmonics);
    return 4 * mm * mm * std::max<std::size_t>(1, d - 1) + 1;
}

/// Driver frequency for n samples and M harmonics, floor((n-1)/2M).
inline std::size_t fast_driver_frequency(std::size_t n, int harmonics = kFastHarmonics) {
    return (n - 1) / (2 * static_cast<std::size_t>(harmonics));
}

/**
 * Complementary frequencies, evenly spread over [2M+1, m/2] with
 * m = floor(w / 2M), so the first 2M harmonics of each stay at or below
 * w/2, the cut-off used for the total index. Starting above 2M keeps the
 * complement clear of the driver harmonics aliased back near bin 0
 * (2M w = n - r with r <= 2M). Small n shrinks the band down to [1, m].
 */
inline std::vector<std::size_t> fast_complement_frequencies(std::size_t n, std::size_t d,
                                                            int harmonics = kFastHarmonics) {
    const std::size_t w = fast_driver_frequency(n, harmonics);
    const std::size_t m = w / (2 * static_cast<std::size_t>(harmonics));
    if (d <= 1) return {};
    if (m < std::max<std::size_t>(1, d - 1)) {
        throw InvalidInput("FAST frequency assignment failed: " + std::to_string(d) +
                           " inputs need at least n = " + std::to_string(fast_min_samples(d, harmonics)) +
                           " samples per input, got " + std::to_string(n));
    }
    const std::size_t hi = std::max(m / 2, d - 1);
    const std::size_t lo = std::max<std::size_t>(
        1, std::min(2 * static_cast<std::size_t>(harmonics) + 1, hi + 2 - d));
    std::vector<std::size_t> f(d - 1);
    for (std::size_t k = 0; k < d - 1; ++k) {
        const double t = d == 2 ? 0.0 : static_cast<double>(k) / static_cast<double>(d - 2);
        f[k] = lo + static_cast<std::size_t>(std::floor(t * static_cast<double>(hi - lo)));
    }
    return f;
}

/**
 * Extended FAST at cost d n. For each input i a run drives X_i at
 * w = floor((n-1)/2M) and the others at the complementary frequencies, along
 * the search curve s_k = -pi + (2k+1) pi / n with
 *   x_j = quantile(1/2 + arcsin(sin(w_j s + phi_j)) / pi),
 * random phases phi_j drawn from stream (seed, i). Then
 *   S_i     = 2 sum_{p=1..M} P(p w) / V,
 *   S_tot_i = 1 - 2 sum_{k=1..floor(w/2)} P(k) / V,
 * with P(k) = |DFT_k / n|^2 and V the variance carried by bins 1..floor((n-1)/2).
 */
inline SensitivityIndices fast_indices(const ModelEvaluator& f,
                                       std::span<const NamedDistribution> inputs, std::size_t n,
                                       std::uint64_t seed, unsigned workers = 1) {
    detail::check_inputs(f, inputs);
    const std::size_t d = inputs.size();
    const std::size_t m = f.output_count();
    detail::require(n >= fast_min_samples(d), "FAST frequency assignment failed: " + std::to_string(d) +
                                                  " inputs need at least n = " +
                                                  std::to_string(fast_min_samples(d)) +
                                                  " samples per input, got " + std::to_string(n));
    const std::size_t w = fast_driver_frequency(n);
    const auto complement = fast_complement_frequencies(n, d);
    const double pi = std::numbers::pi;
    const double nn = static_cast<double>(n);

    std::vector<double> x(d * n * d);
    for (std::size_t run = 0; run < d; ++run) {
        std::vector<double> omega(d);
        for (std::size_t j = 0, c = 0; j < d; ++j) omega[j] = j == run ? double(w) : double(complement[c++]);
        RandomStream stream(seed, run);
        std::vector<double> phi(d);
        for (auto& p : phi) p = 2.0 * pi * stream.uniform();
        for (std::size_t k = 0; k < n; ++k) {
            const double sk = -pi + (2.0 * static_cast<double>(k) + 1.0) * pi / nn;
            double* row = &x[(run * n + k) * d];
            for (std::size_t j = 0; j < d; ++j) {
                double u = 0.5 + std::asin(std::sin(omega[j] * sk + phi[j])) / pi;
                u = std::clamp(u, 1e-12, 1.0 - 1e-12);
                row[j] = inputs[j].dist.quantile(u);
            }
        }
    }
    const auto y = detail::evaluate_rows(f, x, d * n, workers);

    // cos/sin of 2 pi r / n; bin k at sample t uses r = k t mod n.
    std::vector<double> ctab(n), stab(n);
    for (std::size_t r = 0; r < n; ++r) {
        ctab[r] = std::cos(2.0 * pi * static_cast<double>(r) / nn);
        stab[r] = std::sin(2.0 * pi * static_cast<double>(r) / nn);
    }
    const std::size_t half = w / 2;
    const std::size_t top = std::max<std::size_t>(static_cast<std::size_t>(kFastHarmonics) * w, half);

    SensitivityIndices s;
    s.estimator = Estimator::Fast;
    s.n = n;
    s.evaluations = d * n;
    for (const auto& in : inputs) s.input_names.push_back(in.name);
    s.output_names = f.output_names;
    s.first.assign(m, std::vector<double>(d));
    s.total.assign(m, std::vector<double>(d));
    s.variance.assign(m, 0.0);

    std::vector<double> yc(n);
    for (std::size_t q = 0; q < m; ++q) {
        for (std::size_t run = 0; run < d; ++run) {
            RunningMoments mom;
            for (std::size_t k = 0; k < n; ++k) mom.add(y[(run * n + k) * m + q]);
            const double mean = mom.mean();
            for (std::size_t k = 0; k < n; ++k) yc[k] = y[(run * n + k) * m + q] - mean;

            auto power = [&](std::size_t bin) {
                double re = 0.0, im = 0.0;
                std::size_t r = 0;
                for (std::size_t t = 0; t < n; ++t) {
                    re += yc[t] * ctab[r];
                    im -= yc[t] * stab[r];
                    r += bin;
                    if (r >= n) r -= n;
                }
                return (re * re + im * im) / (nn * nn);
            };

            // Population variance, minus the Nyquist bin for even n.
            double var = 0.0;
            for (double v : yc) var += v * v;
            var /= nn;
            if (n % 2 == 0) var -= power(n / 2);
            if (detail::negligible_variance(var, mean)) {
                throw NumericalFailure("degenerate output: '" + f.output_names[q] + "' has zero variance");
            }

            double first = 0.0;
            double low = 0.0;
            for (std::size_t bin = 1; bin <= top; ++bin) {
                const bool harmonic = bin % w == 0 && bin / w <= static_cast<std::size_t>(kFastHarmonics);
                if (!harmonic && bin > half) continue;
                const double p = power(bin);
                if (harmonic) first += p;
                if (bin <= half) low += p;
            }
            s.first[q][run] = 2.0 * first / var;
            s.total[q][run] = 1.0 - 2.0 * low / var;
            s.variance[q] += var / static_cast<double>(d);
        }
    }
    detail::fill_clipped(s);
    return s;
}

/// Overloads over a clinical input set: sensitivity analysis requires the
/// independent MAP-mode inputs.
inline SensitivityIndices pick_freeze_indices(const ModelEvaluator& f, const InputDistributionSet& inputs,
                                              std::size_t n, std::uint64_t seed, unsigned workers = 1) {
    detail::require(inputs.mode() == InputMode::Map,
                    "Sobol' analysis needs independent inputs: use MAP mode");
    return pick_freeze_indices(f, std::span<const NamedDistribution>(inputs.entries()), n, seed, workers);
}

inline SensitivityIndices fast_indices(const ModelEvaluator& f, const InputDistributionSet& inputs,
                                       std::size_t n, std::uint64_t seed, unsigned workers = 1) {
    detail::require(inputs.mode() == InputMode::Map,
                    "Sobol' analysis needs independent inputs: use MAP mode");
    return fast_indices(f, std::span<const NamedDistribution>(inputs.entries()), n, seed, workers);
}

inline SensitivityIndices estimate_indices(Estimator method, const ModelEvaluator& f,
                                           std::span<const NamedDistribution> inputs, std::size_t n,
                                           std::uint64_t seed, unsigned workers = 1) {
    return method == Estimator::PickFreeze ? pick_freeze_indices(f, inputs, n, seed, workers)
                                           : fast_indices(f, inputs, n, seed, workers);
}

struct ConvergenceSchedule {
    std::vector<std::size_t> sizes{1000, 2000, 5000, 7500, 10000};
    double threshold = 4e-2;

    void validate() const {
        detail::require(!sizes.empty(), "convergence schedule is empty");
        for (std::size_t k = 1; k < sizes.size(); ++k) {
            detail::require(sizes[k] > sizes[k - 1], "convergence schedule must be strictly increasing");
        }
        detail::require(threshold > 0.0 && std::isfinite(threshold),
                        "convergence threshold must be positive");
    }
};

/// Absolute change between two consecutive schedule entries. Errors are per
/// input, maximised over all outputs.
struct ConvergenceStep {
    std::size_t n = 0;
    std::size_t n_prev = 0;
    std::vector<double> first_error;
    std::vector<double> total_error;
    double max_first = 0.0;
    double max_total = 0.0;
    bool below_threshold = false;
};

struct SensitivityReport {
    Estimator estimator = Estimator::PickFreeze;
    ConvergenceSchedule schedule;
    std::vector<SensitivityIndices> runs;
    std::vector<ConvergenceStep> history;
    bool converged = false;
    std::optional<std::size_t> converged_at;  ///< first n meeting the threshold
    std::size_t evaluations = 0;

    [[nodiscard]] bool has_evidence() const { return !history.empty(); }

    [[nodiscard]] std::string status() const {
        if (!has_evidence()) return "no convergence evidence";
        return converged ? "converged" : "not converged";
    }

    [[nodiscard]] const SensitivityIndices& final_indices() const { return runs.back(); }
};

inline ConvergenceStep convergence_step(const SensitivityIndices& prev, const SensitivityIndices& cur,
                                        double threshold) {
    detail::require(prev.first.size() == cur.first.size() &&
                        prev.input_names == cur.input_names,
                    "index sets differ in shape");
    ConvergenceStep st;
    st.n = cur.n;
    st.n_prev = prev.n;
    const std::size_t d = cur.input_names.size();
    st.first_error.assign(d, 0.0);
    st.total_error.assign(d, 0.0);
    for (std::size_t q = 0; q < cur.first.size(); ++q) {
        for (std::size_t i = 0; i < d; ++i) {
            st.first_error[i] = std::max(st.first_error[i], std::abs(cur.first[q][i] - prev.first[q][i]));
            st.total_error[i] = std::max(st.total_error[i], std::abs(cur.total[q][i] - prev.total[q][i]));
        }
    }
    st.max_first = *std::max_element(st.first_error.begin(), st.first_error.end());
    st.max_total = *std::max_element(st.total_error.begin(), st.total_error.end());
    st.below_threshold = st.max_first < threshold && st.max_total < threshold;
    return st;
}

/**
 * Runs the estimator over the schedule with the same seed, so pick-freeze
 * samples are nested. With stop_early the loop ends at the first n whose
 * change from the previous entry is below the threshold for both indices.
 */
inline SensitivityReport converge(Estimator method, const ModelEvaluator& f,
                                  std::span<const NamedDistribution> inputs,
                                  const ConvergenceSchedule& schedule, std::uint64_t seed,
                                  bool stop_early = true, unsigned workers = 1) {
    schedule.validate();
    SensitivityReport rep;
    rep.estimator = method;
    rep.schedule = schedule;
    for (const std::size_t n : schedule.sizes) {
        rep.runs.push_back(estimate_indices(method, f, inputs, n, seed, workers));
        rep.evaluations += rep.runs.back().evaluations;
        if (rep.runs.size() < 2) continue;
        rep.history.push_back(convergence_step(rep.runs[rep.runs.size() - 2], rep.runs.back(),
                                               schedule.threshold));
        if (rep.history.back().below_threshold && !rep.converged_at) {
            rep.converged_at = n;
            if (stop_early) break;
        }
    }
    // Verdict on the last pair computed: a late excursion above the threshold
    // cancels an earlier pass.
    rep.converged = rep.has_evidence() && rep.history.back().below_threshold;
    return rep;
}

struct AgreementEntry {
    std::string output;
    std::string input;
    double first_a = 0.0, first_b = 0.0;
    double total_a = 0.0, total_b = 0.0;
    double first_diff = 0.0;
    double total_diff = 0.0;
    bool flagged = false;
};

struct AgreementReport {
    double tolerance = 0.0;
    std::vector<AgreementEntry> entries;
    double max_diff = 0.0;
    std::size_t flagged = 0;
    std::string summary;
};

/// Entry-wise comparison of two index sets over raw values.
inline AgreementReport cross_validate(const SensitivityIndices& a, const SensitivityIndices& b,
                                      double tol) {
    detail::require(a.input_names == b.input_names && a.output_names == b.output_names,
                    "shape mismatch: index sets cover different inputs or outputs");
    detail::require(tol > 0.0, "agreement tolerance must be positive");
    AgreementReport r;
    r.tolerance = tol;
    for (std::size_t q = 0; q < a.output_names.size(); ++q) {
        for (std::size_t i = 0; i < a.input_names.size(); ++i) {
            AgreementEntry e;
            e.output = a.output_names[q];
            e.input = a.input_names[i];
            e.first_a = a.first[q][i];
            e.first_b = b.first[q][i];
            e.total_a = a.total[q][i];
            e.total_b = b.total[q][i];
            e.first_diff = std::abs(e.first_a - e.first_b);
            e.total_diff = std::abs(e.total_a - e.total_b);
            e.flagged = !(e.first_diff <= tol && e.total_diff <= tol);
            r.max_diff = std::max({r.max_diff, e.first_diff, e.total_diff});
            r.flagged += e.flagged ? 1 : 0;
            r.entries.push_back(e);
        }
    }
    r.summary = r.flagged == 0
                    ? "estimators agree: all " + std::to_string(r.entries.size()) +
                          " index pairs within " + std::to_string(tol)
                    : std::to_string(r.flagged) + " of " + std::to_string(r.entries.size()) +
                          " index pairs differ by more than " + std::to_string(tol);
    return r;
}

}  // namespace hemo_uq
