#pragma once

/**
 * @file propagation.hpp
 * @brief Forward Monte Carlo propagation of input uncertainty through a
 * model evaluator, ensemble summaries and population comparison.
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
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

enum class Population { Baseline, Low, High, Custom };

inline const char* to_string(Population p) {
    switch (p) {
        case Population::Baseline: return "baseline";
        case Population::Low: return "low";
        case Population::High: return "high";
        case Population::Custom: return "custom";
    }
    return "?";
}

inline Population population_from_string(const std::string& s) {
    if (s == "baseline") return Population::Baseline;
    if (s == "low") return Population::Low;
    if (s == "high") return Population::High;
    if (s == "custom") return Population::Custom;
    throw InvalidInput("unknown population '" + s + "' (expected baseline, low, high or custom)");
}

/// SP/DP [mmHg] of the preset virtual populations.
inline std::pair<double, double> population_pressures(Population p) {
    switch (p) {
        case Population::Baseline: return {120.0, 80.0};
        case Population::Low: return {100.0, 70.0};
        case Population::High: return {140.0, 90.0};
        case Population::Custom: break;
    }
    throw InvalidInput("custom population has no preset pressures");
}

/// Which model inputs are sampled and which are held fixed.
struct PropagationStudy {
    std::string name = "baseline";
    Population population = Population::Baseline;
    std::vector<NamedDistribution> stochastic;
    std::map<std::string, double> frozen;
    std::size_t n = 10000;
    std::uint64_t seed = 0;

    /// Preset population: IOP sampled from its default law, RLTp frozen at
    /// its mean 9.5 mmHg, SP/DP frozen at the population values.
    static PropagationStudy preset(Population p, std::size_t n = 10000, std::uint64_t seed = 0) {
        PropagationStudy s;
        s.name = to_string(p);
        s.population = p;
        const auto [sp, dp] = population_pressures(p);
        s.stochastic.push_back(
            {"IOP", InputDistributionSet::defaults(InputMode::SpDp).at("IOP")});
        s.frozen = {{"RLTp", 9.5}, {"SP", sp}, {"DP", dp}};
        s.n = n;
        s.seed = seed;
        return s;
    }

    /// Checks that stochastic and frozen inputs cover `input_names` exactly once.
    void validate(const std::vector<std::string>& input_names) const {
        detail::require(n >= 2, "propagation needs n >= 2 samples");
        std::map<std::string, int> seen;
        for (const auto& s : stochastic) ++seen[s.name];
        for (const auto& [k, v] : frozen) {
            ++seen[k];
            detail::require(std::isfinite(v), "frozen input '" + k + "' must be finite");
        }
        for (const auto& name : input_names) {
            const auto it = seen.find(name);
            detail::require(it != seen.end(), "input '" + name + "' is neither stochastic nor frozen");
            detail::require(it->second == 1, "input '" + name + "' is specified more than once");
        }
        for (const auto& [k, count] : seen) {
            detail::require(std::find(input_names.begin(), input_names.end(), k) != input_names.end(),
                            "input '" + k + "' is not a model input");
        }
    }
};

struct FailedSample {
    std::size_t index = 0;
    std::vector<double> inputs;
    std::string message;
};

/// Raw ensemble, row-major, one row per sample index.
struct PropagationResult {
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::size_t n = 0;
    std::vector<double> inputs;   ///< n x d
    std::vector<double> outputs;  ///< n x m; NaN rows for failed samples
    std::vector<bool> ok;
    std::vector<FailedSample> failures;
    std::size_t evaluations = 0;

    [[nodiscard]] std::size_t succeeded() const { return n - failures.size(); }

    /// Output column `q` restricted to successful samples.
    [[nodiscard]] std::vector<double> column(std::size_t q) const {
        std::vector<double> c;
        c.reserve(succeeded());
        const std::size_t m = output_names.size();
        for (std::size_t j = 0; j < n; ++j) {
            if (ok[j]) c.push_back(outputs[j * m + q]);
        }
        return c;
    }
};

/// Share of failed samples above which a study is rejected.
inline constexpr double kFragilityThreshold = 0.01;

/**
 * Runs the study. Sample j draws its stochastic inputs from stream
 * (seed, j) in the evaluator's input order, so results are identical for
 * any worker count. Failed evaluations are recorded and excluded; more
 * than 1% failures raise "model fragility".
 */
inline PropagationResult propagate(const PropagationStudy& study, const ModelEvaluator& f,
                                   unsigned workers = 1) {
    study.validate(f.input_names);
    const std::size_t d = f.input_count();
    const std::size_t m = f.output_count();

    // Per input: either a distribution or a fixed value.
    std::vector<std::optional<Distribution1D>> laws(d);
    std::vector<double> fixed(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (const auto& s : study.stochastic) {
            if (s.name == f.input_names[i]) laws[i] = s.dist;
        }
        if (!laws[i]) fixed[i] = study.frozen.at(f.input_names[i]);
    }

    PropagationResult r;
    r.input_names = f.input_names;
    r.output_names = f.output_names;
    r.n = study.n;
    r.inputs.assign(study.n * d, 0.0);
    r.outputs.assign(study.n * m, std::nan(""));
    std::vector<std::string> errors(study.n);
    std::vector<char> good(study.n, 0);

    parallel_for(study.n, workers, [&](std::size_t j) {
        RandomStream stream(study.seed, j);
        double* x = &r.inputs[j * d];
        for (std::size_t i = 0; i < d; ++i) {
            x[i] = laws[i] ? laws[i]->quantile(stream.uniform()) : fixed[i];
        }
        try {
            const auto y = f(std::span<const double>(x, d));
            std::copy(y.begin(), y.end(), r.outputs.begin() + static_cast<std::ptrdiff_t>(j * m));
            good[j] = 1;
        } catch (const Error& e) {
            errors[j] = e.what();
        }
    });

    r.evaluations = study.n;
    r.ok.resize(study.n);
    for (std::size_t j = 0; j < study.n; ++j) {
        r.ok[j] = good[j] != 0;
        if (!good[j]) {
            r.failures.push_back({j, std::vector<double>(r.inputs.begin() + static_cast<std::ptrdiff_t>(j * d),
                                                          r.inputs.begin() + static_cast<std::ptrdiff_t>((j + 1) * d)),
                                  errors[j]});
        }
    }
    const double share = static_cast<double>(r.failures.size()) / static_cast<double>(study.n);
    if (share > kFragilityThreshold) {
        throw NumericalFailure("model fragility: " + std::to_string(r.failures.size()) + " of " +
                               std::to_string(study.n) + " evaluations failed (first: " +
                               r.failures.front().message + ")");
    }
    if (r.succeeded() < 2) throw NumericalFailure("model fragility: fewer than two successful samples");
    return r;
}

struct QoISummary {
    std::string name;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    Histogram histogram;
    KernelDensity kde;
    BoxplotStats box;
};

struct EnsembleSummary {
    std::vector<QoISummary> qoi;

    [[nodiscard]] const QoISummary& at(const std::string& name) const {
        for (const auto& q : qoi) {
            if (q.name == name) return q;
        }
        throw InvalidInput("summary has no QoI '" + name + "'");
    }
};

inline QoISummary summarize_column(const std::string& name, std::span<const double> x) {
    detail::require(x.size() >= 2, "summary needs at least two samples");
    QoISummary s;
    s.name = name;
    s.n = x.size();
    RunningMoments m;
    for (double v : x) m.add(v);
    s.mean = m.mean();
    s.sd = m.sd();
    s.histogram = histogram(x);
    s.kde = kernel_density(x);
    s.box = boxplot(x);
    return s;
}

/// Summary of every output column over the successful samples.
inline EnsembleSummary summarize(const PropagationResult& r) {
    EnsembleSummary s;
    for (std::size_t q = 0; q < r.output_names.size(); ++q) {
        const auto col = r.column(q);
        s.qoi.push_back(summarize_column(r.output_names[q], col));
    }
    return s;
}

/// One study's mean with a sd/sqrt(n) confidence half-width.
struct RankedMean {
    std::string study;
    double mean = 0.0;
    double half_width = 0.0;
};

struct QoIComparison {
    std::string qoi;
    std::vector<RankedMean> ranked;  ///< ascending by mean
    std::string ordering;            ///< e.g. "low < baseline < high"; "~" marks overlap
    bool tied = false;               ///< some adjacent intervals overlap
    std::vector<double> offsets;     ///< mean minus first study's mean, in input order
};

struct PopulationComparison {
    std::vector<std::string> studies;
    std::vector<QoIComparison> qoi;
    /// Per study: the offset from the first study is the same for every QoI.
    std::vector<bool> constant_offset;
};

/// Orders the means of each QoI across studies. Adjacent studies whose
/// intervals mean +- sd/sqrt(n) overlap are joined by "~" and flagged tied.
inline PopulationComparison compare_populations(
    const std::vector<std::pair<std::string, EnsembleSummary>>& studies,
    double offset_tol = 1e-9) {
    detail::require(studies.size() >= 2, "comparison needs at least two studies");
    const auto& ref = studies.front().second;
    for (const auto& [name, s] : studies) {
        detail::require(s.qoi.size() == ref.qoi.size(), "study '" + name + "' has a different QoI set");
        for (std::size_t q = 0; q < ref.qoi.size(); ++q) {
            detail::require(s.qoi[q].name == ref.qoi[q].name,
                            "study '" + name + "' has a different QoI set");
        }
    }
    PopulationComparison out;
    for (const auto& st : studies) out.studies.push_back(st.first);

    for (std::size_t q = 0; q < ref.qoi.size(); ++q) {
        QoIComparison c;
        c.qoi = ref.qoi[q].name;
        for (const auto& [name, s] : studies) {
            const auto& e = s.qoi[q];
            c.ranked.push_back({name, e.mean, e.sd / std::sqrt(static_cast<double>(e.n))});
            c.offsets.push_back(e.mean - ref.qoi[q].mean);
        }
        std::stable_sort(c.ranked.begin(), c.ranked.end(),
                         [](const RankedMean& a, const RankedMean& b) { return a.mean < b.mean; });
        c.ordering = c.ranked.front().study;
        for (std::size_t k = 1; k < c.ranked.size(); ++k) {
            const auto& a = c.ranked[k - 1];
            const auto& b = c.ranked[k];
            const bool overlap = b.mean - b.half_width <= a.mean + a.half_width;
            c.tied = c.tied || overlap;
            c.ordering += (overlap ? " ~ " : " < ") + b.study;
        }
        out.qoi.push_back(std::move(c));
    }

    for (std::size_t s = 0; s < studies.size(); ++s) {
        const double first = out.qoi.front().offsets[s];
        bool same = true;
        for (const auto& c : out.qoi) {
            same = same && std::abs(c.offsets[s] - first) <= offset_tol * (1.0 + std::abs(first));
        }
        out.constant_offset.push_back(same);
    }
    return out;
}

}  // namespace hemo_uq
