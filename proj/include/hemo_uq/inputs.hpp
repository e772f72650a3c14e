#pragma once

/**
 * @file inputs.hpp
 * @brief Probability model of the clinical inputs (SP, DP, MAP, IOP, RLTp)
 * and the MAP <-> (SP, DP) relations.
 */

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hemo_uq/distributions.hpp"
#include "hemo_uq/errors.hpp"

namespace hemo_uq {

/// MAP = SP/3 + 2 DP/3.
inline double map_from_spdp(double sp, double dp) {
    detail::require(sp > dp, "map_from_spdp requires SP > DP");
    return sp / 3.0 + 2.0 * dp / 3.0;
}

/// SP = slope * MAP + intercept. The defaults reproduce SP = 124.1 at
/// MAP = 93 with the slope set to the SP/MAP spread ratio 11.1/7.6.
struct SpDpRegression {
    double slope = 1.461;
    double intercept = -11.8;
};

/// (SP, DP) from MAP: SP from the regression, DP closing the MAP relation
/// exactly, DP = (3 MAP - SP) / 2.
inline std::pair<double, double> spdp_from_map(double map, const SpDpRegression& reg = {}) {
    const double sp = reg.slope * map + reg.intercept;
    const double dp = 0.5 * (3.0 * map - sp);
    if (!(sp > dp)) {
        throw InvalidInput("unphysiological pulse pressure: MAP " + std::to_string(map) +
                           " gives SP <= DP");
    }
    return {sp, dp};
}

struct NamedDistribution {
    std::string name;
    Distribution1D dist;
};

enum class InputMode {
    Map,   ///< [MAP, IOP, RLTp], independent inputs for sensitivity analysis
    SpDp,  ///< [SP, DP, IOP, RLTp]
};

/// Ordered, mutually independent inputs.
class InputDistributionSet {
public:
    InputDistributionSet(InputMode mode, std::vector<NamedDistribution> entries,
                         SpDpRegression regression = {})
        : mode_(mode), entries_(std::move(entries)), regression_(regression) {
        const auto expected = expected_names(mode_);
        detail::require(entries_.size() == expected.size(),
                        std::string("input set must contain exactly ") +
                            (mode_ == InputMode::Map ? "MAP, IOP, RLTp" : "SP, DP, IOP, RLTp"));
        for (std::size_t i = 0; i < expected.size(); ++i) {
            detail::require(entries_[i].name == expected[i],
                            "input " + std::to_string(i) + " must be '" + expected[i] + "', got '" +
                                entries_[i].name + "'");
        }
    }

    /// SP ~ N(124.1, 11.1), DP ~ N(77.5, 7.1), MAP ~ N(93, 7.6),
    /// IOP ~ lognormal with mean 14.7 / sd 2.8, RLTp ~ N(9.5, 2.2).
    static InputDistributionSet defaults(InputMode mode) {
        std::vector<NamedDistribution> e;
        if (mode == InputMode::Map) {
            e.push_back({"MAP", Distribution1D::normal(93.0, 7.6)});
        } else {
            e.push_back({"SP", Distribution1D::normal(124.1, 11.1)});
            e.push_back({"DP", Distribution1D::normal(77.5, 7.1)});
        }
        e.push_back({"IOP", lognormal_from_moments(14.7, 2.8)});
        e.push_back({"RLTp", Distribution1D::normal(9.5, 2.2)});
        return InputDistributionSet(mode, std::move(e));
    }

    static std::vector<std::string> expected_names(InputMode mode) {
        if (mode == InputMode::Map) return {"MAP", "IOP", "RLTp"};
        return {"SP", "DP", "IOP", "RLTp"};
    }

    [[nodiscard]] InputMode mode() const { return mode_; }
    [[nodiscard]] const std::vector<NamedDistribution>& entries() const { return entries_; }
    [[nodiscard]] std::size_t size() const { return entries_.size(); }
    [[nodiscard]] const SpDpRegression& regression() const { return regression_; }

    [[nodiscard]] std::optional<Distribution1D> find(const std::string& name) const {
        for (const auto& e : entries_) {
            if (e.name == name) return e.dist;
        }
        return std::nullopt;
    }

    [[nodiscard]] const Distribution1D& at(const std::string& name) const {
        for (const auto& e : entries_) {
            if (e.name == name) return e.dist;
        }
        throw InvalidInput("no distribution for input '" + name + "'");
    }

private:
    InputMode mode_;
    std::vector<NamedDistribution> entries_;
    SpDpRegression regression_;
};

/// Order of the physical model inputs everywhere downstream (raw CSV,
/// simulator evaluator).
inline const std::vector<std::string>& physical_input_names() {
    static const std::vector<std::string> names{"IOP", "RLTp", "SP", "DP"};
    return names;
}

}  // namespace hemo_uq
