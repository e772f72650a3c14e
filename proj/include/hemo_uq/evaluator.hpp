#pragma once

/**
 * @file evaluator.hpp
 * @brief Black-box model evaluators: the simulator chain, its MAP-mode
 * wrapper, analytic test functions and an evaluation counter.
 */

#include <atomic>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hemo_uq/errors.hpp"
#include "hemo_uq/inputs.hpp"
#include "hemo_uq/network.hpp"
#include "hemo_uq/solver.hpp"
#include "hemo_uq/waveform.hpp"

namespace hemo_uq {

/// Pure map from named inputs to named outputs. Must be thread-safe.
struct ModelEvaluator {
    std::vector<std::string> input_names;
    std::vector<std::string> output_names;
    std::function<std::vector<double>(std::span<const double>)> fn;

    [[nodiscard]] std::size_t input_count() const { return input_names.size(); }
    [[nodiscard]] std::size_t output_count() const { return output_names.size(); }

    std::vector<double> operator()(std::span<const double> x) const {
        detail::require(x.size() == input_names.size(), "evaluator input size mismatch");
        auto y = fn(x);
        if (y.size() != output_names.size()) {
            throw NumericalFailure("evaluator returned " + std::to_string(y.size()) +
                                   " outputs, expected " + std::to_string(output_names.size()));
        }
        return y;
    }
};

/// Everything needed to run one simulation apart from the four clinical inputs.
struct SimulatorSetup {
    std::shared_ptr<const NetworkModel> model;
    Waveform waveform = Waveform::ophthalmic_default(120.0, 80.0);  ///< shape; anchors replaced per call
    SolverConfig solver{};
    std::optional<CycleInstants> instants;  ///< defaults from the waveform when empty
    double periodicity_eps = 1e-3;          ///< [mmHg]

    [[nodiscard]] CycleInstants resolved_instants() const {
        return instants ? *instants : CycleInstants::defaults(waveform);
    }
};

/// One deterministic simulation at the given clinical inputs [mmHg].
inline QoIVector simulate_qoi(const SimulatorSetup& setup, double iop, double rltp, double sp,
                              double dp) {
    detail::require(setup.model != nullptr, "simulator has no network model");
    const Waveform source = setup.waveform.with_anchors(sp, dp);
    const Externals ext{iop, rltp};
    const SimulationResult r = integrate(*setup.model, source, ext, setup.solver);
    const auto check = check_periodicity(r, source.period(), setup.periodicity_eps);
    if (!check.periodic) {
        throw NumericalFailure("periodic regime not reached (last-cycle deviation " +
                               std::to_string(check.max_deviation) + " mmHg)");
    }
    return extract_qoi(r, setup.resolved_instants());
}

/// Simulator over the physical inputs, ordered as physical_input_names().
inline ModelEvaluator simulator_evaluator(SimulatorSetup setup) {
    auto shared = std::make_shared<const SimulatorSetup>(std::move(setup));
    ModelEvaluator ev;
    ev.input_names = physical_input_names();
    ev.output_names.assign(qoi_names().begin(), qoi_names().end());
    ev.fn = [shared](std::span<const double> x) {
        const QoIVector q = simulate_qoi(*shared, x[0], x[1], x[2], x[3]);
        return std::vector<double>(q.values.begin(), q.values.end());
    };
    return ev;
}

/// [MAP, IOP, RLTp] front end: SP and DP are rebuilt from MAP before each call.
inline ModelEvaluator map_mode_evaluator(ModelEvaluator physical, SpDpRegression reg = {}) {
    detail::require(physical.input_names == physical_input_names(),
                    "MAP-mode wrapper expects an evaluator over IOP, RLTp, SP, DP");
    ModelEvaluator ev;
    ev.input_names = InputDistributionSet::expected_names(InputMode::Map);
    ev.output_names = physical.output_names;
    auto inner = std::make_shared<const ModelEvaluator>(std::move(physical));
    ev.fn = [inner, reg](std::span<const double> x) {
        const auto [sp, dp] = spdp_from_map(x[0], reg);
        const double phys[4] = {x[1], x[2], sp, dp};
        return (*inner)(phys);
    };
    return ev;
}

/// Wraps `ev` so that every call increments `counter`.
inline ModelEvaluator counting_evaluator(ModelEvaluator ev,
                                         std::shared_ptr<std::atomic<std::size_t>> counter) {
    auto inner = std::make_shared<const ModelEvaluator>(ev);
    ev.fn = [inner, counter](std::span<const double> x) {
        counter->fetch_add(1, std::memory_order_relaxed);
        return inner->fn(x);
    };
    return ev;
}

// Analytic test functions with known variance decompositions.

/// Y = sin X1 + a sin^2 X2 + b X3^4 sin X1, X_i ~ U(-pi, pi).
inline ModelEvaluator ishigami_evaluator(double a = 7.0, double b = 0.1) {
    return {{"X1", "X2", "X3"},
            {"Y"},
            [a, b](std::span<const double> x) {
                const double s1 = std::sin(x[0]);
                const double s2 = std::sin(x[1]);
                const double x3 = x[2];
                return std::vector<double>{s1 + a * s2 * s2 + b * x3 * x3 * x3 * x3 * s1};
            }};
}

/// Inputs for ishigami_evaluator.
inline std::vector<NamedDistribution> ishigami_inputs() {
    const double pi = std::numbers::pi;
    return {{"X1", Distribution1D::uniform(-pi, pi)},
            {"X2", Distribution1D::uniform(-pi, pi)},
            {"X3", Distribution1D::uniform(-pi, pi)}};
}

/// Y = sum_i c_i X_i over the given input names. Inputs with c_i = 0 are dummies.
inline ModelEvaluator linear_evaluator(std::vector<std::string> names, std::vector<double> coeffs,
                                       double offset = 0.0) {
    detail::require(names.size() == coeffs.size(), "one coefficient per input required");
    return {std::move(names),
            {"Y"},
            [coeffs = std::move(coeffs), offset](std::span<const double> x) {
                double y = offset;
                for (std::size_t i = 0; i < coeffs.size(); ++i) y += coeffs[i] * x[i];
                return std::vector<double>{y};
            }};
}

/// Y = X1 + X2 with N(0,1) inputs; optional extra ignored inputs.
inline ModelEvaluator additive_evaluator(std::size_t dummies = 0) {
    std::vector<std::string> names{"X1", "X2"};
    std::vector<double> c{1.0, 1.0};
    for (std::size_t i = 0; i < dummies; ++i) {
        names.push_back("X" + std::to_string(3 + i));
        c.push_back(0.0);
    }
    return linear_evaluator(std::move(names), std::move(c));
}

inline std::vector<NamedDistribution> standard_normal_inputs(std::size_t d) {
    std::vector<NamedDistribution> v;
    for (std::size_t i = 0; i < d; ++i) {
        v.push_back({"X" + std::to_string(i + 1), Distribution1D::normal(0.0, 1.0)});
    }
    return v;
}

/// Every output equals one chosen input (or MAP = SP/3 + 2 DP/3), plus an
/// offset. Same input and output names as the simulator, so it exercises the
/// propagation plumbing with a known answer.
inline ModelEvaluator passthrough_evaluator(const std::string& input, double offset = 0.0) {
    const auto& names = physical_input_names();
    std::size_t idx = names.size();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == input) idx = i;
    }
    detail::require(idx < names.size() || input == "MAP",
                    "unknown pass-through input '" + input + "'");
    ModelEvaluator ev;
    ev.input_names = names;
    ev.output_names.assign(qoi_names().begin(), qoi_names().end());
    ev.fn = [idx, offset](std::span<const double> x) {
        const double v = idx < x.size() ? x[idx] : x[2] / 3.0 + 2.0 * x[3] / 3.0;
        return std::vector<double>(kQoiCount, v + offset);
    };
    return ev;
}

}  // namespace hemo_uq
