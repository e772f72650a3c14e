#pragma once

/**
 * @file solver.hpp
 * @brief Fixed-step BDF integration of the network, periodicity check and
 * extraction of the nine flow QoIs over the last cardiac cycle.
 */

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hemo_uq/errors.hpp"
#include "hemo_uq/network.hpp"
#include "hemo_uq/waveform.hpp"

namespace hemo_uq {

struct SolverConfig {
    double dt = 1e-3;       ///< time step [s]
    double tol = 1e-6;      ///< relative Newton tolerance
    double t_end = 8.0;     ///< simulated horizon [s]
    int bdf_order = 2;      ///< 1 or 2
    int max_newton = 25;    ///< iterations per step before "newton-divergence"

    void validate(double period) const {
        detail::require(dt > 0.0 && std::isfinite(dt), "solver dt must be positive");
        detail::require(tol > 0.0, "solver tol must be positive");
        detail::require(bdf_order == 1 || bdf_order == 2, "bdf_order must be 1 or 2");
        detail::require(max_newton >= 1, "max_newton must be >= 1");
        detail::require(period > 0.0, "cardiac period must be positive");
        detail::require(t_end >= 2.0 * period - 1e-12,
                        "t_end must cover at least two cardiac cycles (t_end >= 2 T)");
        const double steps = t_end / dt;
        detail::require(std::abs(steps - std::round(steps)) < 1e-6 * steps,
                        "t_end must be an integer multiple of dt");
        const double per_cycle = period / dt;
        detail::require(std::abs(per_cycle - std::round(per_cycle)) < 1e-6 * per_cycle,
                        "cardiac period must be an integer multiple of dt");
    }

    [[nodiscard]] std::size_t step_count() const {
        return static_cast<std::size_t>(std::llround(t_end / dt));
    }
};

/// Sampling offsets [s] within one cardiac cycle.
struct CycleInstants {
    double t_ps = 0.0;  ///< peak systole
    double t_es = 0.0;  ///< end systole
    double t_ed = 0.0;  ///< end diastole

    /// Peak systole at the source maximum, end systole at 0.40 T (dicrotic
    /// notch proxy), end diastole at the cycle end.
    static CycleInstants defaults(const Waveform& source) {
        const double T = source.period();
        return {source.argmax(), 0.40 * T, T};
    }

    void validate(double period) const {
        detail::require(0.0 <= t_ps && t_ps < t_es && t_es < t_ed && t_ed <= period + 1e-12,
                        "cycle instants must satisfy 0 <= t_ps < t_es < t_ed <= T");
    }
};

inline constexpr std::size_t kQoiCount = 9;

/// Conversion cm^3/s -> microlitre/min.
inline constexpr double kFlowToMicrolitrePerMinute = 6.0e4;

inline const std::array<std::string, kQoiCount>& qoi_names() {
    static const std::array<std::string, kQoiCount> names{
        "CRA_ps", "CRA_es", "CRA_ed", "CRV_ps", "CRV_es", "CRV_ed", "LC_ps", "LC_es", "LC_ed"};
    return names;
}

/// Nine flows [microlitre/min], ordered as qoi_names().
struct QoIVector {
    std::array<double, kQoiCount> values{};

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

/// Full trajectory of one run. Matrices are row-major, one row per sample.
struct SimulationResult {
    double dt = 0.0;
    double period = 0.0;
    std::vector<double> time;
    std::vector<std::string> node_names;    ///< every node except ground
    std::vector<std::string> branch_names;
    std::vector<double> pressures;          ///< [sample][node]
    std::vector<double> flows;              ///< [sample][branch]
    std::vector<std::string> observable_names;
    std::vector<std::size_t> observable_branches;
    std::vector<std::size_t> state_columns;  ///< pressure columns holding states
    std::vector<std::size_t> cycle_starts;   ///< sample index where each cycle begins
    std::size_t newton_iterations = 0;

    [[nodiscard]] std::size_t samples() const { return time.size(); }
    [[nodiscard]] std::size_t node_columns() const { return node_names.size(); }
    [[nodiscard]] std::size_t branch_columns() const { return branch_names.size(); }

    [[nodiscard]] double pressure(std::size_t sample, std::size_t node) const {
        return pressures[sample * node_columns() + node];
    }
    [[nodiscard]] double flow(std::size_t sample, std::size_t branch) const {
        return flows[sample * branch_columns() + branch];
    }
    [[nodiscard]] double observable_flow(std::size_t sample, std::size_t obs) const {
        return flow(sample, observable_branches.at(obs));
    }
    [[nodiscard]] std::optional<std::size_t> observable_index(const std::string& name) const {
        for (std::size_t i = 0; i < observable_names.size(); ++i) {
            if (observable_names[i] == name) return i;
        }
        return std::nullopt;
    }

    /// Copy restricted to the first `count` samples.
    [[nodiscard]] SimulationResult truncated(std::size_t count) const {
        SimulationResult r = *this;
        count = std::min(count, samples());
        r.time.resize(count);
        r.pressures.resize(count * node_columns());
        r.flows.resize(count * branch_columns());
        std::erase_if(r.cycle_starts, [&](std::size_t s) { return s >= count; });
        return r;
    }
};

/**
 * Steady state with the arterial source frozen at `arterial` [mmHg]; returns
 * the unknown node pressures.
 */
inline Eigen::VectorXd steady_state(const NetworkModel& model, const Externals& externals,
                                    double arterial) {
    const NetworkEquations eq(model, externals);
    Eigen::VectorXd x = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.unknown_count()),
                                                  0.5 * arterial);
    const std::vector<bool> free(model.unknown_count(), true);
    if (!solve_node_balance(eq, arterial, x, free, 1e-13, 200) || !x.allFinite()) {
        throw NumericalFailure("newton-divergence: steady-state pre-solve did not converge");
    }
    return x;
}

namespace detail {

inline void record_sample(const NetworkEquations& eq, const Eigen::VectorXd& x, double arterial,
                          double t, SimulationResult& r, std::vector<double>& scratch) {
    r.time.push_back(t);
    eq.node_pressures(x, arterial, scratch);
    r.pressures.insert(r.pressures.end(), scratch.begin() + 1, scratch.end());
    eq.branch_flows(x, arterial, scratch);
    r.flows.insert(r.flows.end(), scratch.begin(), scratch.end());
}

}  // namespace detail

/**
 * Integrates the network over [0, t_end] with fixed-step BDF-1/BDF-2.
 *
 * Each step solves the full Kirchhoff system (capacitor and algebraic nodes
 * together) by Newton. Convergence is declared when the Newton correction,
 * i.e. the residual mapped back to pressure units, satisfies
 * |dx|_inf <= tol (1 + |x|_inf).
 *
 * Without `initial_state` the run starts from the diastolic steady state
 * (source frozen at DP). Otherwise `initial_state` holds the capacitor
 * pressures in state order and the algebraic nodes are solved from them.
 */
inline SimulationResult integrate(const NetworkModel& model, const Waveform& source,
                                  const Externals& externals, const SolverConfig& cfg,
                                  std::optional<std::span<const double>> initial_state = {}) {
    cfg.validate(source.period());
    const NetworkEquations eq(model, externals);
    const auto nu = static_cast<Eigen::Index>(model.unknown_count());

    Eigen::VectorXd x;
    if (initial_state) {
        const RhsResult start = assemble_rhs(model, *initial_state, 0.0, externals, source);
        x.resize(nu);
        for (Eigen::Index u = 0; u < nu; ++u) {
            x[u] = start.node_pressures[model.unknown_node(static_cast<std::size_t>(u)).index];
        }
    } else {
        x = steady_state(model, externals, source.diastolic());
    }

    SimulationResult r;
    r.dt = cfg.dt;
    r.period = source.period();
    for (std::size_t n = 1; n < model.node_count(); ++n) {
        r.node_names.push_back(model.node_name(NodeId{n}));
    }
    for (const auto& b : model.branches()) r.branch_names.push_back(b.name);
    for (const auto& o : model.observables()) {
        r.observable_names.push_back(o.name);
        r.observable_branches.push_back(o.branch.index);
    }
    for (std::size_t s = 0; s < model.state_count(); ++s) {
        r.state_columns.push_back(model.state_node(s).index - 1);
    }

    const std::size_t steps = cfg.step_count();
    const auto per_cycle = static_cast<std::size_t>(std::llround(source.period() / cfg.dt));
    for (std::size_t s = 0; s + per_cycle <= steps; s += per_cycle) r.cycle_starts.push_back(s);
    r.time.reserve(steps + 1);
    r.pressures.reserve((steps + 1) * r.node_columns());
    r.flows.reserve((steps + 1) * r.branch_columns());

    Eigen::VectorXd cap(nu);
    for (Eigen::Index u = 0; u < nu; ++u) cap[u] = model.capacitance(static_cast<std::size_t>(u));

    std::vector<double> scratch;
    detail::record_sample(eq, x, source(0.0), 0.0, r, scratch);

    Eigen::VectorXd prev = x;  // x_{n-1}
    Eigen::VectorXd g;
    Eigen::MatrixXd jac;
    Eigen::VectorXd history(nu);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(nu);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n + 1) * cfg.dt;
        const double arterial = source(t);
        const bool second_order = cfg.bdf_order == 2 && n > 0;
        double alpha0 = 1.0;
        if (second_order) {
            alpha0 = 1.5;
            history = -2.0 * x + 0.5 * prev;
        } else {
            history = -x;
        }
        Eigen::VectorXd next = second_order ? Eigen::VectorXd(2.0 * x - prev) : x;

        bool converged = false;
        for (int it = 0; it < cfg.max_newton; ++it) {
            eq.evaluate(next, arterial, g, &jac);
            // F = g - C (alpha0 x + history) / dt
            g.array() -= cap.array() * (alpha0 * next + history).array() / cfg.dt;
            jac.diagonal().array() -= cap.array() * alpha0 / cfg.dt;
            lu.compute(jac);
            const Eigen::VectorXd dx = lu.solve(g);
            if (!dx.allFinite()) {
                throw NumericalFailure("numerical blow-up at t = " + std::to_string(t) + " s");
            }
            next -= dx;
            ++r.newton_iterations;
            if (dx.lpNorm<Eigen::Infinity>() <= cfg.tol * (1.0 + next.lpNorm<Eigen::Infinity>())) {
                converged = true;
                break;
            }
        }
        if (!next.allFinite()) {
            throw NumericalFailure("numerical blow-up at t = " + std::to_string(t) + " s");
        }
        if (!converged) {
            throw NumericalFailure("newton-divergence: more than " +
                                   std::to_string(cfg.max_newton) + " iterations at t = " +
                                   std::to_string(t) + " s");
        }
        prev = x;
        x = next;
        detail::record_sample(eq, x, arterial, t, r, scratch);
    }
    return r;
}

struct PeriodicityCheck {
    bool periodic = false;
    double max_deviation = 0.0;  ///< max |P(t) - P(t - T)| over the last cycle [mmHg]
};

/// Compares the last cycle with the penultimate one over all node pressures.
inline PeriodicityCheck check_periodicity(const SimulationResult& result, double period,
                                          double eps) {
    detail::require(period > 0.0 && result.dt > 0.0, "invalid period or time step");
    const auto per_cycle = static_cast<std::size_t>(std::llround(period / result.dt));
    if (result.samples() < 2 * per_cycle + 1) {
        throw InvalidInput("insufficient cycles: periodicity needs at least two cycles");
    }
    PeriodicityCheck check;
    const std::size_t last = result.samples() - 1;
    const std::size_t nodes = result.node_columns();
    for (std::size_t s = last - per_cycle; s <= last; ++s) {
        for (std::size_t k = 0; k < nodes; ++k) {
            const double d = std::abs(result.pressure(s, k) - result.pressure(s - per_cycle, k));
            if (!(d <= check.max_deviation)) check.max_deviation = d;  // NaN propagates
        }
    }
    check.periodic = check.max_deviation < eps;
    return check;
}

/// Linear interpolation of an observable flow at absolute time t.
inline double sample_observable(const SimulationResult& r, std::size_t obs, double t) {
    const double pos = (t - r.time.front()) / r.dt;
    auto i0 = static_cast<std::size_t>(std::floor(pos));
    if (i0 >= r.samples() - 1) i0 = r.samples() - 2;
    const double w = std::clamp(pos - static_cast<double>(i0), 0.0, 1.0);
    return (1.0 - w) * r.observable_flow(i0, obs) + w * r.observable_flow(i0 + 1, obs);
}

/// Samples the CRA, CRV and LC flows at the three instants of the last cycle.
inline QoIVector extract_qoi(const SimulationResult& result, const CycleInstants& instants) {
    instants.validate(result.period);
    detail::require(result.samples() >= 2, "empty simulation result");
    const double t_end = result.time.back();
    const double cycle_start = t_end - result.period;
    detail::require(cycle_start >= result.time.front() - 1e-12,
                    "simulation shorter than one cardiac cycle");
    QoIVector q;
    const char* locations[] = {"CRA", "CRV", "LC"};
    for (std::size_t loc = 0; loc < 3; ++loc) {
        const auto obs = result.observable_index(locations[loc]);
        detail::require(obs.has_value(),
                        std::string("model has no '") + locations[loc] + "' observable");
        const double offsets[] = {instants.t_ps, instants.t_es, instants.t_ed};
        for (std::size_t k = 0; k < 3; ++k) {
            const double t = std::min(cycle_start + offsets[k], t_end);
            const double v = sample_observable(result, *obs, t) * kFlowToMicrolitrePerMinute;
            if (!std::isfinite(v)) throw NumericalFailure("numerical blow-up in QoI extraction");
            q[loc * 3 + k] = v;
        }
    }
    return q;
}

}  // namespace hemo_uq
