#pragma once

/**
 * @file network.hpp
 * @brief Lumped-parameter (0D) vascular network in electric analogy.
 *
 * Pressures [mmHg] play the role of voltages, volumetric flows [cm^3/s] the
 * role of currents. Resistors carry R [mmHg s/cm^3], capacitors C
 * [cm^3/mmHg]. All pressures are gauge pressures relative to the ground node.
 */

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hemo_uq/errors.hpp"
#include "hemo_uq/waveform.hpp"

namespace hemo_uq {

struct NodeId {
    std::size_t index = 0;
    friend bool operator==(NodeId, NodeId) = default;
};

struct BranchId {
    std::size_t index = 0;
    friend bool operator==(BranchId, BranchId) = default;
};

inline constexpr NodeId ground_node{0};

enum class BranchKind { LinearResistor, StarlingResistor, Capacitor, PressureSource };

/// External compartment pressure acting on an element.
enum class Exposure { None, IOP, RLTp };

/// What drives a pressure source: the arterial waveform or a fixed value.
enum class SourceSignal { Arterial, Constant };

inline const char* to_string(Exposure e) {
    switch (e) {
        case Exposure::IOP: return "IOP";
        case Exposure::RLTp: return "RLTp";
        default: return "none";
    }
}

inline const char* to_string(BranchKind k) {
    switch (k) {
        case BranchKind::LinearResistor: return "resistor";
        case BranchKind::StarlingResistor: return "starling";
        case BranchKind::Capacitor: return "capacitor";
        default: return "source";
    }
}

struct Branch {
    std::string name;
    BranchKind kind = BranchKind::LinearResistor;
    NodeId from;
    NodeId to;
    /// R for resistors (R_base for Starling), C for capacitors, pressure for
    /// constant sources.
    double value = 0.0;
    /// Collapse steepness [1/mmHg], Starling resistors only.
    double starling_k = 0.0;
    Exposure exposure = Exposure::None;
    SourceSignal signal = SourceSignal::Constant;

    [[nodiscard]] bool resistive() const {
        return kind == BranchKind::LinearResistor || kind == BranchKind::StarlingResistor;
    }
};

/// External compartment pressures [mmHg].
struct Externals {
    double iop = 0.0;
    double rltp = 0.0;

    [[nodiscard]] double pressure(Exposure e) const {
        switch (e) {
            case Exposure::IOP: return iop;
            case Exposure::RLTp: return rltp;
            default: return 0.0;
        }
    }
};

/// Largest collapse exponent evaluated; keeps R finite for absurd inputs.
inline constexpr double kMaxCollapseExponent = 500.0;

/**
 * Starling resistor law R = R_base * (1 + exp(-k * dp)) with transmural
 * pressure dp = p_internal - p_external. Equals R_base for an open vessel
 * (dp >> 0), 2 R_base at dp = 0 and grows without bound as the vessel
 * collapses.
 */
inline double starling_resistance(double r_base, double p_internal, double p_external, double k) {
    detail::require(r_base > 0.0, "Starling R_base must be positive");
    detail::require(k > 0.0, "Starling steepness k must be positive");
    const double exponent = std::min(-k * (p_internal - p_external), kMaxCollapseExponent);
    return r_base * (1.0 + std::exp(exponent));
}

struct Observable {
    std::string name;
    BranchId branch;
};

class NetworkBuilder;

/// Immutable circuit. Safe to share between concurrent evaluations.
class NetworkModel {
public:
    [[nodiscard]] std::size_t node_count() const { return node_names_.size(); }
    [[nodiscard]] const std::string& node_name(NodeId n) const { return node_names_.at(n.index); }
    [[nodiscard]] const std::vector<Branch>& branches() const { return branches_; }
    [[nodiscard]] const Branch& branch(BranchId b) const { return branches_.at(b.index); }
    [[nodiscard]] const std::vector<Observable>& observables() const { return observables_; }

    [[nodiscard]] std::optional<NodeId> find_node(const std::string& name) const {
        for (std::size_t i = 0; i < node_names_.size(); ++i) {
            if (node_names_[i] == name) return NodeId{i};
        }
        return std::nullopt;
    }

    [[nodiscard]] std::optional<BranchId> find_branch(const std::string& name) const {
        for (std::size_t i = 0; i < branches_.size(); ++i) {
            if (branches_[i].name == name) return BranchId{i};
        }
        return std::nullopt;
    }

    [[nodiscard]] std::optional<BranchId> observable(const std::string& name) const {
        for (const auto& o : observables_) {
            if (o.name == name) return o.branch;
        }
        return std::nullopt;
    }

    /// Free (unknown-pressure) nodes: neither ground nor driven by a source.
    [[nodiscard]] std::size_t unknown_count() const { return unknown_nodes_.size(); }
    [[nodiscard]] NodeId unknown_node(std::size_t u) const { return unknown_nodes_[u]; }
    /// Index into the unknown vector, or -1 for ground / source nodes.
    [[nodiscard]] long unknown_index(NodeId n) const { return unknown_of_node_.at(n.index); }
    /// Total capacitance attached to an unknown node (0 for algebraic nodes).
    [[nodiscard]] double capacitance(std::size_t u) const { return capacitance_[u]; }

    /// Capacitor nodes in capacitor declaration order; position = state index.
    [[nodiscard]] std::size_t state_count() const { return state_nodes_.size(); }
    [[nodiscard]] NodeId state_node(std::size_t s) const { return state_nodes_[s]; }
    [[nodiscard]] long state_index(NodeId n) const { return state_of_node_.at(n.index); }

    /// Source branch driving node n, if any.
    [[nodiscard]] std::optional<BranchId> source_of(NodeId n) const {
        const long s = source_of_node_.at(n.index);
        if (s < 0) return std::nullopt;
        return BranchId{static_cast<std::size_t>(s)};
    }

private:
    friend class NetworkBuilder;
    NetworkModel() = default;

    std::vector<std::string> node_names_;
    std::vector<Branch> branches_;
    std::vector<Observable> observables_;
    std::vector<NodeId> unknown_nodes_;
    std::vector<long> unknown_of_node_;
    std::vector<double> capacitance_;
    std::vector<NodeId> state_nodes_;
    std::vector<long> state_of_node_;
    std::vector<long> source_of_node_;
};

class NetworkBuilder {
public:
    NetworkBuilder() { node_names_.push_back("ground"); }

    NodeId add_node(const std::string& name) {
        detail::require(!name.empty(), "node name must not be empty");
        for (const auto& n : node_names_) {
            detail::require(n != name, "duplicate node name '" + name + "'");
        }
        node_names_.push_back(name);
        return NodeId{node_names_.size() - 1};
    }

    BranchId add_resistor(const std::string& name, NodeId from, NodeId to, double r,
                          Exposure exposure = Exposure::None) {
        return add({name, BranchKind::LinearResistor, from, to, r, 0.0, exposure});
    }

    BranchId add_starling(const std::string& name, NodeId from, NodeId to, double r_base, double k,
                          Exposure exposure) {
        return add({name, BranchKind::StarlingResistor, from, to, r_base, k, exposure});
    }

    /// Capacitor between a node and ground.
    BranchId add_capacitor(const std::string& name, NodeId node, double c,
                           Exposure exposure = Exposure::None) {
        return add({name, BranchKind::Capacitor, node, ground_node, c, 0.0, exposure});
    }

    /// Ideal pressure source from ground to node.
    BranchId add_source(const std::string& name, NodeId node, SourceSignal signal,
                        double value = 0.0) {
        Branch b{name, BranchKind::PressureSource, ground_node, node, value};
        b.signal = signal;
        return add(std::move(b));
    }

    void add_observable(const std::string& name, BranchId branch) {
        observables_.push_back({name, branch});
    }

    [[nodiscard]] std::optional<BranchId> find_branch(const std::string& name) const {
        for (std::size_t i = 0; i < branches_.size(); ++i) {
            if (branches_[i].name == name) return BranchId{i};
        }
        return std::nullopt;
    }

    /// Validates the circuit and freezes it.
    [[nodiscard]] NetworkModel build() const {
        NetworkModel m;
        m.node_names_ = node_names_;
        m.branches_ = branches_;
        m.observables_ = observables_;
        const std::size_t nn = node_names_.size();

        for (const auto& b : branches_) {
            detail::require(b.from.index < nn && b.to.index < nn,
                            "branch '" + b.name + "' references an unknown node");
            detail::require(b.from != b.to, "branch '" + b.name + "' is a self-loop");
            switch (b.kind) {
                case BranchKind::LinearResistor:
                case BranchKind::StarlingResistor:
                    detail::require(b.value > 0.0 && std::isfinite(b.value),
                                    "non-positive resistance in branch '" + b.name + "'");
                    if (b.kind == BranchKind::StarlingResistor) {
                        detail::require(b.starling_k > 0.0,
                                        "non-positive Starling steepness in branch '" + b.name + "'");
                    }
                    break;
                case BranchKind::Capacitor:
                    detail::require(b.value > 0.0 && std::isfinite(b.value),
                                    "non-positive capacitance in branch '" + b.name + "'");
                    detail::require(b.to == ground_node && b.from != ground_node,
                                    "capacitor '" + b.name + "' must connect a node to ground");
                    break;
                case BranchKind::PressureSource:
                    detail::require(b.from == ground_node && b.to != ground_node,
                                    "source '" + b.name + "' must drive a node from ground");
                    break;
            }
        }

        m.source_of_node_.assign(nn, -1);
        for (std::size_t i = 0; i < branches_.size(); ++i) {
            const auto& b = branches_[i];
            if (b.kind != BranchKind::PressureSource) continue;
            detail::require(m.source_of_node_[b.to.index] < 0,
                            "node '" + node_names_[b.to.index] + "' is driven by two sources");
            m.source_of_node_[b.to.index] = static_cast<long>(i);
        }

        m.unknown_of_node_.assign(nn, -1);
        for (std::size_t n = 1; n < nn; ++n) {
            if (m.source_of_node_[n] >= 0) continue;
            m.unknown_of_node_[n] = static_cast<long>(m.unknown_nodes_.size());
            m.unknown_nodes_.push_back(NodeId{n});
        }
        m.capacitance_.assign(m.unknown_nodes_.size(), 0.0);
        m.state_of_node_.assign(nn, -1);
        for (const auto& b : branches_) {
            if (b.kind != BranchKind::Capacitor) continue;
            const long u = m.unknown_of_node_[b.from.index];
            detail::require(u >= 0, "capacitor '" + b.name + "' sits on a source-driven node");
            m.capacitance_[static_cast<std::size_t>(u)] += b.value;
            if (m.state_of_node_[b.from.index] < 0) {
                m.state_of_node_[b.from.index] = static_cast<long>(m.state_nodes_.size());
                m.state_nodes_.push_back(b.from);
            }
        }

        // connectivity over all branches, ground included
        std::vector<std::vector<std::size_t>> adj(nn);
        for (const auto& b : branches_) {
            adj[b.from.index].push_back(b.to.index);
            adj[b.to.index].push_back(b.from.index);
        }
        std::vector<bool> seen(nn, false);
        std::queue<std::size_t> queue;
        queue.push(0);
        seen[0] = true;
        while (!queue.empty()) {
            const std::size_t n = queue.front();
            queue.pop();
            for (std::size_t k : adj[n]) {
                if (!seen[k]) {
                    seen[k] = true;
                    queue.push(k);
                }
            }
        }
        for (std::size_t n = 0; n < nn; ++n) {
            detail::require(seen[n], "network is not connected: node '" + node_names_[n] + "'");
        }

        // every unknown node needs a resistive path, otherwise its pressure is undetermined
        std::vector<int> resistive_degree(nn, 0);
        for (const auto& b : branches_) {
            if (!b.resistive()) continue;
            ++resistive_degree[b.from.index];
            ++resistive_degree[b.to.index];
        }
        for (const NodeId n : m.unknown_nodes_) {
            detail::require(resistive_degree[n.index] > 0,
                            "node '" + node_names_[n.index] + "' has no resistive connection");
        }

        for (const auto& o : observables_) {
            detail::require(o.branch.index < branches_.size(),
                            "observable '" + o.name + "' refers to a missing branch");
        }
        return m;
    }

private:
    BranchId add(Branch b) {
        for (const auto& other : branches_) {
            detail::require(other.name != b.name, "duplicate branch name '" + b.name + "'");
        }
        branches_.push_back(std::move(b));
        return BranchId{branches_.size() - 1};
    }

    std::vector<std::string> node_names_;
    std::vector<Branch> branches_;
    std::vector<Observable> observables_;
};

// ---------------------------------------------------------------------------
// Reduced ocular network
// ---------------------------------------------------------------------------

/// Where the lamina cribrosa inlet taps the central retinal artery.
enum class LcTap { PreIntraocular, PostIntraocular };

/**
 * Parameters of the reduced ocular circuit.
 *
 * Retinal resistances/capacitances and the cavernous sinus pressure are
 * uncalibrated placeholders; the lamina values lcRin, lcR and C5 are
 * calibrated.
 */
struct CircuitParameters {
    /// R [mmHg s/cm^3] per segment, keyed by branch name.
    std::map<std::string, double> resistances{
        {"R_cra1", 1.65e4}, {"R_cra2", 1.65e4}, {"R_cra3", 4.0e3},  {"R_cra4", 4.0e3},
        {"R_ra1", 1.8e4},   {"R_ra2", 1.8e4},   {"R_rc1", 6.0e3},   {"R_rc2", 6.0e3},
        {"R_rv1", 2.0e3},   {"R_rv2", 2.0e3},   {"R_crv1", 1.0e3},  {"R_crv2", 1.0e3},
        {"R_crv3", 6.5e3},  {"R_crv4", 6.5e3},  {"lcRin", 78181.9}, {"lcR", 23988.25},
    };
    /// C [cm^3/mmHg] per compartment capacitor, keyed by branch name.
    std::map<std::string, double> capacitances{
        {"C_cra", 7.22e-7}, {"C_ra", 7.53e-7}, {"C_rc", 7.53e-7},
        {"C_rv", 1.67e-5},  {"C_crv", 1.07e-5}, {"C5", 7.53e-7},
    };
    /// External pressure per resistive segment; segments not listed see none.
    std::map<std::string, Exposure> exposures{
        {"R_cra1", Exposure::RLTp}, {"R_cra2", Exposure::RLTp}, {"R_cra3", Exposure::IOP},
        {"R_cra4", Exposure::IOP},  {"R_rv1", Exposure::IOP},   {"R_rv2", Exposure::IOP},
        {"R_crv1", Exposure::IOP},  {"R_crv2", Exposure::IOP},  {"R_crv3", Exposure::RLTp},
        {"R_crv4", Exposure::RLTp},
    };
    /// Segments modelled as collapsible Starling resistors.
    std::set<std::string> starling_segments{"R_rv1", "R_rv2", "R_crv1", "R_crv2"};
    /// Collapse steepness k [1/mmHg].
    double starling_k = 0.5;
    /// When false, Starling segments are built as linear resistors R_base.
    bool collapse_enabled = true;
    /// Fixed outflow pressure [mmHg].
    double cavernous_sinus_pressure = 5.0;
    LcTap lc_tap = LcTap::PreIntraocular;
    /// Observable name -> branch name.
    std::map<std::string, std::string> observables{
        {"CRA", "R_cra1"}, {"CRV", "R_crv4"}, {"LC", "lcRin"}};
};

/// Branch names of the reduced circuit, CRA inflow to cavernous sinus.
inline const std::vector<std::string>& reduced_resistor_names() {
    static const std::vector<std::string> names{
        "R_cra1", "R_cra2", "R_cra3", "R_cra4", "R_ra1",  "R_ra2",  "R_rc1",  "R_rc2",
        "R_rv1",  "R_rv2",  "R_crv1", "R_crv2", "R_crv3", "R_crv4", "lcRin",  "lcR"};
    return names;
}

inline const std::vector<std::string>& reduced_capacitor_names() {
    static const std::vector<std::string> names{"C_cra", "C_ra", "C_rc", "C_rv", "C_crv", "C5"};
    return names;
}

/// Collects every parameter violation instead of stopping at the first one.
inline std::vector<std::string> check_parameters(const CircuitParameters& p) {
    std::vector<std::string> problems;
    for (const auto& name : reduced_resistor_names()) {
        const auto it = p.resistances.find(name);
        if (it == p.resistances.end()) {
            problems.push_back("missing resistance '" + name + "'");
        } else if (!(it->second > 0.0) || !std::isfinite(it->second)) {
            problems.push_back("non-positive resistance in branch '" + name + "'");
        }
    }
    for (const auto& [name, value] : p.resistances) {
        if (std::find(reduced_resistor_names().begin(), reduced_resistor_names().end(), name) ==
            reduced_resistor_names().end()) {
            problems.push_back("unknown resistance '" + name + "'");
        }
    }
    for (const auto& name : reduced_capacitor_names()) {
        const auto it = p.capacitances.find(name);
        if (it == p.capacitances.end()) {
            problems.push_back("missing capacitance '" + name + "'");
        } else if (!(it->second > 0.0) || !std::isfinite(it->second)) {
            problems.push_back("non-positive capacitance in branch '" + name + "'");
        }
    }
    for (const auto& [name, value] : p.capacitances) {
        if (std::find(reduced_capacitor_names().begin(), reduced_capacitor_names().end(), name) ==
            reduced_capacitor_names().end()) {
            problems.push_back("unknown capacitance '" + name + "'");
        }
    }
    for (const auto& [name, e] : p.exposures) {
        if (!p.resistances.contains(name)) {
            problems.push_back("exposure given for unknown segment '" + name + "'");
        }
    }
    for (const auto& name : p.starling_segments) {
        if (!p.resistances.contains(name)) {
            problems.push_back("Starling segment '" + name + "' is not a resistance");
        } else if (!p.exposures.contains(name) || p.exposures.at(name) == Exposure::None) {
            problems.push_back("Starling segment '" + name + "' has no external pressure");
        }
    }
    if (!(p.starling_k > 0.0)) {
        problems.push_back("Starling steepness k must be positive");
    }
    if (!std::isfinite(p.cavernous_sinus_pressure)) {
        problems.push_back("cavernous sinus pressure must be finite");
    }
    for (const char* required : {"CRA", "CRV", "LC"}) {
        const auto it = p.observables.find(required);
        if (it == p.observables.end()) {
            problems.push_back(std::string("missing observable '") + required + "'");
        } else if (!p.resistances.contains(it->second)) {
            problems.push_back(std::string("observable '") + required +
                               "' refers to unknown branch '" + it->second + "'");
        }
    }
    return problems;
}

/**
 * Builds the reduced ocular circuit:
 *
 *   oa -R_cra1- . -R_cra2- [cra] -R_cra3- . -R_cra4- . -R_ra1- [ra] -R_ra2- .
 *      -R_rc1- [rc] -R_rc2- . -R_rv1- [rv] -R_rv2- . -R_crv1- . -R_crv2- [crv]
 *      -R_crv3- . -R_crv4- cs
 *
 * plus the lamina branch [cra] (or the node after R_cra4) -lcRin- [lc] -lcR- [crv].
 * Bracketed nodes carry a capacitor to ground; oa is driven by the arterial
 * waveform, cs by the constant cavernous sinus pressure.
 */
inline NetworkModel build_reduced_omvs(const CircuitParameters& params) {
    const auto problems = check_parameters(params);
    if (!problems.empty()) {
        std::string message = problems.front();
        for (std::size_t i = 1; i < problems.size(); ++i) message += "; " + problems[i];
        throw InvalidInput(message);
    }

    NetworkBuilder nb;
    const NodeId oa = nb.add_node("oa");
    const NodeId cra_rb = nb.add_node("cra_rb");
    const NodeId cra = nb.add_node("cra");
    const NodeId cra_io = nb.add_node("cra_io");
    const NodeId art = nb.add_node("art");
    const NodeId ra = nb.add_node("ra");
    const NodeId cap = nb.add_node("cap");
    const NodeId rc = nb.add_node("rc");
    const NodeId ven = nb.add_node("ven");
    const NodeId rv = nb.add_node("rv");
    const NodeId crv_io1 = nb.add_node("crv_io1");
    const NodeId crv_io2 = nb.add_node("crv_io2");
    const NodeId crv = nb.add_node("crv");
    const NodeId crv_rb = nb.add_node("crv_rb");
    const NodeId cs = nb.add_node("cs");
    const NodeId lc = nb.add_node("lc");

    auto resistor = [&](const std::string& name, NodeId from, NodeId to) {
        const double r = params.resistances.at(name);
        const auto e = params.exposures.find(name);
        const Exposure exposure = e == params.exposures.end() ? Exposure::None : e->second;
        if (params.collapse_enabled && params.starling_segments.contains(name)) {
            return nb.add_starling(name, from, to, r, params.starling_k, exposure);
        }
        return nb.add_resistor(name, from, to, r, exposure);
    };

    nb.add_source("P_oa", oa, SourceSignal::Arterial);
    resistor("R_cra1", oa, cra_rb);
    resistor("R_cra2", cra_rb, cra);
    resistor("R_cra3", cra, cra_io);
    resistor("R_cra4", cra_io, art);
    resistor("R_ra1", art, ra);
    resistor("R_ra2", ra, cap);
    resistor("R_rc1", cap, rc);
    resistor("R_rc2", rc, ven);
    resistor("R_rv1", ven, rv);
    resistor("R_rv2", rv, crv_io1);
    resistor("R_crv1", crv_io1, crv_io2);
    resistor("R_crv2", crv_io2, crv);
    resistor("R_crv3", crv, crv_rb);
    resistor("R_crv4", crv_rb, cs);
    resistor("lcRin", params.lc_tap == LcTap::PreIntraocular ? cra : art, lc);
    resistor("lcR", lc, crv);
    nb.add_source("P_cs", cs, SourceSignal::Constant, params.cavernous_sinus_pressure);

    const std::pair<const char*, NodeId> capacitors[] = {
        {"C_cra", cra}, {"C_ra", ra}, {"C_rc", rc}, {"C_rv", rv}, {"C_crv", crv}, {"C5", lc}};
    for (const auto& [name, node] : capacitors) {
        nb.add_capacitor(name, node, params.capacitances.at(name));
    }

    // fixed observable order, so QoI layout never depends on map ordering
    for (const char* name : {"CRA", "CRV", "LC"}) {
        nb.add_observable(name, *nb.find_branch(params.observables.at(name)));
    }
    return nb.build();
}

// ---------------------------------------------------------------------------
// Kirchhoff assembly
// ---------------------------------------------------------------------------

/// Flow through one resistive branch and its partial derivatives with respect
/// to the two terminal pressures.
struct BranchFlow {
    double q = 0.0;
    double dq_dfrom = 0.0;
    double dq_dto = 0.0;
};

/// Starling branches take their inlet (`from`) pressure as the internal
/// pressure. Flow then rises with the inlet pressure and falls with the
/// outlet pressure, which keeps the node balance monotone and its solution
/// unique.
inline BranchFlow resistive_flow(const Branch& b, double p_from, double p_to,
                                 const Externals& ext) {
    if (b.kind == BranchKind::LinearResistor) {
        const double g = 1.0 / b.value;
        return {(p_from - p_to) * g, g, -g};
    }
    const double dp = p_from - ext.pressure(b.exposure);
    const double raw_exponent = -b.starling_k * dp;
    const bool clamped = raw_exponent > kMaxCollapseExponent;
    const double e = std::exp(clamped ? kMaxCollapseExponent : raw_exponent);
    const double r = b.value * (1.0 + e);
    const double drop = p_from - p_to;
    // dR/dp_from = -k R_base e (zero once clamped)
    const double dr = clamped ? 0.0 : -b.starling_k * b.value * e;
    const double q = drop / r;
    return {q, 1.0 / r - drop * dr / (r * r), -1.0 / r};
}

/**
 * Net resistive inflow into every unknown node as a function of the unknown
 * node pressures, with its Jacobian. Capacitor currents are not included;
 * callers add C dP/dt terms.
 */
class NetworkEquations {
public:
    NetworkEquations(const NetworkModel& model, Externals externals)
        : model_(&model), externals_(externals) {}

    [[nodiscard]] const NetworkModel& model() const { return *model_; }
    [[nodiscard]] const Externals& externals() const { return externals_; }

    /// Pressure of every node given the unknowns and the arterial source value.
    void node_pressures(const Eigen::VectorXd& x, double arterial, std::vector<double>& p) const {
        const auto& m = *model_;
        p.assign(m.node_count(), 0.0);
        for (std::size_t n = 1; n < m.node_count(); ++n) {
            const long u = m.unknown_index(NodeId{n});
            if (u >= 0) {
                p[n] = x[u];
            } else if (const auto src = m.source_of(NodeId{n})) {
                const Branch& b = m.branch(*src);
                p[n] = b.signal == SourceSignal::Arterial ? arterial : b.value;
            }
        }
    }

    /// g(x) = net inflow per unknown node; jac (optional) = dg/dx.
    void evaluate(const Eigen::VectorXd& x, double arterial, Eigen::VectorXd& g,
                  Eigen::MatrixXd* jac) const {
        const auto& m = *model_;
        node_pressures(x, arterial, pressures_);
        const auto nu = static_cast<Eigen::Index>(m.unknown_count());
        g.setZero(nu);
        if (jac != nullptr) jac->setZero(nu, nu);
        for (const auto& b : m.branches()) {
            if (!b.resistive()) continue;
            const BranchFlow f =
                resistive_flow(b, pressures_[b.from.index], pressures_[b.to.index], externals_);
            const long uf = m.unknown_index(b.from);
            const long ut = m.unknown_index(b.to);
            if (uf >= 0) g[uf] -= f.q;
            if (ut >= 0) g[ut] += f.q;
            if (jac == nullptr) continue;
            if (uf >= 0) {
                (*jac)(uf, uf) -= f.dq_dfrom;
                if (ut >= 0) (*jac)(uf, ut) -= f.dq_dto;
            }
            if (ut >= 0) {
                (*jac)(ut, ut) += f.dq_dto;
                if (uf >= 0) (*jac)(ut, uf) += f.dq_dfrom;
            }
        }
    }

    /// Flow [cm^3/s] in every branch, positive from `from` to `to`.
    /// Capacitor flows are C dP/dt recovered from the node balance; source
    /// flows are what the source delivers into the network.
    void branch_flows(const Eigen::VectorXd& x, double arterial, std::vector<double>& q) const {
        const auto& m = *model_;
        node_pressures(x, arterial, pressures_);
        q.assign(m.branches().size(), 0.0);
        std::vector<double> inflow(m.node_count(), 0.0);
        for (std::size_t i = 0; i < m.branches().size(); ++i) {
            const Branch& b = m.branches()[i];
            if (!b.resistive()) continue;
            q[i] = resistive_flow(b, pressures_[b.from.index], pressures_[b.to.index], externals_).q;
            inflow[b.from.index] -= q[i];
            inflow[b.to.index] += q[i];
        }
        for (std::size_t i = 0; i < m.branches().size(); ++i) {
            const Branch& b = m.branches()[i];
            if (b.kind == BranchKind::Capacitor) {
                const long u = m.unknown_index(b.from);
                q[i] = inflow[b.from.index] * b.value / m.capacitance(static_cast<std::size_t>(u));
            } else if (b.kind == BranchKind::PressureSource) {
                q[i] = -inflow[b.to.index];
            }
        }
    }

private:
    const NetworkModel* model_;
    Externals externals_;
    mutable std::vector<double> pressures_;
};

/// Largest pressure change [mmHg] per Newton iteration in the node balance.
inline constexpr double kMaxNewtonMove = 10.0;

/// Damped Newton on g(x) = 0 for the unknowns flagged in `free`; the others
/// stay fixed. Returns false when it fails to converge.
inline bool solve_node_balance(const NetworkEquations& eq, double arterial, Eigen::VectorXd& x,
                               const std::vector<bool>& free, double tol, int max_iter) {
    const auto n = x.size();
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (free[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    const auto nf = static_cast<Eigen::Index>(idx.size());
    if (nf == 0) return true;
    Eigen::VectorXd g;
    Eigen::MatrixXd jac;
    Eigen::VectorXd gf(nf);
    Eigen::MatrixXd jf(nf, nf);
    auto residual_norm = [&](const Eigen::VectorXd& trial) {
        eq.evaluate(trial, arterial, g, nullptr);
        double worst = 0.0;
        for (Eigen::Index a = 0; a < nf; ++a) worst = std::max(worst, std::abs(g[idx[a]]));
        return worst;
    };
    for (int it = 0; it < max_iter; ++it) {
        eq.evaluate(x, arterial, g, &jac);
        for (Eigen::Index a = 0; a < nf; ++a) {
            gf[a] = g[idx[a]];
            for (Eigen::Index b = 0; b < nf; ++b) jf(a, b) = jac(idx[a], idx[b]);
        }
        Eigen::VectorXd dx = jf.partialPivLu().solve(gf);
        if (!dx.allFinite()) return false;
        // Starling terms make far-off Newton steps unreliable; cap the move
        const double largest = dx.lpNorm<Eigen::Infinity>();
        if (largest > kMaxNewtonMove) dx *= kMaxNewtonMove / largest;
        double base = 0.0;
        for (Eigen::Index a = 0; a < nf; ++a) base = std::max(base, std::abs(gf[a]));
        double lambda = 1.0;
        Eigen::VectorXd trial = x;
        for (int half = 0; half < 30; ++half) {
            trial = x;
            for (Eigen::Index a = 0; a < nf; ++a) trial[idx[a]] -= lambda * dx[a];
            if (residual_norm(trial) <= base || half == 29) break;
            lambda *= 0.5;
        }
        x = trial;
        const double step = lambda * dx.lpNorm<Eigen::Infinity>();
        double scale = 0.0;
        for (Eigen::Index a = 0; a < nf; ++a) scale = std::max(scale, std::abs(x[idx[a]]));
        if (step <= tol * (1.0 + scale)) return true;
    }
    return false;
}

/// dP/dt per state (capacitor node, state order) plus all branch flows.
struct RhsResult {
    std::vector<double> state_derivative;
    std::vector<double> branch_flows;
    std::vector<double> node_pressures;
};

/**
 * Evaluates the network ODE right-hand side: algebraic node pressures are
 * solved from current conservation with the capacitor pressures held at
 * `state`, then C_i dP_i/dt = net inflow at each capacitor node.
 */
inline RhsResult assemble_rhs(const NetworkModel& model, std::span<const double> state, double t,
                              const Externals& externals, const Waveform& source,
                              double tol = 1e-12) {
    detail::require(state.size() == model.state_count(),
                    "state length does not match the number of capacitor nodes");
    for (double v : state) {
        if (!std::isfinite(v)) throw NumericalFailure("numerical blow-up: non-finite state");
    }
    const NetworkEquations eq(model, externals);
    const double arterial = source(t);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.unknown_count()));
    std::vector<bool> free(model.unknown_count(), true);
    for (std::size_t s = 0; s < model.state_count(); ++s) {
        const auto u = static_cast<std::size_t>(model.unknown_index(model.state_node(s)));
        x[static_cast<Eigen::Index>(u)] = state[s];
        free[u] = false;
    }
    if (!solve_node_balance(eq, arterial, x, free, tol, 100)) {
        throw NumericalFailure("newton-divergence: algebraic node balance did not converge");
    }
    if (!x.allFinite()) throw NumericalFailure("numerical blow-up in node pressures");

    RhsResult out;
    Eigen::VectorXd g;
    eq.evaluate(x, arterial, g, nullptr);
    out.state_derivative.resize(model.state_count());
    for (std::size_t s = 0; s < model.state_count(); ++s) {
        const long u = model.unknown_index(model.state_node(s));
        out.state_derivative[s] = g[u] / model.capacitance(static_cast<std::size_t>(u));
    }
    eq.branch_flows(x, arterial, out.branch_flows);
    eq.node_pressures(x, arterial, out.node_pressures);
    return out;
}

}  // namespace hemo_uq
