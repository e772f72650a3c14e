#pragma once

/**
 * @file config.hpp
 * @brief JSON model and experiment files. Loading collects every problem
 * it finds so a user sees all violations at once.
 */

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "hemo_uq/distributions.hpp"
#include "hemo_uq/errors.hpp"
#include "hemo_uq/inputs.hpp"
#include "hemo_uq/io.hpp"
#include "hemo_uq/network.hpp"
#include "hemo_uq/propagation.hpp"
#include "hemo_uq/sensitivity.hpp"
#include "hemo_uq/solver.hpp"
#include "hemo_uq/waveform.hpp"

namespace hemo_uq {

using nlohmann::json;

struct Diagnostics {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;

    void error(std::string m) { errors.push_back(std::move(m)); }
    void warn(std::string m) { warnings.push_back(std::move(m)); }
    [[nodiscard]] bool ok() const { return errors.empty(); }

    /// Throws InvalidInput listing every collected error.
    void throw_if_errors() const {
        if (errors.empty()) return;
        std::string m = std::to_string(errors.size()) + " configuration error" +
                        (errors.size() == 1 ? "" : "s") + ":";
        for (const auto& e : errors) m += "\n  - " + e;
        throw InvalidInput(m);
    }
};

namespace detail {

inline std::optional<double> number_at(const json& j, const std::string& key, const std::string& where,
                                       Diagnostics& diag) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_number()) {
        diag.error(where + "." + key + " must be a number");
        return std::nullopt;
    }
    return j.at(key).get<double>();
}

inline std::optional<json> object_at(const json& j, const std::string& key, const std::string& where,
                                     Diagnostics& diag) {
    if (!j.contains(key)) return std::nullopt;
    if (!j.at(key).is_object()) {
        diag.error(where + "." + key + " must be an object");
        return std::nullopt;
    }
    return j.at(key);
}

inline std::optional<json> parse_json_file(const std::filesystem::path& path, const std::string& what,
                                           Diagnostics& diag) {
    if (!std::filesystem::exists(path)) {
        diag.error(what + " not found: '" + path.string() + "'");
        return std::nullopt;
    }
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        diag.error(what + " '" + path.string() + "' is not valid JSON: " + e.what());
    } catch (const Error& e) {
        diag.error(e.what());
    }
    return std::nullopt;
}

inline std::optional<Exposure> exposure_from_string(const std::string& s) {
    if (s == "IOP") return Exposure::IOP;
    if (s == "RLTp") return Exposure::RLTp;
    if (s == "none" || s == "None") return Exposure::None;
    return std::nullopt;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model parameter file
// ---------------------------------------------------------------------------

/// Units every model file must declare.
inline const std::map<std::string, std::string>& model_units() {
    static const std::map<std::string, std::string> u{{"pressure", "mmHg"},
                                                      {"time", "s"},
                                                      {"volume", "cm^3"},
                                                      {"resistance", "mmHg s/cm^3"},
                                                      {"capacitance", "cm^3/mmHg"}};
    return u;
}

struct ModelFile {
    CircuitParameters params;
    std::vector<std::string> uncalibrated;  ///< calibration groups flagged uncalibrated
    json document;
};

/// Serialises parameters in the model file layout (no calibration section).
inline json model_to_json(const CircuitParameters& p) {
    json j;
    j["units"] = model_units();
    j["resistances"] = p.resistances;
    j["capacitances"] = p.capacitances;
    json ex = json::object();
    for (const auto& [k, v] : p.exposures) ex[k] = to_string(v);
    j["exposures"] = ex;
    j["observables"] = p.observables;
    j["starling"] = {{"k", p.starling_k},
                     {"segments", std::vector<std::string>(p.starling_segments.begin(),
                                                           p.starling_segments.end())},
                     {"enabled", p.collapse_enabled}};
    j["cavernous_sinus_pressure"] = p.cavernous_sinus_pressure;
    j["lc_tap"] = p.lc_tap == LcTap::PreIntraocular ? "pre_intraocular" : "post_intraocular";
    return j;
}

/// Reads a model document; every section is required.
inline ModelFile parse_model(const json& doc, Diagnostics& diag) {
    ModelFile mf;
    mf.document = doc;
    CircuitParameters& p = mf.params;
    if (!doc.is_object()) {
        diag.error("model file must be a JSON object");
        return mf;
    }

    if (const auto units = detail::object_at(doc, "units", "model", diag)) {
        for (const auto& [key, expected] : model_units()) {
            if (!units->contains(key)) {
                diag.error("model.units." + key + " missing (expected '" + expected + "')");
            } else if (!units->at(key).is_string() || units->at(key).get<std::string>() != expected) {
                diag.error("model.units." + key + " must be '" + expected + "', got " + units->at(key).dump());
            }
        }
    } else if (!doc.contains("units")) {
        diag.error("model.units section missing");
    }

    auto read_values = [&](const char* section, std::map<std::string, double>& into) {
        const auto sec = detail::object_at(doc, section, "model", diag);
        if (!sec) {
            if (!doc.contains(section)) diag.error(std::string("model.") + section + " section missing");
            return;
        }
        into.clear();
        for (const auto& [k, v] : sec->items()) {
            if (!v.is_number()) {
                diag.error(std::string("model.") + section + "." + k + " must be a number");
                continue;
            }
            into[k] = v.get<double>();
        }
    };
    read_values("resistances", p.resistances);
    read_values("capacitances", p.capacitances);

    if (const auto ex = detail::object_at(doc, "exposures", "model", diag)) {
        p.exposures.clear();
        for (const auto& [k, v] : ex->items()) {
            const auto e = v.is_string() ? detail::exposure_from_string(v.get<std::string>()) : std::nullopt;
            if (!e) {
                diag.error("model.exposures." + k + " must be one of IOP, RLTp, none");
                continue;
            }
            if (*e != Exposure::None) p.exposures[k] = *e;
        }
    } else if (!doc.contains("exposures")) {
        diag.error("model.exposures section missing");
    }

    if (const auto obs = detail::object_at(doc, "observables", "model", diag)) {
        p.observables.clear();
        for (const auto& [k, v] : obs->items()) {
            if (!v.is_string()) {
                diag.error("model.observables." + k + " must name a branch");
                continue;
            }
            p.observables[k] = v.get<std::string>();
        }
    } else if (!doc.contains("observables")) {
        diag.error("model.observables section missing");
    }

    if (const auto st = detail::object_at(doc, "starling", "model", diag)) {
        if (const auto k = detail::number_at(*st, "k", "model.starling", diag)) p.starling_k = *k;
        else if (!st->contains("k")) diag.error("model.starling.k missing");
        if (st->contains("segments")) {
            if (!st->at("segments").is_array()) {
                diag.error("model.starling.segments must be a list of branch names");
            } else {
                p.starling_segments.clear();
                for (const auto& s : st->at("segments")) {
                    if (s.is_string()) p.starling_segments.insert(s.get<std::string>());
                    else diag.error("model.starling.segments entries must be strings");
                }
            }
        }
        if (st->contains("enabled")) {
            if (st->at("enabled").is_boolean()) p.collapse_enabled = st->at("enabled").get<bool>();
            else diag.error("model.starling.enabled must be true or false");
        }
    } else if (!doc.contains("starling")) {
        diag.error("model.starling section missing");
    }

    if (const auto cs = detail::number_at(doc, "cavernous_sinus_pressure", "model", diag)) {
        p.cavernous_sinus_pressure = *cs;
    }
    if (doc.contains("lc_tap")) {
        const auto& t = doc.at("lc_tap");
        if (t == "pre_intraocular") p.lc_tap = LcTap::PreIntraocular;
        else if (t == "post_intraocular") p.lc_tap = LcTap::PostIntraocular;
        else diag.error("model.lc_tap must be 'pre_intraocular' or 'post_intraocular'");
    }

    if (const auto cal = detail::object_at(doc, "calibration", "model", diag)) {
        for (const auto& [k, v] : cal->items()) {
            if (v.is_object() && v.value("uncalibrated", false)) mf.uncalibrated.push_back(k);
        }
    }

    for (auto& problem : check_parameters(p)) diag.error("model: " + problem);
    return mf;
}

inline ModelFile load_model_file(const std::filesystem::path& path, Diagnostics& diag) {
    if (const auto doc = detail::parse_json_file(path, "model file", diag)) return parse_model(*doc, diag);
    return {};
}

// ---------------------------------------------------------------------------
// Input distributions
// ---------------------------------------------------------------------------

/// {kind, params, units} -> distribution. Lognormal accepts either
/// {mean, sd} (moment matching) or {mu_ln, sigma_ln}.
inline std::optional<Distribution1D> parse_distribution(const std::string& name, const json& j,
                                                        Diagnostics& diag) {
    const std::string where = "inputs.distributions." + name;
    if (!j.is_object()) {
        diag.error(where + " must be an object {kind, params, units}");
        return std::nullopt;
    }
    if (!j.contains("units")) {
        diag.error(where + ".units missing (expected 'mmHg')");
    } else if (j.at("units") != "mmHg") {
        diag.error(where + ".units must be 'mmHg', got " + j.at("units").dump());
    }
    const std::string kind = j.value("kind", "");
    const json params = j.value("params", json::object());
    auto need = [&](const char* key) -> std::optional<double> {
        const auto v = detail::number_at(params, key, where + ".params", diag);
        if (!v && !params.contains(key)) diag.error(where + ".params." + key + " missing");
        return v;
    };
    try {
        if (kind == "normal") {
            const auto m = need("mean");
            const auto s = need("sd");
            if (m && s) return Distribution1D::normal(*m, *s);
        } else if (kind == "lognormal") {
            if (params.contains("mu_ln") || params.contains("sigma_ln")) {
                const auto m = need("mu_ln");
                const auto s = need("sigma_ln");
                if (m && s) return Distribution1D::lognormal(*m, *s);
            } else {
                const auto m = need("mean");
                const auto s = need("sd");
                if (m && s) return lognormal_from_moments(*m, *s);
            }
        } else if (kind == "truncated_normal") {
            const auto m = need("mean");
            const auto s = need("sd");
            const auto lo = need("lo");
            const auto hi = need("hi");
            if (m && s && lo && hi) return Distribution1D::truncated_normal(*m, *s, *lo, *hi);
        } else if (kind == "uniform") {
            const auto lo = need("lo");
            const auto hi = need("hi");
            if (lo && hi) return Distribution1D::uniform(*lo, *hi);
        } else {
            diag.error("unknown distribution kind '" + kind + "' for input '" + name +
                       "' (expected normal, lognormal, truncated_normal or uniform)");
        }
    } catch (const InvalidInput& e) {
        diag.error(where + ": " + e.what());
    }
    return std::nullopt;
}

inline json distribution_to_json(const Distribution1D& d) {
    json j;
    j["kind"] = d.kind();
    j["units"] = "mmHg";
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, Normal>) j["params"] = {{"mean", p.mean}, {"sd", p.sd}};
            else if constexpr (std::is_same_v<T, LogNormal>)
                j["params"] = {{"mu_ln", p.mu_ln}, {"sigma_ln", p.sigma_ln}};
            else if constexpr (std::is_same_v<T, TruncatedNormal>)
                j["params"] = {{"mean", p.mean}, {"sd", p.sd}, {"lo", p.lo}, {"hi", p.hi}};
            else j["params"] = {{"lo", p.lo}, {"hi", p.hi}};
        },
        d.params());
    return j;
}

// ---------------------------------------------------------------------------
// Experiment file
// ---------------------------------------------------------------------------

enum class ExperimentKind { Simulate, Propagate, Sobol, Fast, Converge };

inline const char* to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::Simulate: return "simulate";
        case ExperimentKind::Propagate: return "propagate";
        case ExperimentKind::Sobol: return "sobol";
        case ExperimentKind::Fast: return "fast";
        case ExperimentKind::Converge: return "converge";
    }
    return "?";
}

inline std::optional<ExperimentKind> experiment_kind_from_string(const std::string& s) {
    for (auto k : {ExperimentKind::Simulate, ExperimentKind::Propagate, ExperimentKind::Sobol,
                   ExperimentKind::Fast, ExperimentKind::Converge}) {
        if (s == to_string(k)) return k;
    }
    return std::nullopt;
}

/// Which model the sensitivity / propagation engines drive.
enum class EvaluatorKind { Simulator, Ishigami, Additive, Passthrough };

struct ExperimentConfig {
    std::filesystem::path config_path;
    std::filesystem::path model_path;
    std::filesystem::path output_dir;
    ModelFile model;

    // solver block
    SolverConfig solver;
    double period = 1.0;
    std::optional<CycleInstants> instants;
    Waveform waveform = Waveform::ophthalmic_default(120.0, 80.0);
    json waveform_spec = {{"kind", "fourier"}};

    // inputs block
    bool map_mode = true;
    SpDpRegression regression;
    std::map<std::string, Distribution1D> distributions;

    // experiment block
    ExperimentKind kind = ExperimentKind::Simulate;
    EvaluatorKind evaluator = EvaluatorKind::Simulator;
    std::string passthrough_input = "IOP";
    std::map<std::string, double> values;  ///< simulate: IOP, RLTp, SP, DP
    Population population = Population::Baseline;
    std::vector<std::string> stochastic{"IOP"};
    std::map<std::string, double> frozen;
    std::size_t n = 10000;
    ConvergenceSchedule schedule;
    bool stop_early = false;
    std::string method = "both";  ///< converge: pick_freeze, fast or both
    double agreement_tol = 0.08;
    std::optional<std::uint64_t> seed;

    json resolved;  ///< fully expanded configuration, stored in the manifest

    [[nodiscard]] bool stochastic_kind() const { return kind != ExperimentKind::Simulate; }

    /// Input set in the active mode, missing entries filled with defaults.
    [[nodiscard]] InputDistributionSet input_set(InputMode mode) const {
        std::vector<NamedDistribution> entries;
        const auto defaults = InputDistributionSet::defaults(mode);
        for (const auto& e : defaults.entries()) {
            const auto it = distributions.find(e.name);
            entries.push_back({e.name, it == distributions.end() ? e.dist : it->second});
        }
        return InputDistributionSet(mode, std::move(entries), regression);
    }

    [[nodiscard]] SimulatorSetup simulator_setup() const {
        SimulatorSetup s;
        s.model = std::make_shared<const NetworkModel>(build_reduced_omvs(model.params));
        s.waveform = waveform;
        s.solver = solver;
        s.instants = instants;
        return s;
    }
};

namespace detail {

inline void parse_solver(const json& j, ExperimentConfig& cfg, const std::filesystem::path& base,
                         Diagnostics& diag) {
    if (const auto v = number_at(j, "dt", "solver", diag)) cfg.solver.dt = *v;
    if (const auto v = number_at(j, "tol", "solver", diag)) cfg.solver.tol = *v;
    if (const auto v = number_at(j, "t_end", "solver", diag)) cfg.solver.t_end = *v;
    if (const auto v = number_at(j, "period", "solver", diag)) cfg.period = *v;
    if (const auto v = number_at(j, "bdf_order", "solver", diag)) cfg.solver.bdf_order = static_cast<int>(*v);
    if (const auto v = number_at(j, "max_newton", "solver", diag)) cfg.solver.max_newton = static_cast<int>(*v);
    try {
        cfg.solver.validate(cfg.period);
    } catch (const InvalidInput& e) {
        diag.error(std::string("solver: ") + e.what());
    }

    if (const auto w = object_at(j, "waveform", "solver", diag)) {
        cfg.waveform_spec = *w;
        const std::string kind = w->value("kind", "fourier");
        try {
            if (kind == "fourier") {
                std::vector<Harmonic> hs;
                if (w->contains("harmonics")) {
                    for (const auto& h : w->at("harmonics")) {
                        hs.push_back({h.at("order").get<int>(), h.at("amplitude").get<double>(),
                                      h.at("phase").get<double>()});
                    }
                    cfg.waveform = Waveform::fourier(hs, 120.0, 80.0, cfg.period);
                } else {
                    cfg.waveform = Waveform::ophthalmic_default(120.0, 80.0, cfg.period);
                }
            } else if (kind == "tabulated") {
                const auto file = base / w->value("file", "");
                if (!w->contains("file") || !std::filesystem::exists(file)) {
                    diag.error("solver.waveform.file not found: '" + file.string() + "'");
                } else {
                    std::vector<double> t, p;
                    for (const auto& row : parse_csv(read_text_file(file))) {
                        if (row.size() < 2) continue;
                        try {
                            t.push_back(std::stod(row[0]));
                            p.push_back(std::stod(row[1]));
                        } catch (const std::exception&) {
                            if (!t.empty()) diag.error("solver.waveform.file: non-numeric row '" + row[0] + "'");
                        }
                    }
                    cfg.waveform = Waveform::tabulated(t, p, 120.0, 80.0, cfg.period);
                }
            } else {
                diag.error("solver.waveform.kind must be 'fourier' or 'tabulated'");
            }
        } catch (const json::exception& e) {
            diag.error(std::string("solver.waveform: ") + e.what());
        } catch (const InvalidInput& e) {
            diag.error(std::string("solver.waveform: ") + e.what());
        }
    } else {
        cfg.waveform = Waveform::ophthalmic_default(120.0, 80.0, cfg.period);
    }

    if (const auto ins = object_at(j, "instants", "solver", diag)) {
        const auto def = CycleInstants::defaults(cfg.waveform);
        CycleInstants c = def;
        if (const auto v = number_at(*ins, "t_ps", "solver.instants", diag)) c.t_ps = *v;
        if (const auto v = number_at(*ins, "t_es", "solver.instants", diag)) c.t_es = *v;
        if (const auto v = number_at(*ins, "t_ed", "solver.instants", diag)) c.t_ed = *v;
        try {
            c.validate(cfg.period);
            cfg.instants = c;
        } catch (const InvalidInput& e) {
            diag.error(std::string("solver.instants: ") + e.what());
        }
    }
}

inline void parse_inputs(const json& j, ExperimentConfig& cfg, Diagnostics& diag) {
    if (j.contains("map_mode")) {
        if (j.at("map_mode").is_boolean()) cfg.map_mode = j.at("map_mode").get<bool>();
        else diag.error("inputs.map_mode must be true or false");
    }
    if (const auto reg = object_at(j, "spdp_regression", "inputs", diag)) {
        if (const auto v = number_at(*reg, "slope", "inputs.spdp_regression", diag)) cfg.regression.slope = *v;
        if (const auto v = number_at(*reg, "intercept", "inputs.spdp_regression", diag)) {
            cfg.regression.intercept = *v;
        }
    }
    const auto allowed = InputDistributionSet::expected_names(cfg.map_mode ? InputMode::Map : InputMode::SpDp);
    if (const auto ds = object_at(j, "distributions", "inputs", diag)) {
        for (const auto& [name, spec] : ds->items()) {
            if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
                diag.error("input '" + name + "' is not part of the " +
                           (cfg.map_mode ? "MAP-mode set (MAP, IOP, RLTp)" : "SP/DP-mode set (SP, DP, IOP, RLTp)"));
                continue;
            }
            if (auto d = parse_distribution(name, spec, diag)) cfg.distributions.emplace(name, *d);
        }
    }
}

inline void parse_experiment(const json& j, ExperimentConfig& cfg, Diagnostics& diag) {
    const std::string kind = j.value("kind", "");
    if (const auto k = experiment_kind_from_string(kind)) {
        cfg.kind = *k;
    } else {
        diag.error("experiment.kind must be one of simulate, propagate, sobol, fast, converge (got '" +
                   kind + "')");
    }

    const std::string ev = j.value("evaluator", "simulator");
    if (ev == "simulator") cfg.evaluator = EvaluatorKind::Simulator;
    else if (ev == "ishigami") cfg.evaluator = EvaluatorKind::Ishigami;
    else if (ev == "additive") cfg.evaluator = EvaluatorKind::Additive;
    else if (ev == "passthrough") cfg.evaluator = EvaluatorKind::Passthrough;
    else diag.error("experiment.evaluator must be simulator, ishigami, additive or passthrough");
    cfg.passthrough_input = j.value("passthrough_input", cfg.passthrough_input);

    if (j.contains("seed")) {
        if (j.at("seed").is_number_unsigned()) cfg.seed = j.at("seed").get<std::uint64_t>();
        else diag.error("experiment.seed must be a non-negative integer");
    }
    if (j.contains("n")) {
        if (j.at("n").is_number_unsigned()) cfg.n = j.at("n").get<std::size_t>();
        else diag.error("experiment.n must be a positive integer");
    }

    if (const auto vals = object_at(j, "values", "experiment", diag)) {
        for (const auto& [k, v] : vals->items()) {
            if (v.is_number()) cfg.values[k] = v.get<double>();
            else diag.error("experiment.values." + k + " must be a number");
        }
    }

    if (j.contains("population")) {
        try {
            cfg.population = population_from_string(j.at("population").get<std::string>());
        } catch (const std::exception& e) {
            diag.error(std::string("experiment.population: ") + e.what());
        }
    }
    if (j.contains("stochastic")) {
        cfg.stochastic.clear();
        if (!j.at("stochastic").is_array()) diag.error("experiment.stochastic must be a list of input names");
        else for (const auto& s : j.at("stochastic")) cfg.stochastic.push_back(s.get<std::string>());
    }
    if (const auto fr = object_at(j, "frozen", "experiment", diag)) {
        for (const auto& [k, v] : fr->items()) {
            if (v.is_number()) cfg.frozen[k] = v.get<double>();
            else diag.error("experiment.frozen." + k + " must be a number");
        }
    }

    if (j.contains("schedule")) {
        cfg.schedule.sizes.clear();
        if (!j.at("schedule").is_array()) diag.error("experiment.schedule must be a list of sample sizes");
        else for (const auto& s : j.at("schedule")) {
            if (s.is_number_unsigned()) cfg.schedule.sizes.push_back(s.get<std::size_t>());
            else diag.error("experiment.schedule entries must be positive integers");
        }
    }
    if (const auto v = number_at(j, "threshold", "experiment", diag)) cfg.schedule.threshold = *v;
    if (j.contains("stop_early")) cfg.stop_early = j.at("stop_early").get<bool>();
    cfg.method = j.value("method", cfg.method);
    if (const auto v = number_at(j, "agreement_tol", "experiment", diag)) cfg.agreement_tol = *v;
}

inline void validate_experiment(ExperimentConfig& cfg, Diagnostics& diag) {
    const bool sim = cfg.evaluator == EvaluatorKind::Simulator;
    switch (cfg.kind) {
        case ExperimentKind::Simulate:
            for (const auto& name : physical_input_names()) {
                if (!cfg.values.contains(name)) diag.error("experiment.values." + name + " missing");
            }
            if (cfg.values.contains("SP") && cfg.values.contains("DP") &&
                !(cfg.values.at("SP") > cfg.values.at("DP"))) {
                diag.error("experiment.values: SP must exceed DP");
            }
            break;
        case ExperimentKind::Propagate: {
            if (cfg.evaluator != EvaluatorKind::Simulator && cfg.evaluator != EvaluatorKind::Passthrough) {
                diag.error("propagate drives the simulator or the passthrough surrogate");
            }
            if (cfg.map_mode && !cfg.stochastic.empty() &&
                std::any_of(cfg.stochastic.begin(), cfg.stochastic.end(),
                            [](const std::string& s) { return s == "SP" || s == "DP"; })) {
                diag.error("sampling SP or DP needs inputs.map_mode = false");
            }
            if (cfg.n < 2) diag.error("experiment.n must be >= 2 for propagate");
            try {
                const auto study = [&] {
                    PropagationStudy s;
                    s.name = to_string(cfg.population);
                    s.population = cfg.population;
                    s.n = cfg.n;
                    const auto set = cfg.input_set(InputMode::SpDp);
                    for (const auto& name : cfg.stochastic) {
                        const auto d = set.find(name);
                        detail::require(d.has_value(), "no distribution for stochastic input '" + name + "'");
                        s.stochastic.push_back({name, *d});
                    }
                    if (cfg.population != Population::Custom) {
                        const auto [sp, dp] = population_pressures(cfg.population);
                        for (const auto& [k, v] : std::map<std::string, double>{{"SP", sp}, {"DP", dp}}) {
                            if (std::find(cfg.stochastic.begin(), cfg.stochastic.end(), k) == cfg.stochastic.end() &&
                                !cfg.frozen.contains(k)) {
                                cfg.frozen[k] = v;
                            }
                        }
                    }
                    s.frozen = cfg.frozen;
                    return s;
                }();
                study.validate(physical_input_names());
            } catch (const InvalidInput& e) {
                diag.error(std::string("experiment: ") + e.what());
            }
            break;
        }
        case ExperimentKind::Sobol:
            if (cfg.n < 100) diag.error("experiment.n must be >= 100 for sobol");
            break;
        case ExperimentKind::Fast: {
            // every shipped evaluator has three inputs (MAP mode, Ishigami, additive + dummy)
            const std::size_t d = 3;
            if (cfg.n < fast_min_samples(d)) {
                diag.error("experiment.n must be >= " + std::to_string(fast_min_samples(d)) + " for fast with " +
                           std::to_string(d) + " inputs");
            }
            break;
        }
        case ExperimentKind::Converge:
            try {
                cfg.schedule.validate();
            } catch (const InvalidInput& e) {
                diag.error(std::string("experiment.schedule: ") + e.what());
            }
            if (cfg.method != "pick_freeze" && cfg.method != "fast" && cfg.method != "both") {
                diag.error("experiment.method must be pick_freeze, fast or both");
            }
            if (!cfg.schedule.sizes.empty() && cfg.schedule.sizes.front() < 100) {
                diag.error("experiment.schedule entries must be >= 100");
            }
            break;
    }
    if ((cfg.kind == ExperimentKind::Sobol || cfg.kind == ExperimentKind::Fast ||
         cfg.kind == ExperimentKind::Converge) &&
        sim && !cfg.map_mode) {
        diag.error("sensitivity analysis needs independent inputs: set inputs.map_mode = true");
    }
    if (cfg.stochastic_kind() && !cfg.seed) {
        diag.error("experiment.seed is mandatory for " + std::string(to_string(cfg.kind)) +
                   " (or pass --seed)");
    }
}

}  // namespace detail

/// Expanded configuration as stored in the manifest; enough to rerun.
inline json resolved_config(const ExperimentConfig& c) {
    json j;
    j["model_path"] = c.model_path.string();
    j["model"] = model_to_json(c.model.params);
    j["solver"] = {{"dt", c.solver.dt},           {"tol", c.solver.tol},
                   {"t_end", c.solver.t_end},     {"period", c.period},
                   {"bdf_order", c.solver.bdf_order}, {"max_newton", c.solver.max_newton},
                   {"waveform", c.waveform_spec}};
    const auto inst = c.instants ? *c.instants : CycleInstants::defaults(c.waveform);
    j["solver"]["instants"] = {{"t_ps", inst.t_ps}, {"t_es", inst.t_es}, {"t_ed", inst.t_ed}};
    json dists = json::object();
    const auto set = c.input_set(c.map_mode ? InputMode::Map : InputMode::SpDp);
    for (const auto& e : set.entries()) dists[e.name] = distribution_to_json(e.dist);
    j["inputs"] = {{"map_mode", c.map_mode},
                   {"spdp_regression", {{"slope", c.regression.slope}, {"intercept", c.regression.intercept}}},
                   {"distributions", dists}};
    static const char* evaluators[] = {"simulator", "ishigami", "additive", "passthrough"};
    json ex = {{"kind", to_string(c.kind)}, {"evaluator", evaluators[static_cast<int>(c.evaluator)]}};
    if (c.seed) ex["seed"] = *c.seed;
    switch (c.kind) {
        case ExperimentKind::Simulate: ex["values"] = c.values; break;
        case ExperimentKind::Propagate:
            ex["population"] = to_string(c.population);
            ex["stochastic"] = c.stochastic;
            ex["frozen"] = c.frozen;
            ex["n"] = c.n;
            if (c.evaluator == EvaluatorKind::Passthrough) ex["passthrough_input"] = c.passthrough_input;
            break;
        case ExperimentKind::Sobol:
        case ExperimentKind::Fast: ex["n"] = c.n; break;
        case ExperimentKind::Converge:
            ex["method"] = c.method;
            ex["schedule"] = c.schedule.sizes;
            ex["threshold"] = c.schedule.threshold;
            ex["stop_early"] = c.stop_early;
            ex["agreement_tol"] = c.agreement_tol;
            break;
    }
    j["experiment"] = ex;
    j["output"] = c.output_dir.string();
    return j;
}

/**
 * Loads an experiment file. Relative paths inside it resolve against the
 * file's own directory. `seed_override` (from the command line) replaces
 * the configured seed. All problems end up in `diag`.
 */
inline ExperimentConfig load_experiment(const std::filesystem::path& path, Diagnostics& diag,
                                        std::optional<std::uint64_t> seed_override = {}) {
    ExperimentConfig cfg;
    cfg.config_path = path;
    const auto doc = detail::parse_json_file(path, "config file", diag);
    if (!doc) return cfg;
    if (!doc->is_object()) {
        diag.error("config file must be a JSON object");
        return cfg;
    }
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    if (!doc->contains("model") || !doc->at("model").is_string()) {
        diag.error("config.model must name the model parameter file");
    } else {
        cfg.model_path = base / doc->at("model").get<std::string>();
        cfg.model = load_model_file(cfg.model_path, diag);
    }
    cfg.output_dir = base / doc->value("output", std::string("results"));

    detail::parse_solver(doc->value("solver", json::object()), cfg, base, diag);
    detail::parse_inputs(doc->value("inputs", json::object()), cfg, diag);
    if (!doc->contains("experiment") || !doc->at("experiment").is_object()) {
        diag.error("config.experiment section missing");
    } else {
        detail::parse_experiment(doc->at("experiment"), cfg, diag);
    }
    if (seed_override) cfg.seed = seed_override;
    detail::validate_experiment(cfg, diag);

    for (const auto& group : cfg.model.uncalibrated) {
        diag.warn("uncalibrated parameter group '" + group + "' (placeholder values)");
    }
    if (diag.ok()) cfg.resolved = resolved_config(cfg);
    return cfg;
}

}  // namespace hemo_uq
