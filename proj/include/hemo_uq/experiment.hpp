#pragma once

/**
 * @file experiment.hpp
 * @brief Orchestration behind the command-line tool: one function per
 * command, each writing its results and manifest into the output directory.
 */

#include <atomic>
#include <filesystem>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hemo_uq/config.hpp"
#include "hemo_uq/errors.hpp"
#include "hemo_uq/evaluator.hpp"
#include "hemo_uq/io.hpp"
#include "hemo_uq/propagation.hpp"
#include "hemo_uq/sensitivity.hpp"
#include "hemo_uq/solver.hpp"

namespace hemo_uq {

struct RunOptions {
    unsigned workers = 1;
    std::ostream* log = nullptr;  ///< progress messages; silent when null
};

namespace detail {

inline void say(const RunOptions& o, const std::string& line) {
    if (o.log) *o.log << line << '\n';
}

inline json qoi_json(const QoIVector& q) {
    json j = json::object();
    for (std::size_t i = 0; i < kQoiCount; ++i) j[qoi_names()[i]] = q[i];
    return j;
}

/// Evaluator and its independent inputs for a sensitivity experiment.
struct SensitivityProblem {
    ModelEvaluator evaluator;
    std::vector<NamedDistribution> inputs;
};

inline SensitivityProblem sensitivity_problem(const ExperimentConfig& cfg) {
    switch (cfg.evaluator) {
        case EvaluatorKind::Simulator: {
            const auto set = cfg.input_set(InputMode::Map);
            return {map_mode_evaluator(simulator_evaluator(cfg.simulator_setup()), cfg.regression),
                    set.entries()};
        }
        case EvaluatorKind::Ishigami: return {ishigami_evaluator(), ishigami_inputs()};
        case EvaluatorKind::Additive: return {additive_evaluator(1), standard_normal_inputs(3)};
        case EvaluatorKind::Passthrough: break;
    }
    throw InvalidInput("sensitivity experiments need the simulator, ishigami or additive evaluator");
}

inline void append_indices(CsvWriter& csv, const SensitivityIndices& s) {
    for (std::size_t q = 0; q < s.output_names.size(); ++q) {
        for (std::size_t i = 0; i < s.input_names.size(); ++i) {
            csv.row({s.output_names[q], s.input_names[i], to_string(s.estimator), std::to_string(s.n),
                     format_double(s.first[q][i]), format_double(s.total[q][i]),
                     format_double(s.first_clipped[q][i]), format_double(s.total_clipped[q][i])});
        }
    }
}

inline CsvWriter indices_writer() {
    return CsvWriter({"qoi", "input", "estimator", "n", "first_order", "total_order", "first_clipped",
                      "total_clipped"});
}

inline json indices_json(const SensitivityIndices& s) {
    json j;
    j["estimator"] = to_string(s.estimator);
    j["n"] = s.n;
    j["evaluations"] = s.evaluations;
    j["inputs"] = s.input_names;
    j["outputs"] = s.output_names;
    j["first_order"] = s.first;
    j["total_order"] = s.total;
    return j;
}

}  // namespace detail

/// simulate: one deterministic run -> trajectory.csv + qoi.json.
inline void run_simulate(const ExperimentConfig& cfg, RunManifest& manifest, const RunOptions& opt) {
    const auto setup = cfg.simulator_setup();
    const double sp = cfg.values.at("SP");
    const double dp = cfg.values.at("DP");
    const Waveform source = setup.waveform.with_anchors(sp, dp);
    const Externals ext{cfg.values.at("IOP"), cfg.values.at("RLTp")};
    const SimulationResult r = integrate(*setup.model, source, ext, setup.solver);
    const auto periodic = check_periodicity(r, source.period(), setup.periodicity_eps);
    if (!periodic.periodic) {
        throw NumericalFailure("periodic regime not reached (last-cycle deviation " +
                               std::to_string(periodic.max_deviation) + " mmHg)");
    }
    const QoIVector q = extract_qoi(r, setup.resolved_instants());

    std::vector<std::string> header{"t"};
    for (const auto& n : r.node_names) header.push_back("P_" + n);
    for (const auto& o : r.observable_names) header.push_back("Q_" + o);
    CsvWriter csv(header);
    std::vector<double> row(header.size());
    for (std::size_t s = 0; s < r.samples(); ++s) {
        std::size_t c = 0;
        row[c++] = r.time[s];
        for (std::size_t k = 0; k < r.node_columns(); ++k) row[c++] = r.pressure(s, k);
        for (std::size_t o = 0; o < r.observable_names.size(); ++o) row[c++] = r.observable_flow(s, o);
        csv.numeric_row(row);
    }
    csv.save(cfg.output_dir / "trajectory.csv");
    write_file_atomic(cfg.output_dir / "qoi.json", detail::qoi_json(q).dump(2) + "\n");
    manifest.stage("simulate", 1, 0,
                   {{"samples", r.samples()},
                    {"newton_iterations", r.newton_iterations},
                    {"periodicity_deviation_mmHg", periodic.max_deviation}});
    detail::say(opt, "simulate: " + std::to_string(r.samples()) + " samples, QoIs written to " +
                         (cfg.output_dir / "qoi.json").string());
}

/// The study described by a propagate config.
inline PropagationStudy propagation_study(const ExperimentConfig& cfg) {
    PropagationStudy s;
    s.name = to_string(cfg.population);
    s.population = cfg.population;
    s.n = cfg.n;
    s.seed = cfg.seed.value_or(0);
    const auto set = cfg.input_set(InputMode::SpDp);
    for (const auto& name : cfg.stochastic) s.stochastic.push_back({name, set.at(name)});
    s.frozen = cfg.frozen;
    return s;
}

/// Raw ensemble CSV: sample_id, inputs..., outputs... (successful rows only).
inline std::string raw_csv(const PropagationResult& r) {
    std::vector<std::string> header{"sample_id"};
    header.insert(header.end(), r.input_names.begin(), r.input_names.end());
    header.insert(header.end(), r.output_names.begin(), r.output_names.end());
    CsvWriter csv(header);
    const std::size_t d = r.input_names.size();
    const std::size_t m = r.output_names.size();
    std::vector<std::string> row(header.size());
    for (std::size_t j = 0; j < r.n; ++j) {
        if (!r.ok[j]) continue;
        row[0] = std::to_string(j);
        for (std::size_t i = 0; i < d; ++i) row[1 + i] = format_double(r.inputs[j * d + i]);
        for (std::size_t q = 0; q < m; ++q) row[1 + d + q] = format_double(r.outputs[j * m + q]);
        csv.row(row);
    }
    return csv.str();
}

/// Summary in the layout of a results table: one object per QoI with mean and sd.
inline json summary_json(const std::string& population, const PropagationResult& r, const EnsembleSummary& s,
                         std::uint64_t seed) {
    json j;
    j["population"] = population;
    j["n"] = r.n;
    j["succeeded"] = r.succeeded();
    j["failed"] = r.failures.size();
    j["seed"] = seed;
    j["units"] = "microlitre/min";
    json q = json::object();
    for (const auto& e : s.qoi) {
        q[e.name] = {{"mean", e.mean}, {"sd", e.sd}, {"n", e.n}};
    }
    j["qoi"] = q;
    return j;
}

/// Means/sds/sample counts back from summary.json, for compare_populations.
inline EnsembleSummary summary_from_json(const json& j) {
    EnsembleSummary s;
    for (const auto& [name, v] : j.at("qoi").items()) {
        QoISummary e;
        e.name = name;
        e.mean = v.at("mean").get<double>();
        e.sd = v.at("sd").get<double>();
        e.n = v.at("n").get<std::size_t>();
        s.qoi.push_back(e);
    }
    // fixed QoI order regardless of JSON key order
    std::vector<QoISummary> ordered;
    for (const auto& name : qoi_names()) {
        for (const auto& e : s.qoi) {
            if (e.name == name) ordered.push_back(e);
        }
    }
    if (ordered.size() == s.qoi.size()) s.qoi = std::move(ordered);
    return s;
}

inline void write_plot_data(const std::filesystem::path& dir, const EnsembleSummary& s) {
    json boxes = json::object();
    for (const auto& e : s.qoi) {
        CsvWriter h({"bin_left", "bin_right", "count"});
        for (std::size_t b = 0; b < e.histogram.counts.size(); ++b) {
            h.row({format_double(e.histogram.edges[b]), format_double(e.histogram.edges[b + 1]),
                   std::to_string(e.histogram.counts[b])});
        }
        h.save(dir / (e.name + "_histogram.csv"));
        CsvWriter k({"x", "density"});
        for (std::size_t g = 0; g < e.kde.grid.size(); ++g) k.numeric_row({e.kde.grid[g], e.kde.density[g]});
        k.save(dir / (e.name + "_kde.csv"));
        boxes[e.name] = {{"q1", e.box.q1},
                         {"median", e.box.median},
                         {"q3", e.box.q3},
                         {"whisker_low", e.box.whisker_low},
                         {"whisker_high", e.box.whisker_high},
                         {"outliers", e.box.outliers},
                         {"kde_bandwidth", e.kde.bandwidth},
                         {"kde_degenerate", e.kde.degenerate}};
    }
    write_file_atomic(dir / "boxplot.json", boxes.dump(2) + "\n");
}

/// propagate: Monte Carlo ensemble -> raw.csv, failures.csv, summary.json, plots/.
inline void run_propagate(const ExperimentConfig& cfg, RunManifest& manifest, const RunOptions& opt) {
    const PropagationStudy study = propagation_study(cfg);
    ModelEvaluator base = cfg.evaluator == EvaluatorKind::Passthrough
                              ? passthrough_evaluator(cfg.passthrough_input)
                              : simulator_evaluator(cfg.simulator_setup());
    auto counter = std::make_shared<std::atomic<std::size_t>>(0);
    const ModelEvaluator f = counting_evaluator(base, counter);
    detail::say(opt, "propagate: budget " + std::to_string(study.n) + " model evaluations (" +
                         std::to_string(opt.workers) + " workers)");

    PropagationResult r;
    try {
        r = propagate(study, f, opt.workers);
    } catch (const NumericalFailure&) {
        manifest.stage("propagate", counter->load(), 0, {{"expected_evaluations", study.n}});
        throw;
    }
    write_file_atomic(cfg.output_dir / "raw.csv", raw_csv(r));
    CsvWriter fails([&] {
        std::vector<std::string> h{"sample_id"};
        h.insert(h.end(), r.input_names.begin(), r.input_names.end());
        h.push_back("message");
        return h;
    }());
    for (const auto& fs : r.failures) {
        std::vector<std::string> row{std::to_string(fs.index)};
        for (double v : fs.inputs) row.push_back(format_double(v));
        std::string msg = fs.message;
        std::replace(msg.begin(), msg.end(), ',', ';');
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        row.push_back(msg);
        fails.row(row);
    }
    fails.save(cfg.output_dir / "failures.csv");

    const EnsembleSummary s = summarize(r);
    write_file_atomic(cfg.output_dir / "summary.json",
                      summary_json(study.name, r, s, study.seed).dump(2) + "\n");
    write_plot_data(cfg.output_dir / "plots", s);
    manifest.stage("propagate", counter->load(), r.failures.size(), {{"expected_evaluations", study.n}});
    detail::say(opt, "propagate: " + std::to_string(r.succeeded()) + " of " + std::to_string(r.n) +
                         " samples succeeded");
}

/// sobol / fast: one estimator at one n -> indices.csv + indices.json.
inline void run_sensitivity(const ExperimentConfig& cfg, RunManifest& manifest, const RunOptions& opt) {
    const auto problem = detail::sensitivity_problem(cfg);
    const Estimator method = cfg.kind == ExperimentKind::Fast ? Estimator::Fast : Estimator::PickFreeze;
    const std::size_t d = problem.inputs.size();
    const std::size_t budget = method == Estimator::PickFreeze ? (d + 2) * cfg.n : d * cfg.n;
    detail::say(opt, std::string(to_string(method)) + ": budget " +
                         (method == Estimator::PickFreeze ? "(d+2)n" : "d n") + " = " + std::to_string(budget) +
                         " model evaluations (d = " + std::to_string(d) + ", n = " + std::to_string(cfg.n) + ")");
    auto counter = std::make_shared<std::atomic<std::size_t>>(0);
    const ModelEvaluator f = counting_evaluator(problem.evaluator, counter);
    const SensitivityIndices s =
        estimate_indices(method, f, problem.inputs, cfg.n, cfg.seed.value_or(0), opt.workers);
    auto csv = detail::indices_writer();
    detail::append_indices(csv, s);
    csv.save(cfg.output_dir / "indices.csv");
    write_file_atomic(cfg.output_dir / "indices.json", detail::indices_json(s).dump(2) + "\n");
    manifest.stage(to_string(method), counter->load(), 0, {{"expected_evaluations", budget}, {"n", cfg.n}});
}

/// converge: schedule runs -> indices.csv (every n), convergence.csv, report.json.
inline void run_converge(const ExperimentConfig& cfg, RunManifest& manifest, const RunOptions& opt) {
    const auto problem = detail::sensitivity_problem(cfg);
    const std::size_t d = problem.inputs.size();
    std::vector<Estimator> methods;
    if (cfg.method == "pick_freeze" || cfg.method == "both") methods.push_back(Estimator::PickFreeze);
    if (cfg.method == "fast" || cfg.method == "both") methods.push_back(Estimator::Fast);

    std::size_t budget = 0;
    for (const auto m : methods) {
        for (const auto n : cfg.schedule.sizes) budget += m == Estimator::PickFreeze ? (d + 2) * n : d * n;
    }
    detail::say(opt, "converge: budget up to " + std::to_string(budget) + " model evaluations");

    auto indices = detail::indices_writer();
    std::vector<std::string> header{"estimator", "n", "n_star", "first_error", "total_error", "below_threshold"};
    for (const auto& in : problem.inputs) {
        header.push_back("first_error_" + in.name);
        header.push_back("total_error_" + in.name);
    }
    CsvWriter conv(header);
    json report = json::object();
    std::vector<SensitivityReport> reports;

    for (const auto m : methods) {
        auto counter = std::make_shared<std::atomic<std::size_t>>(0);
        const ModelEvaluator f = counting_evaluator(problem.evaluator, counter);
        SensitivityReport rep = converge(m, f, problem.inputs, cfg.schedule, cfg.seed.value_or(0),
                                         cfg.stop_early, opt.workers);
        for (const auto& run : rep.runs) detail::append_indices(indices, run);
        for (const auto& st : rep.history) {
            std::vector<std::string> row{to_string(m), std::to_string(st.n), std::to_string(st.n_prev),
                                         format_double(st.max_first), format_double(st.max_total),
                                         st.below_threshold ? "true" : "false"};
            for (std::size_t i = 0; i < d; ++i) {
                row.push_back(format_double(st.first_error[i]));
                row.push_back(format_double(st.total_error[i]));
            }
            conv.row(row);
        }
        json r = {{"status", rep.status()},
                  {"converged", rep.converged},
                  {"evaluations", rep.evaluations},
                  {"threshold", cfg.schedule.threshold},
                  {"final", detail::indices_json(rep.final_indices())}};
        r["converged_at"] = rep.converged_at ? json(*rep.converged_at) : json(nullptr);
        report[to_string(m)] = r;
        manifest.stage(std::string("converge_") + to_string(m), counter->load(), 0,
                       {{"status", rep.status()}, {"runs", rep.runs.size()}});
        detail::say(opt, std::string(to_string(m)) + ": " + rep.status() +
                             (rep.converged_at ? " (threshold first met at n = " +
                                                     std::to_string(*rep.converged_at) + ")"
                                               : ""));
        reports.push_back(std::move(rep));
    }
    if (reports.size() == 2) {
        const auto agreement =
            cross_validate(reports[0].final_indices(), reports[1].final_indices(), cfg.agreement_tol);
        json flagged = json::array();
        for (const auto& e : agreement.entries) {
            if (e.flagged) flagged.push_back({{"qoi", e.output}, {"input", e.input},
                                              {"first_diff", e.first_diff}, {"total_diff", e.total_diff}});
        }
        report["cross_validation"] = {{"tolerance", agreement.tolerance},
                                      {"max_difference", agreement.max_diff},
                                      {"flagged", flagged},
                                      {"summary", agreement.summary}};
        detail::say(opt, "cross-validation: " + agreement.summary);
    }
    indices.save(cfg.output_dir / "indices.csv");
    conv.save(cfg.output_dir / "convergence.csv");
    write_file_atomic(cfg.output_dir / "report.json", report.dump(2) + "\n");
}

/// Runs the configured experiment with an append-only manifest around it.
/// Returns the process exit code; errors are reported on `err`.
inline int run_experiment(const ExperimentConfig& cfg, const std::string& command, const RunOptions& opt,
                          std::ostream& err) {
    RunManifest manifest(cfg.output_dir / "manifest.jsonl", command, cfg.seed.value_or(0), cfg.resolved);
    int code = 0;
    std::string message;
    try {
        manifest.start(opt.workers);
        switch (cfg.kind) {
            case ExperimentKind::Simulate: run_simulate(cfg, manifest, opt); break;
            case ExperimentKind::Propagate: run_propagate(cfg, manifest, opt); break;
            case ExperimentKind::Sobol:
            case ExperimentKind::Fast: run_sensitivity(cfg, manifest, opt); break;
            case ExperimentKind::Converge: run_converge(cfg, manifest, opt); break;
        }
    } catch (const NumericalFailure& e) {
        code = 1;
        message = std::string("numerical failure in stage '") + to_string(cfg.kind) + "': " + e.what();
    } catch (const InvalidInput& e) {
        code = 2;
        message = std::string("error in stage '") + to_string(cfg.kind) + "': " + e.what();
    }
    if (code != 0) err << "hemo-uq: " << message << '\n';
    try {
        manifest.finish(code, message);
    } catch (const Error& e) {
        err << "hemo-uq: " << e.what() << '\n';
        if (code == 0) code = 2;
    }
    return code;
}

/// Dry run used by `validate`: two cycles at representative inputs.
inline void dry_run(const ExperimentConfig& cfg) {
    auto setup = cfg.simulator_setup();
    setup.solver.t_end = 2.0 * cfg.period;
    double iop = 14.7, rltp = 9.5, sp = 120.0, dp = 80.0;
    if (cfg.kind == ExperimentKind::Simulate) {
        iop = cfg.values.at("IOP");
        rltp = cfg.values.at("RLTp");
        sp = cfg.values.at("SP");
        dp = cfg.values.at("DP");
    }
    const Waveform source = setup.waveform.with_anchors(sp, dp);
    const auto r = integrate(*setup.model, source, Externals{iop, rltp}, setup.solver);
    (void)extract_qoi(r, setup.resolved_instants());
}

/**
 * validate: schema, units and calibration flags, then a dry-run integration.
 * Prints every violation; returns 0 when valid, 2 otherwise.
 */
inline int run_validate(const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                        std::ostream& out) {
    Diagnostics diag;
    const ExperimentConfig cfg = load_experiment(config, diag, seed);
    if (diag.ok()) {
        try {
            dry_run(cfg);
        } catch (const Error& e) {
            diag.error(std::string("dry run failed: ") + e.what());
        }
    }
    for (const auto& w : diag.warnings) out << "warning: " << w << '\n';
    if (!diag.ok()) {
        for (const auto& e : diag.errors) out << "violation: " << e << '\n';
        out << "invalid, " << diag.errors.size() << " violation" << (diag.errors.size() == 1 ? "" : "s")
            << '\n';
        return 2;
    }
    out << "valid, " << diag.warnings.size() << " uncalibrated-parameter warning"
        << (diag.warnings.size() == 1 ? "" : "s") << '\n';
    return 0;
}

}  // namespace hemo_uq
