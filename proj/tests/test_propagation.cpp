#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "hemo_uq/evaluator.hpp"
#include "hemo_uq/propagation.hpp"
#include "hemo_uq/statistics.hpp"

using namespace hemo_uq;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

// Fails whenever IOP lies above the given quantile of its default law.
ModelEvaluator failing_above(double u) {
    const double cut = lognormal_from_moments(14.7, 2.8).quantile(u);
    ModelEvaluator ev = passthrough_evaluator("IOP");
    auto inner = ev.fn;
    ev.fn = [inner, cut](std::span<const double> x) {
        if (x[0] > cut) throw NumericalFailure("newton-divergence: synthetic");
        return inner(x);
    };
    return ev;
}

// Modes at least 1% of the highest peak; isolated tail samples leave tiny bumps.
std::size_t major_modes(std::vector<double> density) {
    const double top = *std::max_element(density.begin(), density.end());
    for (double& v : density) {
        if (v < 0.01 * top) v = 0.0;
    }
    return count_local_maxima(density);
}

std::vector<double> normal_sample(std::size_t n, std::uint64_t seed) {
    RandomStream s(seed, 0);
    return sample(Distribution1D::normal(0.0, 1.0), s, n);
}

}  // namespace

TEST_CASE("frozen inputs give identical rows") {
    PropagationStudy s;
    s.frozen = {{"IOP", 15.0}, {"RLTp", 9.5}, {"SP", 120.0}, {"DP", 80.0}};
    s.n = 50;
    s.seed = 1;
    const auto r = propagate(s, passthrough_evaluator("MAP"));
    REQUIRE(r.succeeded() == 50);
    for (std::size_t j = 0; j < r.n; ++j) {
        for (std::size_t q = 0; q < r.output_names.size(); ++q) {
            CHECK(r.outputs[j * r.output_names.size() + q] == Approx(280.0 / 3.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("pass-through IOP reproduces the input law") {
    const auto study = PropagationStudy::preset(Population::Baseline, 10000, 2024);
    const auto r = propagate(study, passthrough_evaluator("IOP"));
    const auto s = summarize(r);
    const double half = 3.0 * 2.8 / std::sqrt(10000.0);
    for (const auto& q : s.qoi) {
        CHECK(std::abs(q.mean - 14.7) < half);
        CHECK(q.sd == Approx(2.8).margin(0.1));
    }
    CHECK(r.evaluations == 10000);
}

TEST_CASE("results do not depend on the worker count") {
    const auto study = PropagationStudy::preset(Population::High, 2000, 99);
    const auto a = propagate(study, passthrough_evaluator("IOP", 1.0), 1);
    const auto b = propagate(study, passthrough_evaluator("IOP", 1.0), 4);
    CHECK(a.inputs == b.inputs);
    CHECK(a.outputs == b.outputs);
}

TEST_CASE("samples are nested across ensemble sizes") {
    const auto small = propagate(PropagationStudy::preset(Population::Baseline, 100, 5),
                                 passthrough_evaluator("IOP"));
    const auto large = propagate(PropagationStudy::preset(Population::Baseline, 300, 5),
                                 passthrough_evaluator("IOP"));
    for (std::size_t k = 0; k < small.inputs.size(); ++k) CHECK(small.inputs[k] == large.inputs[k]);
}

TEST_CASE("study coverage is validated") {
    auto s = PropagationStudy::preset(Population::Baseline, 10, 1);
    s.frozen.erase("DP");
    CHECK_THROWS_WITH(propagate(s, passthrough_evaluator("IOP")), ContainsSubstring("'DP'"));
    s = PropagationStudy::preset(Population::Baseline, 10, 1);
    s.frozen["IOP"] = 14.0;
    CHECK_THROWS_WITH(propagate(s, passthrough_evaluator("IOP")), ContainsSubstring("more than once"));
    s = PropagationStudy::preset(Population::Baseline, 10, 1);
    s.frozen["MAP"] = 93.0;
    CHECK_THROWS_WITH(propagate(s, passthrough_evaluator("IOP")), ContainsSubstring("not a model input"));
}

TEST_CASE("isolated failures are excluded and recorded") {
    const auto study = PropagationStudy::preset(Population::Baseline, 4000, 8);
    const auto r = propagate(study, failing_above(0.997));
    CHECK(!r.failures.empty());
    CHECK(r.failures.size() < 40);
    CHECK(r.succeeded() + r.failures.size() == 4000);
    for (const auto& f : r.failures) {
        CHECK(!r.ok[f.index]);
        CHECK(std::isnan(r.outputs[f.index * 9]));
        CHECK_THAT(f.message, ContainsSubstring("newton-divergence"));
        CHECK(f.inputs.size() == 4);
    }
    CHECK(r.column(0).size() == r.succeeded());
}

TEST_CASE("more than 1% failures rejects the study") {
    const auto study = PropagationStudy::preset(Population::Baseline, 4000, 8);
    CHECK_THROWS_WITH(propagate(study, failing_above(0.97)), ContainsSubstring("model fragility"));
}

TEST_CASE("simulator propagation is thread-count independent") {
    SimulatorSetup setup;
    setup.model = std::make_shared<const NetworkModel>(build_reduced_omvs(CircuitParameters{}));
    const auto ev = simulator_evaluator(setup);
    const auto study = PropagationStudy::preset(Population::Baseline, 6, 3);
    const auto a = propagate(study, ev, 1);
    const auto b = propagate(study, ev, 3);
    CHECK(a.outputs == b.outputs);
    CHECK(a.failures.empty());
}

TEST_CASE("summary of a constant column") {
    const std::vector<double> x(100, 4.2);
    const auto s = summarize_column("c", x);
    CHECK(s.mean == Approx(4.2).epsilon(1e-15));
    CHECK(s.sd == Approx(0.0).margin(1e-14));
    CHECK(s.kde.degenerate);
    REQUIRE(s.histogram.counts.size() == 1);
    CHECK(s.histogram.counts[0] == 100);
    CHECK(s.box.iqr == 0.0);
    CHECK(s.box.outliers.empty());
}

TEST_CASE("standard normal quartiles, histogram and KDE") {
    const auto x = normal_sample(20000, 17);
    const auto s = summarize_column("z", x);
    CHECK(s.box.median == Approx(0.0).margin(0.02));
    CHECK(s.box.q1 == Approx(-0.67449).margin(0.02));
    CHECK(s.box.q3 == Approx(0.67449).margin(0.02));
    std::size_t total = 0;
    for (auto c : s.histogram.counts) total += c;
    CHECK(total == x.size());
    CHECK(s.histogram.counts.size() == 55);  // ceil(2 * 20000^(1/3))
    CHECK(trapezoid(s.kde.grid, s.kde.density) == Approx(1.0).margin(1e-3));
    CHECK(major_modes(s.kde.density) == 1);
    // Silverman bandwidth 0.9 * min(sd, IQR/1.34) * n^(-1/5)
    CHECK(s.kde.bandwidth == Approx(0.9 * std::pow(20000.0, -0.2)).epsilon(0.03));
}

TEST_CASE("KDE resolves a well separated bimodal sample") {
    auto x = normal_sample(5000, 2);
    const auto y = normal_sample(5000, 3);
    for (double v : y) x.push_back(v + 8.0);
    const auto k = kernel_density(x);
    CHECK(major_modes(k.density) == 2);
    CHECK(trapezoid(k.grid, k.density) == Approx(1.0).margin(1e-3));
}

TEST_CASE("boxplot flags points beyond the Tukey fences") {
    std::vector<double> x;
    for (int i = 1; i <= 99; ++i) x.push_back(i);
    x.push_back(1000.0);
    x.push_back(-500.0);
    const auto b = boxplot(x);
    REQUIRE(b.outliers.size() == 2);
    CHECK(b.outliers.front() == -500.0);
    CHECK(b.outliers.back() == 1000.0);
    CHECK(b.whisker_low == 1.0);
    CHECK(b.whisker_high == 99.0);
    // type-7 quartiles of 101 points
    CHECK(b.median == 50.0);
    CHECK(b.q1 == 25.0);
    CHECK(b.q3 == 75.0);
}

TEST_CASE("population means are ordered low < baseline < high") {
    std::vector<std::pair<std::string, EnsembleSummary>> studies;
    for (auto p : {Population::Baseline, Population::Low, Population::High}) {
        const auto r = propagate(PropagationStudy::preset(p, 500, 1), passthrough_evaluator("MAP"));
        studies.emplace_back(to_string(p), summarize(r));
    }
    const auto c = compare_populations(studies);
    for (const auto& q : c.qoi) {
        CHECK(q.ordering == "low < baseline < high");
        CHECK(!q.tied);
        CHECK(q.offsets[1] == Approx(80.0 - 280.0 / 3.0).epsilon(1e-12));
    }
    for (bool same : c.constant_offset) CHECK(same);
}

TEST_CASE("identical studies are reported as tied") {
    const auto r = propagate(PropagationStudy::preset(Population::Baseline, 500, 1),
                             passthrough_evaluator("IOP"));
    const auto s = summarize(r);
    const auto c = compare_populations({{"a", s}, {"b", s}});
    for (const auto& q : c.qoi) {
        CHECK(q.tied);
        CHECK(q.ordering == "a ~ b");
    }
}

TEST_CASE("a constant shift is recognised as a constant offset") {
    const auto study = PropagationStudy::preset(Population::Baseline, 500, 4);
    const auto a = summarize(propagate(study, passthrough_evaluator("IOP")));
    const auto b = summarize(propagate(study, passthrough_evaluator("IOP", 10.0)));
    const auto c = compare_populations({{"base", a}, {"shifted", b}});
    CHECK(c.constant_offset[1]);
    for (const auto& q : c.qoi) CHECK(q.offsets[1] == Approx(10.0).epsilon(1e-12));
}

TEST_CASE("comparison rejects mismatched QoI sets") {
    const auto r = propagate(PropagationStudy::preset(Population::Baseline, 50, 1),
                             passthrough_evaluator("IOP"));
    const auto a = summarize(r);
    auto b = a;
    b.qoi.pop_back();
    CHECK_THROWS_WITH(compare_populations({{"a", a}, {"b", b}}), ContainsSubstring("different QoI set"));
}

TEST_CASE("population names round-trip") {
    for (auto p : {Population::Baseline, Population::Low, Population::High, Population::Custom}) {
        CHECK(population_from_string(to_string(p)) == p);
    }
    CHECK_THROWS_AS(population_from_string("elderly"), InvalidInput);
    CHECK(population_pressures(Population::Low) == std::pair{100.0, 70.0});
    CHECK(population_pressures(Population::High) == std::pair{140.0, 90.0});
}
