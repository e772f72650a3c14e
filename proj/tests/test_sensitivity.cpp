#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <vector>

#include "hemo_uq/evaluator.hpp"
#include "hemo_uq/sensitivity.hpp"
#include "oracles.hpp"

using namespace hemo_uq;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

const SensitivityIndices& ishigami_run(Estimator e) {
    static const auto pf = pick_freeze_indices(ishigami_evaluator(), ishigami_inputs(), 10000, 2024);
    static const auto fast = fast_indices(ishigami_evaluator(), ishigami_inputs(), 10000, 2024);
    return e == Estimator::PickFreeze ? pf : fast;
}

void check_ishigami(const SensitivityIndices& s, double tol) {
    const auto ref = oracle::ishigami_indices();
    const double first[] = {ref.s1, ref.s2, ref.s3};
    const double total[] = {ref.st1, ref.st2, ref.st3};
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(s.first[0][i] == Approx(first[i]).margin(tol));
        CHECK(s.total[0][i] == Approx(total[i]).margin(tol));
    }
}

}  // namespace

TEST_CASE("Ishigami reference decomposition") {
    const auto ref = oracle::ishigami_indices();
    CHECK(ref.s1 == Approx(0.3139).margin(1e-4));
    CHECK(ref.s2 == Approx(0.4424).margin(1e-4));
    CHECK(ref.st1 == Approx(0.5576).margin(1e-4));
    CHECK(ref.st3 == Approx(0.2437).margin(1e-4));
    // V1 + V2 + V13 equals the closed-form total variance
    const double pi4 = std::pow(std::numbers::pi, 4);
    const double v = 0.5 * std::pow(1.0 + 0.1 * pi4 / 5.0, 2) / ref.s1;
    CHECK(v == Approx(oracle::ishigami_variance()).epsilon(1e-12));
    CHECK(v == Approx(13.8446).margin(1e-4));
}

TEST_CASE("pick-freeze recovers the Ishigami indices within 0.03") {
    const auto& s = ishigami_run(Estimator::PickFreeze);
    check_ishigami(s, 0.03);
    CHECK(s.variance[0] == Approx(oracle::ishigami_variance()).epsilon(0.03));
}

TEST_CASE("FAST recovers the Ishigami indices within 0.05") {
    check_ishigami(ishigami_run(Estimator::Fast), 0.05);
}

TEST_CASE("X1-X3 interaction shows as a total/first gap") {
    for (auto e : {Estimator::PickFreeze, Estimator::Fast}) {
        const auto& s = ishigami_run(e);
        CHECK(s.total[0][2] - s.first[0][2] > 0.18);
        CHECK(s.total[0][1] - s.first[0][1] < 0.05);
    }
}

TEST_CASE("additive model splits variance evenly and ignores the dummy") {
    const auto f = additive_evaluator(1);
    const auto in = standard_normal_inputs(3);
    for (auto e : {Estimator::PickFreeze, Estimator::Fast}) {
        const auto s = estimate_indices(e, f, in, 10000, 7);
        for (std::size_t i = 0; i < 2; ++i) {
            CHECK(s.first[0][i] == Approx(0.5).margin(0.03));
            CHECK(s.total[0][i] == Approx(0.5).margin(0.03));
        }
        CHECK(std::abs(s.total[0][2]) < 0.02);
        CHECK(std::abs(s.first[0][2]) < 0.02);
    }
}

TEST_CASE("a model of X1 alone puts everything on X1") {
    const auto f = linear_evaluator({"X1", "X2", "X3"}, {2.0, 0.0, 0.0}, 5.0);
    const auto in = standard_normal_inputs(3);
    for (auto e : {Estimator::PickFreeze, Estimator::Fast}) {
        const auto s = estimate_indices(e, f, in, 10000, 3);
        // pick-freeze first order has a standard error near sqrt(3 / n) here
        CHECK(s.first[0][0] == Approx(1.0).margin(3.0 * std::sqrt(3.0 / 10000.0)));
        CHECK(s.total[0][0] == Approx(1.0).margin(0.03));
        CHECK(std::abs(s.total[0][1]) < 0.02);
        CHECK(std::abs(s.total[0][2]) < 0.02);
    }
}

TEST_CASE("constant output is reported as degenerate") {
    const auto f = linear_evaluator({"X1", "X2", "X3"}, {0.0, 0.0, 0.0}, 1.0);
    const auto in = standard_normal_inputs(3);
    CHECK_THROWS_WITH(pick_freeze_indices(f, in, 500, 1), ContainsSubstring("degenerate output"));
    CHECK_THROWS_WITH(fast_indices(f, in, 500, 1), ContainsSubstring("degenerate output"));
}

TEST_CASE("FAST needs enough samples per input") {
    CHECK(fast_min_samples(3) == 129);
    CHECK(fast_min_samples(2) == 65);
    CHECK(fast_min_samples(5) == 257);
    CHECK_THROWS_WITH(fast_indices(ishigami_evaluator(), ishigami_inputs(), 100, 1),
                      ContainsSubstring("FAST frequency assignment failed") &&
                          ContainsSubstring("n = 129"));
    CHECK_NOTHROW(fast_indices(ishigami_evaluator(), ishigami_inputs(), 129, 1));
    CHECK_THROWS_AS(pick_freeze_indices(ishigami_evaluator(), ishigami_inputs(), 50, 1), InvalidInput);
}

TEST_CASE("FAST frequencies stay below the total-index cut-off") {
    for (std::size_t n : {129u, 1000u, 1001u, 5000u, 10000u}) {
        for (std::size_t d : {2u, 3u, 4u}) {
            if (n < fast_min_samples(d)) continue;
            const std::size_t w = fast_driver_frequency(n);
            const auto f = fast_complement_frequencies(n, d);
            REQUIRE(f.size() == d - 1);
            const std::size_t m = w / (2 * kFastHarmonics);
            for (std::size_t k = 0; k < f.size(); ++k) {
                CHECK(f[k] >= 1);
                CHECK(f[k] <= m);
                if (k > 0) CHECK(f[k] > f[k - 1]);
            }
        }
    }
    CHECK(fast_complement_frequencies(10000, 3) == std::vector<std::size_t>{9, 78});
}

TEST_CASE("model evaluation budget") {
    auto counter = std::make_shared<std::atomic<std::size_t>>(0);
    const auto f = counting_evaluator(ishigami_evaluator(), counter);
    const auto pf = pick_freeze_indices(f, ishigami_inputs(), 1000, 1);
    CHECK(counter->load() == 5000);
    CHECK(pf.evaluations == 5000);
    counter->store(0);
    const auto fa = fast_indices(f, ishigami_inputs(), 1000, 1);
    CHECK(counter->load() == 3000);
    CHECK(fa.evaluations == 3000);
}

TEST_CASE("clipped indices respect 0 <= S <= S_tot <= 1") {
    for (auto e : {Estimator::PickFreeze, Estimator::Fast}) {
        const auto s = estimate_indices(e, ishigami_evaluator(), ishigami_inputs(), 500, 9);
        for (std::size_t i = 0; i < 3; ++i) {
            CHECK(s.first_clipped[0][i] >= 0.0);
            CHECK(s.first_clipped[0][i] <= s.total_clipped[0][i]);
            CHECK(s.total_clipped[0][i] <= 1.0);
        }
    }
}

TEST_CASE("indices are reproducible across runs and worker counts") {
    for (auto e : {Estimator::PickFreeze, Estimator::Fast}) {
        const auto a = estimate_indices(e, ishigami_evaluator(), ishigami_inputs(), 1000, 5, 1);
        const auto b = estimate_indices(e, ishigami_evaluator(), ishigami_inputs(), 1000, 5, 4);
        CHECK(a.first == b.first);
        CHECK(a.total == b.total);
        const auto c = estimate_indices(e, ishigami_evaluator(), ishigami_inputs(), 1000, 6, 1);
        CHECK(a.first != c.first);
    }
}

TEST_CASE("additive model converges at the second schedule entry") {
    const auto rep = converge(Estimator::PickFreeze, additive_evaluator(1), standard_normal_inputs(3),
                              ConvergenceSchedule{}, 11, true);
    REQUIRE(rep.converged_at.has_value());
    CHECK(*rep.converged_at == 2000);
    CHECK(rep.runs.size() == 2);
    CHECK(rep.converged);
    CHECK(rep.status() == "converged");
    CHECK(rep.evaluations == 5 * 1000 + 5 * 2000);
}

TEST_CASE("a single schedule entry gives no convergence evidence") {
    ConvergenceSchedule one;
    one.sizes = {1000};
    const auto rep = converge(Estimator::Fast, ishigami_evaluator(), ishigami_inputs(), one, 1);
    CHECK(!rep.has_evidence());
    CHECK(!rep.converged);
    CHECK(rep.status() == "no convergence evidence");
}

TEST_CASE("a tight threshold is reported as not converged") {
    ConvergenceSchedule s;
    s.sizes = {500, 1000};
    s.threshold = 1e-6;
    const auto rep = converge(Estimator::PickFreeze, ishigami_evaluator(), ishigami_inputs(), s, 1);
    CHECK(rep.status() == "not converged");
    CHECK(!rep.converged_at.has_value());
}

TEST_CASE("Ishigami final pair changes by less than 0.04 for both estimators") {
    for (auto e : {Estimator::PickFreeze, Estimator::Fast}) {
        const auto rep = converge(e, ishigami_evaluator(), ishigami_inputs(), ConvergenceSchedule{},
                                  2024, false);
        REQUIRE(rep.history.size() == 4);
        CHECK(rep.history.back().max_first < 0.04);
        CHECK(rep.history.back().max_total < 0.04);
        CHECK(rep.converged);
    }
}

TEST_CASE("schedules are validated") {
    ConvergenceSchedule s;
    s.sizes = {2000, 1000};
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    s.sizes = {};
    CHECK_THROWS_AS(s.validate(), InvalidInput);
}

TEST_CASE("cross-validation of the two estimators") {
    const auto& pf = ishigami_run(Estimator::PickFreeze);
    const auto& fa = ishigami_run(Estimator::Fast);
    const auto self = cross_validate(pf, pf, 0.08);
    CHECK(self.max_diff == 0.0);
    CHECK(self.flagged == 0);

    const auto both = cross_validate(pf, fa, 0.08);
    CHECK(both.flagged == 0);
    CHECK(both.max_diff < 0.08);
    CHECK(both.entries.size() == 3);

    auto broken = fa;
    broken.total[0][1] += 0.5;
    const auto bad = cross_validate(pf, broken, 0.08);
    CHECK(bad.flagged == 1);
    CHECK(bad.entries[1].flagged);
    CHECK_THAT(bad.summary, ContainsSubstring("1 of 3"));

    auto other = fa;
    other.input_names[0] = "Z";
    CHECK_THROWS_WITH(cross_validate(pf, other, 0.08), ContainsSubstring("shape mismatch"));
}

TEST_CASE("clinical input sets must be in MAP mode") {
    const auto spdp = InputDistributionSet::defaults(InputMode::SpDp);
    const auto f = passthrough_evaluator("IOP");
    CHECK_THROWS_WITH(pick_freeze_indices(f, spdp, 100, 1), ContainsSubstring("MAP mode"));
}

TEST_CASE("MAP-mode simulator indices sum sensibly on a small sample") {
    SimulatorSetup setup;
    setup.model = std::make_shared<const NetworkModel>(build_reduced_omvs(CircuitParameters{}));
    const auto f = map_mode_evaluator(simulator_evaluator(setup));
    const auto in = InputDistributionSet::defaults(InputMode::Map);
    const auto s = fast_indices(f, in, 129, 1);
    REQUIRE(s.first.size() == 9);
    for (std::size_t q = 0; q < 9; ++q) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 3; ++i) sum += s.first[q][i];
        CHECK(sum <= 1.05);
        CHECK(s.variance[q] > 0.0);
    }
}
