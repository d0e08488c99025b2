#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "breakscope/panel.hpp"
#include "breakscope/saturation.hpp"
#include "breakscope/simgen.hpp"
#include "breakscope/util.hpp"

#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <set>

using namespace breakscope;
using testutil::tiny_panel;

TEST_CASE("selection config validation") {
    SelectionConfig c;
    CHECK_NOTHROW(c.validate());
    SelectionConfig bad = c;
    bad.gamma = 0.0;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = c;
    bad.gamma = 1.0;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = c;
    bad.block_size = 1;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = c;
    bad.max_paths = 0;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = c;
    bad.max_outer_iterations = 0;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = c;
    bad.jobs = 0;
    CHECK_THROWS_AS(bad.validate(), input_error);
}

TEST_CASE("blocks partition the candidates exactly once") {
    PanelDataset d = tiny_panel(41, 22);
    auto cands = all_step_candidates(d);
    REQUIRE(cands.size() == 861);
    SelectionConfig c;
    c.block_size = 20;
    c.seed = 42;
    auto blocks = partition_blocks(cands, c);
    CHECK(blocks.size() == 44);  // ceil(861 / 20)
    for (size_t b = 0; b + 1 < blocks.size(); ++b) CHECK(blocks[b].size() == 20);
    CHECK(blocks.back().size() == 1);

    std::multiset<Indicator> seen;
    for (const auto& b : blocks) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == cands.size());
    CHECK(std::set<Indicator>(seen.begin(), seen.end()).size() == cands.size());

    auto again = partition_blocks(cands, c);
    CHECK(again == blocks);  // same seed, same partition

    SelectionConfig c2 = c;
    c2.seed = 43;
    CHECK(partition_blocks(cands, c2) != blocks);

    std::vector<Indicator> few(cands.begin(), cands.begin() + 5);
    auto small = partition_blocks(few, c);
    CHECK(small.size() == 1);
    CHECK(small[0].size() == 5);
}

TEST_CASE("elimination on an empty working set returns empty") {
    PanelDataset d = tiny_panel(4, 6);
    auto cands = all_step_candidates(d);
    SelectionConfig c;
    SearchContext ctx(d, cands, c);
    CHECK(gets_select(ctx, {}, c).empty());
}

TEST_CASE("three injected breaks are recovered exactly") {
    DgpSpec spec;
    spec.n_countries = 10;
    spec.n_periods = 15;
    spec.sigma = 0.05;
    spec.seed = 1234;
    spec.breaks = {{1, 5, -0.5}, {4, 8, 0.45}, {7, 11, -0.6}};
    SimulatedPanel sim = simulate_panel(spec);

    SelectionConfig c;
    c.gamma = 0.01;
    c.block_size = 20;
    c.seed = 7;
    SelectionResult res = sis_search(sim.data, c);

    std::vector<Indicator> expected = sim.truth.break_indicators;
    std::sort(expected.begin(), expected.end());
    CHECK(res.retained == expected);
    CHECK(res.converged);
    CHECK(std::is_sorted(res.retained.begin(), res.retained.end()));

    // The final joint fit pins each retained coefficient near its true size.
    for (size_t i = 0; i < expected.size(); ++i) {
        auto col = res.final_design.find_column(indicator_name(sim.data, expected[i]));
        REQUIRE(col.has_value());
        double truth = 0.0;
        for (size_t k = 0; k < sim.truth.break_indicators.size(); ++k)
            if (sim.truth.break_indicators[k] == expected[i]) truth = sim.truth.taus[k];
        CHECK(std::abs(res.final_fit.coef(*col) - truth) < 0.1);
    }
}

TEST_CASE("a trend-only panel retains nothing") {
    DgpSpec spec;
    spec.n_countries = 8;
    spec.n_periods = 12;
    spec.sigma = 0.0;  // pure structure: fixed effects, trends, covariates
    spec.seed = 5;
    SimulatedPanel sim = simulate_panel(spec);
    SelectionConfig c;
    c.seed = 9;
    SelectionResult res = sis_search(sim.data, c);
    CHECK(res.retained.empty());
    CHECK(res.converged);
}

TEST_CASE("null panels rarely retain candidates") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 10;
    spec.sigma = 0.05;
    spec.seed = 3;
    SimulatedPanel sim = simulate_panel(spec);
    SelectionConfig c;
    c.seed = 11;
    SelectionResult res = sis_search(sim.data, c);
    // 54 candidates at gamma = 0.01: a handful of false positives at most.
    CHECK(res.retained.size() <= 4);
}

TEST_CASE("selection is deterministic and independent of jobs") {
    DgpSpec spec;
    spec.n_countries = 8;
    spec.n_periods = 12;
    spec.sigma = 0.04;
    spec.seed = 21;
    spec.breaks = {{2, 6, -0.5}};
    SimulatedPanel sim = simulate_panel(spec);

    SelectionConfig c;
    c.seed = 17;
    SelectionResult a = sis_search(sim.data, c);
    SelectionResult b = sis_search(sim.data, c);
    CHECK(a.retained == b.retained);
    CHECK(a.outer_iterations == b.outer_iterations);
    CHECK(a.trace.size() == b.trace.size());
    CHECK(a.union_history == b.union_history);

    SelectionConfig cj = c;
    cj.jobs = 3;
    SelectionResult p = sis_search(sim.data, cj);
    CHECK(p.retained == a.retained);
    CHECK(p.trace.size() == a.trace.size());
}

TEST_CASE("retained candidates are significant in the final fit") {
    DgpSpec spec;
    spec.n_countries = 9;
    spec.n_periods = 13;
    spec.sigma = 0.05;
    spec.seed = 31;
    spec.breaks = {{3, 7, -0.55}, {6, 5, 0.5}};
    SimulatedPanel sim = simulate_panel(spec);
    SelectionConfig c;
    c.seed = 13;
    SelectionResult res = sis_search(sim.data, c);
    REQUIRE(!res.retained.empty());
    for (const auto& ind : res.retained) {
        auto col = res.final_design.find_column(indicator_name(sim.data, ind));
        REQUIRE(col.has_value());
        CHECK(res.final_fit.retained[*col]);
        CHECK(res.final_fit.p_value(*col) <= c.gamma);
    }
}

TEST_CASE("the audit trace records block and union fits") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 10;
    spec.sigma = 0.05;
    spec.seed = 41;
    spec.breaks = {{1, 5, -0.6}};
    SimulatedPanel sim = simulate_panel(spec);
    SelectionConfig c;
    c.seed = 19;
    SelectionResult res = sis_search(sim.data, c);

    bool saw_block = false, saw_union = false;
    for (const auto& t : res.trace) {
        CHECK(t.p_values.size() == t.working.size());
        CHECK(t.iteration >= 1);
        if (t.stage == "block") {
            saw_block = true;
            CHECK(t.block >= 0);
        }
        if (t.stage == "union") {
            saw_union = true;
            CHECK(t.block == -1);
        }
        CHECK(std::isfinite(t.ic));
        CHECK(t.rss >= 0.0);
    }
    CHECK(saw_block);
    CHECK(saw_union);
    CHECK(res.outer_iterations >= 1);
    CHECK(res.union_history.size() == static_cast<size_t>(res.outer_iterations));
}

TEST_CASE("a single outer iteration still yields a usable result") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 10;
    spec.sigma = 0.05;
    spec.seed = 51;
    spec.breaks = {{2, 6, -0.6}};
    SimulatedPanel sim = simulate_panel(spec);
    SelectionConfig c;
    c.seed = 23;
    c.max_outer_iterations = 1;
    SelectionResult res = sis_search(sim.data, c);
    CHECK(res.outer_iterations == 1);
    Indicator want = sim.truth.break_indicators[0];
    CHECK(std::find(res.retained.begin(), res.retained.end(), want) != res.retained.end());
}

TEST_CASE("impulse saturation flags a one-year outlier") {
    DgpSpec spec;
    spec.n_countries = 7;
    spec.n_periods = 11;
    spec.sigma = 0.05;
    spec.seed = 61;
    SimulatedPanel sim = simulate_panel(spec);
    // A +6 sigma single-year spike.
    int country = 2;
    int t = 6;
    sim.data.emissions(country, t) *= std::exp(6 * spec.sigma);

    SelectionConfig c;
    c.seed = 29;
    c.indicator_kind = CandidateSet::impulse;
    SelectionResult res = iis_search(sim.data, c);
    Indicator spike{IndicatorKind::impulse, country, sim.data.year_first + t};
    CHECK(std::find(res.retained.begin(), res.retained.end(), spike) != res.retained.end());
    CHECK(res.retained.size() <= 3);
}
