#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "breakscope/panel.hpp"
#include "breakscope/saturation.hpp"
#include "breakscope/simgen.hpp"
#include "breakscope/util.hpp"

#include "helpers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

using namespace breakscope;
using testutil::TempDir;

TEST_CASE("generator specs are validated") {
    DgpSpec ok;
    CHECK_NOTHROW(ok.validate());
    DgpSpec bad = ok;
    bad.n_countries = 1;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = ok;
    bad.sigma = -0.01;
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = ok;
    bad.breaks = {{0, 1, -0.5}};  // a step cannot sit on the first period
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = ok;
    bad.breaks = {{0, bad.n_periods + 1, -0.5}};
    CHECK_THROWS_AS(bad.validate(), input_error);
    bad = ok;
    bad.breaks = {{99, 5, -0.5}};
    CHECK_THROWS_AS(bad.validate(), input_error);
}

TEST_CASE("zero noise reproduces the structural surface exactly") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 9;
    spec.sigma = 0.0;
    spec.seed = 4;
    SimulatedPanel sim = simulate_panel(spec);
    REQUIRE(sim.truth.ln_structural.rows() == 6);
    REQUIRE(sim.truth.ln_structural.cols() == 9);
    for (int j = 0; j < 6; ++j)
        for (int t = 0; t < 9; ++t) {
            CHECK(std::log(sim.data.emissions(j, t)) ==
                  doctest::Approx(sim.truth.ln_structural(j, t)).epsilon(1e-12));
            CHECK(sim.truth.ln_nobreak(j, t) ==
                  doctest::Approx(sim.truth.ln_structural(j, t)).epsilon(1e-12));
        }
    CHECK(sim.truth.break_indicators.empty());
    sim.data.validate();
}

TEST_CASE("the same seed reproduces the panel bit for bit") {
    DgpSpec spec;
    spec.n_countries = 7;
    spec.n_periods = 11;
    spec.sigma = 0.06;
    spec.seed = 99;
    spec.n_factors = 2;
    spec.breaks = {{2, 5, -0.4}};
    SimulatedPanel a = simulate_panel(spec);
    SimulatedPanel b = simulate_panel(spec);
    CHECK(std::memcmp(a.data.emissions.data(), b.data.emissions.data(),
                      sizeof(double) * a.data.emissions.size()) == 0);
    CHECK(std::memcmp(a.data.gdp.data(), b.data.gdp.data(),
                      sizeof(double) * a.data.gdp.size()) == 0);
    CHECK(std::memcmp(a.truth.ln_nobreak.data(), b.truth.ln_nobreak.data(),
                      sizeof(double) * a.truth.ln_nobreak.size()) == 0);

    DgpSpec other = spec;
    other.seed = 100;
    SimulatedPanel c = simulate_panel(other);
    CHECK(std::memcmp(a.data.emissions.data(), c.data.emissions.data(),
                      sizeof(double) * a.data.emissions.size()) != 0);
}

TEST_CASE("an injected break shifts the log level by exactly tau") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 12;
    spec.sigma = 0.0;
    spec.seed = 8;
    spec.breaks = {{3, 10, -0.5}};
    SimulatedPanel sim = simulate_panel(spec);

    REQUIRE(sim.truth.break_indicators.size() == 1);
    const Indicator& ind = sim.truth.break_indicators[0];
    CHECK(ind.kind == IndicatorKind::step);
    CHECK(ind.country == 3);
    CHECK(ind.year == spec.year_first + 9);  // 1-based period 10
    CHECK(sim.truth.taus[0] == -0.5);

    for (int t = 0; t < 12; ++t) {
        double expected = sim.truth.ln_nobreak(3, t) + (t >= 9 ? -0.5 : 0.0);
        CHECK(std::log(sim.data.emissions(3, t)) == doctest::Approx(expected).epsilon(1e-12));
    }
    // Other countries are untouched.
    for (int t = 0; t < 12; ++t)
        CHECK(std::log(sim.data.emissions(1, t)) ==
              doctest::Approx(sim.truth.ln_nobreak(1, t)).epsilon(1e-12));
}

TEST_CASE("written panels load back into the same dataset") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 10;
    spec.sigma = 0.05;
    spec.seed = 15;
    spec.breaks = {{1, 6, -0.45}};
    SimulatedPanel sim = simulate_panel(spec);

    TempDir dir;
    write_panel_csvs(sim, dir.str());
    for (const char* name :
         {"emissions.csv", "covariates.csv", "groups.csv", "eu_controls.csv", "ground_truth.csv"})
        CHECK(std::filesystem::exists(dir.file(name)));

    PanelDataset loaded =
        load_panel(dir.file("emissions.csv"), dir.file("covariates.csv"), dir.file("groups.csv"),
                   dir.file("eu_controls.csv"), {spec.pollutant, spec.sector});
    CHECK(loaded.n_countries() == sim.data.n_countries());
    CHECK(loaded.year_first == sim.data.year_first);
    CHECK(loaded.year_last == sim.data.year_last);
    for (int j = 0; j < loaded.n_countries(); ++j) {
        CHECK(loaded.countries[j].iso3 == sim.data.countries[j].iso3);
        CHECK(loaded.countries[j].developed == sim.data.countries[j].developed);
        for (int t = 0; t < loaded.n_years(); ++t) {
            CHECK(loaded.emissions(j, t) ==
                  doctest::Approx(sim.data.emissions(j, t)).epsilon(1e-9));
            CHECK(loaded.gdp(j, t) == doctest::Approx(sim.data.gdp(j, t)).epsilon(1e-9));
        }
    }
}

TEST_CASE("a noiseless round trip recovers the injected break exactly") {
    DgpSpec spec;
    spec.n_countries = 6;
    spec.n_periods = 8;
    spec.sigma = 0.0;
    spec.seed = 23;
    spec.breaks = {{2, 5, -0.35}};
    SimulatedPanel sim = simulate_panel(spec);

    SelectionConfig c;
    c.seed = 31;
    SelectionResult res = sis_search(sim.data, c);
    REQUIRE(res.retained.size() == 1);
    CHECK(res.retained[0] == sim.truth.break_indicators[0]);
    auto col = res.final_design.find_column(indicator_name(sim.data, res.retained[0]));
    REQUIRE(col.has_value());
    CHECK(std::abs(res.final_fit.coef(*col) - (-0.35)) < 1e-8);
}

TEST_CASE("null calibration keeps the retention rate near gamma") {
    DgpSpec null_spec;
    null_spec.n_countries = 6;
    null_spec.n_periods = 10;
    null_spec.sigma = 0.05;
    null_spec.seed = 12;

    SelectionConfig c;
    c.gamma = 0.01;
    c.seed = 5;
    CalibrationStats stats = calibrate_false_positives(null_spec, c, 60);
    CHECK(stats.reps == 60);
    CHECK(stats.candidates_per_rep == 54);  // 6 countries x 9 candidate years
    CHECK(static_cast<int>(stats.retained_counts.size()) == 60);
    // Loose envelope for a short run; the acceptance gate pins this tighter.
    CHECK(stats.mean_rate < 0.05);
    CHECK(stats.p90_retained <= 4);
    CHECK(stats.max_retained >= stats.p90_retained);

    SUBCASE("too few replications or an injected break are refused") {
        CHECK_THROWS_AS(calibrate_false_positives(null_spec, c, 10), input_error);
        DgpSpec with_break = null_spec;
        with_break.breaks = {{1, 5, -0.5}};
        CHECK_THROWS_AS(calibrate_false_positives(with_break, c, 60), input_error);
    }
}

TEST_CASE("zero-noise null panels retain nothing at all") {
    DgpSpec null_spec;
    null_spec.n_countries = 5;
    null_spec.n_periods = 8;
    null_spec.sigma = 0.0;
    null_spec.seed = 44;
    SelectionConfig c;
    c.seed = 9;
    CalibrationStats stats = calibrate_false_positives(null_spec, c, 50);
    CHECK(stats.mean_retained == 0.0);
    CHECK(stats.max_retained == 0);
}

TEST_CASE("recovery improves with break size") {
    DgpSpec base;
    base.n_countries = 8;
    base.n_periods = 12;
    base.seed = 71;

    SelectionConfig c;
    c.seed = 13;
    std::vector<std::tuple<double, double, int>> grid = {{0.1, 0.05, 5}, {0.6, 0.05, 5}};
    auto cells = recovery_benchmark(grid, base, c, 25);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].tau_abs == 0.1);
    CHECK(cells[1].tau_abs == 0.6);
    CHECK(cells[0].reps == 25);
    // A 12 sigma break is found essentially always; a 2 sigma one is not.
    CHECK(cells[1].exact_rate >= 0.9);
    CHECK(cells[1].exact_rate + 0.05 >= cells[0].exact_rate);
    CHECK(cells[1].within1_rate >= cells[1].exact_rate);
    CHECK(cells[1].missed_rate <= 0.1);
    CHECK(std::abs(cells[1].bias) < 0.05);
    CHECK(cells[1].rmse < 0.08);

    CHECK_THROWS_AS(recovery_benchmark(grid, base, c, 0), input_error);
    std::vector<std::tuple<double, double, int>> bad = {{0.5, 0.05, 99}};
    CHECK_THROWS_AS(recovery_benchmark(bad, base, c, 5), input_error);
}
