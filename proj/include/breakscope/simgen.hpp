#pragma once

#include "breakscope/panel.hpp"
#include "breakscope/saturation.hpp"

#include <cstdint>
#include <string>
#include <tuple>
#include <vector>

namespace breakscope {

struct InjectedBreak {
    int country = 0;  // index
    int period = 2;   // 1-based, in [2, T]
    double tau = 0.0; // log-points
};

struct DgpSpec {
    int n_countries = 10;
    int n_periods = 15;
    int year_first = 2000;
    Pollutant pollutant = Pollutant::NOx;
    Sector sector = Sector::transport;

    double sigma = 0.05;  // noise, log-points
    double country_effect_scale = 0.5;
    double group_year_effect_scale = 0.1;
    double trend_scale = 0.01;
    double cov_drift = 0.02;
    double cov_vol = 0.02;
    double b_gdp = 0.4, b_gdp2 = 0.01, b_pop = 0.3, b_hdd = 0.1, b_cdd = 0.05;

    int n_factors = 0;
    double factor_scale = 0.1;  // loading spread when factors are on

    std::vector<InjectedBreak> breaks;
    std::uint64_t seed = 0;

    void validate() const;
};

struct GroundTruth {
    Eigen::MatrixXd ln_structural;  // country x year, no noise, no breaks
    Eigen::MatrixXd ln_nobreak;     // structural + noise, still no breaks
    std::vector<Indicator> break_indicators;  // calendar-year steps
    std::vector<double> taus;                 // aligned with break_indicators
};

struct SimulatedPanel {
    PanelDataset data;
    GroundTruth truth;
};

/// Build a panel from the saturated model's own structure: fixed effects,
/// trends, log covariates following geometric random walks, optional
/// common factors, injected steps, Gaussian noise; exponentiated to
/// tonnes. Same seed, same panel, bit for bit.
SimulatedPanel simulate_panel(const DgpSpec& spec);

/// Write a simulated panel in the standard input schemas (emissions.csv,
/// covariates.csv, groups.csv, eu_controls.csv) plus ground_truth.csv, so
/// the full pipeline runs on it unmodified.
void write_panel_csvs(const SimulatedPanel& panel, const std::string& out_dir);

struct CalibrationStats {
    int reps = 0;
    long candidates_per_rep = 0;
    double mean_retained = 0.0;
    double mean_rate = 0.0;  // retained / candidates
    double median_retained = 0.0;
    double p90_retained = 0.0;
    int max_retained = 0;
    std::vector<int> retained_counts;  // per replication
};

/// Null-model retention rates: how often the search keeps an indicator
/// when no break exists. Each replication draws its own panel and block
/// partition from counter-split substreams.
CalibrationStats calibrate_false_positives(const DgpSpec& null_spec,
                                           const SelectionConfig& config, int reps);

struct RecoveryCell {
    double tau_abs = 0.0;
    double sigma = 0.0;
    int post_len = 0;
    int reps = 0;
    double exact_rate = 0.0;    // retained at the true (country, year)
    double within1_rate = 0.0;  // retained within +-1 year
    double missed_rate = 0.0;
    double bias = 0.0;  // mean tau_hat - tau over exact recoveries
    double rmse = 0.0;
};

/// Power curves over a (|tau|, sigma, post-break length) grid, one
/// injected break per replication.
std::vector<RecoveryCell> recovery_benchmark(
    const std::vector<std::tuple<double, double, int>>& grid, const DgpSpec& base,
    const SelectionConfig& config, int reps);

}  // namespace breakscope
