#pragma once

#include "breakscope/panel.hpp"
#include "breakscope/regress.hpp"

#include <string>
#include <vector>

namespace breakscope {

struct EstimateOptions {
    double gamma = 0.01;     // significance re-check threshold
    double ci_level = 0.99;  // timing confidence level
    int window_pad = 2;      // attribution window beyond the timing CI
    double pivot_rel_tol = 1e-10;
};

/// One estimated break: its size, timing uncertainty, attribution window,
/// counterfactual path and cumulative reduction.
struct BreakEstimate {
    SeriesKey series;
    int country = 0;
    std::string country_iso3;
    int year = 0;  // break year s

    double tau_hat = 0.0;  // log-points
    double se = 0.0;       // conventional
    double se_cluster = 0.0;
    double p_value = 1.0;
    bool significant = true;

    int ci_lo = 0, ci_hi = 0;          // 99% timing interval, contains s
    int window_lo = 0, window_hi = 0;  // ci padded by window_pad years
    bool ci_spans_sample = false;

    std::vector<int> cf_years;            // s .. last sample year
    std::vector<double> counterfactual;   // tonnes/year, aligned with cf_years
    double cum_reduction = 0.0;           // tonnes, counterfactual - observed
    double cum_lo = 0.0, cum_hi = 0.0;    // 95% bounds

    double effect() const;      // exp(tau_hat) - 1, a fraction
    double effect_pct() const;  // the same in percent
};

double effect_size(double tau_hat);  // percent, 100*(exp(tau)-1)

struct SparseFit {
    DesignMatrix design;
    FitResult fit;
    ClusterStats cluster;
    std::vector<BreakEstimate> estimates;  // sorted by (country, year)
    std::vector<std::string> warnings;
};

/// Joint re-estimation with only the retained indicators, plus the full
/// per-break post-processing (timing interval, counterfactual, cumulative
/// reduction). Retained steps that lose significance here are flagged and
/// warned about, never dropped.
SparseFit fit_sparse(const PanelDataset& data, const std::vector<Indicator>& retained,
                     const EstimateOptions& options = {});

/// Likelihood-ratio inversion of the break date: alternative dates whose
/// refit RSS satisfies n*ln(RSS'/RSS) <= chi-squared_1(level) are included;
/// the interval is the contiguous run of such dates around the break.
std::pair<int, int> timing_ci(const PanelDataset& data, const std::vector<Indicator>& retained,
                              const Indicator& brk, double level = 0.99,
                              const EstimateOptions& options = {});

/// Observed series with the break's own effect removed: obs_t * exp(-tau)
/// for t >= s, in tonnes.
std::vector<double> counterfactual(const PanelDataset& data, const Indicator& brk,
                                   double tau_hat);

/// Sum over t >= s of counterfactual - observed, in tonnes.
double cumulative_reduction(const PanelDataset& data, const Indicator& brk, double tau_hat);

struct PollutantTotal {
    Pollutant pollutant = Pollutant::NOx;
    double total_gt = 0.0;
    double lo_gt = 0.0, hi_gt = 0.0;
    int n_breaks = 0;
};

/// Per-pollutant cumulative reductions across all series, in gigatonnes.
std::vector<PollutantTotal> cumulative_totals(const std::vector<BreakEstimate>& estimates);

}  // namespace breakscope
