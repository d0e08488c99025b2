#include "breakscope/effects.hpp"

#include "breakscope/csv.hpp"
#include "breakscope/util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace breakscope {

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZ95 = 1.96;

std::vector<Indicator> retained_steps(const std::vector<Indicator>& retained) {
    std::vector<Indicator> steps;
    for (const auto& ind : retained)
        if (ind.kind == IndicatorKind::step) steps.push_back(ind);
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
    return steps;
}

}  // namespace

double BreakEstimate::effect() const { return std::expm1(tau_hat); }
double BreakEstimate::effect_pct() const { return 100.0 * std::expm1(tau_hat); }

double effect_size(double tau_hat) { return 100.0 * std::expm1(tau_hat); }

std::vector<double> counterfactual(const PanelDataset& data, const Indicator& brk,
                                   double tau_hat) {
    if (brk.kind != IndicatorKind::step) throw input_error("counterfactual needs a step break");
    const int s = data.year_index(brk.year);
    if (s < 1 || brk.year > data.year_last) throw input_error("break year out of range");
    std::vector<double> out;
    out.reserve(data.n_years() - s);
    const double factor = std::exp(-tau_hat);
    for (int t = s; t < data.n_years(); ++t)
        out.push_back(data.emissions(brk.country, t) * factor);
    return out;
}

double cumulative_reduction(const PanelDataset& data, const Indicator& brk, double tau_hat) {
    const int s = data.year_index(brk.year);
    if (s < 1 || brk.year > data.year_last) throw input_error("break year out of range");
    double sum = 0.0;
    const double delta = std::expm1(-tau_hat);
    for (int t = s; t < data.n_years(); ++t) sum += data.emissions(brk.country, t) * delta;
    return sum;
}

std::pair<int, int> timing_ci(const PanelDataset& data, const std::vector<Indicator>& retained,
                              const Indicator& brk, double level,
                              const EstimateOptions& options) {
    const auto steps = retained_steps(retained);
    if (std::find(steps.begin(), steps.end(), brk) == steps.end())
        throw input_error("break " + indicator_name(data, brk) + " is not a retained step");

    DesignMatrix forced = build_design(data, {});
    ForcedProjector projector(forced.X, options.pivot_rel_tol);
    const Eigen::VectorXd y_resid = projector.residualize(forced.y);
    FitOptions fopt;
    fopt.pivot_rel_tol = options.pivot_rel_tol;

    auto fit_steps = [&](const std::set<Indicator>& which) {
        Eigen::MatrixXd cols(y_resid.size(), which.size());
        int k = 0;
        for (const auto& ind : which) cols.col(k++) = indicator_column(data, ind);
        cols = projector.residualize(cols);
        return fit_partialled(cols, y_resid, projector.rank(), fopt);
    };

    std::set<Indicator> base_set(steps.begin(), steps.end());
    const PartialledFit base = fit_steps(base_set);
    const double threshold = chi_squared_quantile(level, 1);
    const double n = static_cast<double>(base.n);
    const double rss_floor = n * 1e-280;

    auto included = [&](int year) {
        std::set<Indicator> alt = base_set;
        alt.erase(brk);
        alt.insert({IndicatorKind::step, brk.country, year});
        const PartialledFit f = fit_steps(alt);
        if (base.exact_fit) return f.exact_fit;
        const double stat = n * std::log(std::max(f.rss, rss_floor) /
                                         std::max(base.rss, rss_floor));
        return stat <= threshold;
    };

    int lo = brk.year, hi = brk.year;
    while (lo - 1 >= data.year_first + 1 && included(lo - 1)) --lo;
    while (hi + 1 <= data.year_last && included(hi + 1)) ++hi;
    return {lo, hi};
}

SparseFit fit_sparse(const PanelDataset& data, const std::vector<Indicator>& retained,
                     const EstimateOptions& options) {
    const auto steps = retained_steps(retained);

    SparseFit out;
    out.design = build_design(data, steps);
    FitOptions fopt;
    fopt.pivot_rel_tol = options.pivot_rel_tol;
    out.fit = fit_design(out.design, fopt);
    if (data.n_countries() >= 2) {
        out.cluster = cluster_se(out.design.X, out.design.y, out.fit, out.design.row_country);
    } else {
        out.warnings.push_back("single-country panel: cluster-robust errors unavailable");
    }

    for (size_t k = 0; k < steps.size(); ++k) {
        const Indicator& brk = steps[k];
        const int col = out.design.n_forced + static_cast<int>(k);

        BreakEstimate est;
        est.series = data.series;
        est.country = brk.country;
        est.country_iso3 = data.countries[brk.country].iso3;
        est.year = brk.year;

        if (!out.fit.retained[col]) {
            out.warnings.push_back("retained break " + indicator_name(data, brk) +
                                   " is aliased in the sparse fit");
            est.tau_hat = 0.0;
            est.se = kNaN;
            est.se_cluster = kNaN;
            est.p_value = kNaN;
            est.significant = false;
        } else {
            est.tau_hat = out.fit.coef[col];
            est.se = out.fit.se[col];
            est.se_cluster = out.cluster.se.size() > col ? out.cluster.se[col] : kNaN;
            est.p_value = out.fit.p_value[col];
            est.significant = est.p_value < options.gamma;
            if (!est.significant)
                out.warnings.push_back("break " + indicator_name(data, brk) + " in " +
                                       data.series.label() +
                                       " is no longer significant in the sparse fit (p=" +
                                       format_double(est.p_value) + ")");
        }

        auto [lo, hi] = timing_ci(data, steps, brk, options.ci_level, options);
        est.ci_lo = lo;
        est.ci_hi = hi;
        est.window_lo = lo - options.window_pad;
        est.window_hi = hi + options.window_pad;
        est.ci_spans_sample = (lo == data.year_first + 1 && hi == data.year_last);
        if (est.ci_spans_sample)
            out.warnings.push_back("timing interval for " + indicator_name(data, brk) +
                                   " spans the whole sample (weakly identified)");

        est.counterfactual = counterfactual(data, brk, est.tau_hat);
        est.cf_years.clear();
        for (int year = brk.year; year <= data.year_last; ++year) est.cf_years.push_back(year);
        est.cum_reduction = cumulative_reduction(data, brk, est.tau_hat);
        const double se = std::isfinite(est.se) ? est.se : 0.0;
        const double a = cumulative_reduction(data, brk, est.tau_hat - kZ95 * se);
        const double b = cumulative_reduction(data, brk, est.tau_hat + kZ95 * se);
        est.cum_lo = std::min(a, b);
        est.cum_hi = std::max(a, b);

        out.estimates.push_back(std::move(est));
    }
    return out;
}

std::vector<PollutantTotal> cumulative_totals(const std::vector<BreakEstimate>& estimates) {
    std::vector<PollutantTotal> out;
    for (Pollutant p : {Pollutant::NOx, Pollutant::CO, Pollutant::VOCs}) {
        PollutantTotal total;
        total.pollutant = p;
        for (const auto& est : estimates) {
            if (est.series.pollutant != p) continue;
            total.total_gt += est.cum_reduction / 1e9;
            total.lo_gt += est.cum_lo / 1e9;
            total.hi_gt += est.cum_hi / 1e9;
            ++total.n_breaks;
        }
        if (total.n_breaks > 0) out.push_back(total);
    }
    return out;
}

}  // namespace breakscope
