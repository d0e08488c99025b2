#include "breakscope/simgen.hpp"

#include "breakscope/csv.hpp"
#include "breakscope/effects.hpp"
#include "breakscope/util.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace breakscope {

void DgpSpec::validate() const {
    if (n_countries < 2) throw input_error("need at least 2 countries");
    if (n_periods < 3) throw input_error("need at least 3 periods");
    if (!(sigma >= 0.0)) throw input_error("sigma must be nonnegative");
    if (n_factors < 0) throw input_error("factor count must be nonnegative");
    for (const auto& b : breaks) {
        if (b.country < 0 || b.country >= n_countries)
            throw input_error("injected break country out of range");
        if (b.period < 2 || b.period > n_periods)
            throw input_error("injected break period must be in [2, T]");
        if (!std::isfinite(b.tau)) throw input_error("injected tau must be finite");
    }
}

namespace {

std::string synthetic_iso(int i) {
    std::string code = "SAA";
    code[1] = static_cast<char>('A' + i / 26);
    code[2] = static_cast<char>('A' + i % 26);
    return code;
}

Eigen::MatrixXd random_walk_matrix(int n, int t, double start_scale, double start_spread,
                                   double drift, double vol, Rng& rng) {
    Eigen::MatrixXd out(n, t);
    for (int i = 0; i < n; ++i) {
        double ln_v = std::log(start_scale) + start_spread * rng.normal();
        out(i, 0) = std::exp(ln_v);
        for (int p = 1; p < t; ++p) {
            ln_v += drift + vol * rng.normal();
            out(i, p) = std::exp(ln_v);
        }
    }
    return out;
}

}  // namespace

SimulatedPanel simulate_panel(const DgpSpec& spec) {
    spec.validate();
    const int n = spec.n_countries, t = spec.n_periods;

    Rng rng_country(Rng::child_seed(spec.seed, 1));
    Rng rng_group_year(Rng::child_seed(spec.seed, 2));
    Rng rng_trend(Rng::child_seed(spec.seed, 3));
    Rng rng_cov(Rng::child_seed(spec.seed, 4));
    Rng rng_noise(Rng::child_seed(spec.seed, 5));
    Rng rng_factor(Rng::child_seed(spec.seed, 6));

    SimulatedPanel out;
    PanelDataset& data = out.data;
    data.series = {spec.pollutant, spec.sector};
    data.year_first = spec.year_first;
    data.year_last = spec.year_first + t - 1;
    const int n_developed = (n + 1) / 2;
    for (int i = 0; i < n; ++i) {
        CountryInfo ci;
        ci.iso3 = synthetic_iso(i);
        ci.developed = i < n_developed;
        ci.eu_member = false;
        data.countries.push_back(ci);
    }

    data.gdp = random_walk_matrix(n, t, 1e11, 0.3, spec.cov_drift, spec.cov_vol, rng_cov);
    data.population = random_walk_matrix(n, t, 1e7, 0.3, spec.cov_drift / 2, spec.cov_vol / 2,
                                         rng_cov);
    data.hdd = random_walk_matrix(n, t, 2500.0, 0.1, 0.0, spec.cov_vol / 2, rng_cov);
    data.cdd = random_walk_matrix(n, t, 800.0, 0.1, 0.0, spec.cov_vol / 2, rng_cov);

    std::vector<double> mu(n), slope(n);
    for (int i = 0; i < n; ++i) mu[i] = spec.country_effect_scale * rng_country.normal();
    for (int i = 0; i < n; ++i) slope[i] = spec.trend_scale * rng_trend.normal();
    Eigen::MatrixXd eta(2, t);
    for (int g = 0; g < 2; ++g)
        for (int p = 0; p < t; ++p)
            eta(g, p) = spec.group_year_effect_scale * rng_group_year.normal();

    Eigen::MatrixXd factors(spec.n_factors, t);
    Eigen::MatrixXd loadings(n, spec.n_factors);
    for (int k = 0; k < spec.n_factors; ++k)
        for (int p = 0; p < t; ++p) factors(k, p) = rng_factor.normal();
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < spec.n_factors; ++k)
            loadings(i, k) = spec.factor_scale * rng_factor.normal();

    out.truth.ln_structural.resize(n, t);
    out.truth.ln_nobreak.resize(n, t);
    data.emissions.resize(n, t);
    const double t_mid = (t - 1) / 2.0;
    for (int i = 0; i < n; ++i) {
        const int g = data.countries[i].developed ? 0 : 1;
        for (int p = 0; p < t; ++p) {
            const double lg = std::log(data.gdp(i, p));
            double ln_y = mu[i] + eta(g, p) + slope[i] * (p - t_mid) + spec.b_gdp * lg +
                          spec.b_gdp2 * lg * lg + spec.b_pop * std::log(data.population(i, p)) +
                          spec.b_hdd * std::log(data.hdd(i, p)) +
                          spec.b_cdd * std::log(data.cdd(i, p));
            for (int k = 0; k < spec.n_factors; ++k) ln_y += loadings(i, k) * factors(k, p);
            out.truth.ln_structural(i, p) = ln_y;
        }
    }
    for (int i = 0; i < n; ++i)
        for (int p = 0; p < t; ++p)
            out.truth.ln_nobreak(i, p) =
                out.truth.ln_structural(i, p) + spec.sigma * rng_noise.normal();

    Eigen::MatrixXd ln_y = out.truth.ln_nobreak;
    for (const auto& b : spec.breaks) {
        for (int p = b.period - 1; p < t; ++p) ln_y(b.country, p) += b.tau;
        out.truth.break_indicators.push_back(
            {IndicatorKind::step, b.country, spec.year_first + b.period - 1});
        out.truth.taus.push_back(b.tau);
    }
    data.emissions = ln_y.array().exp();

    data.validate();
    return out;
}

void write_panel_csvs(const SimulatedPanel& panel, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const PanelDataset& d = panel.data;

    auto open = [&](const std::string& name) {
        std::ofstream f(fs::path(out_dir) / name, std::ios::binary);
        if (!f) throw input_error("cannot write " + name + " in " + out_dir);
        return f;
    };

    {
        std::ofstream f = open("emissions.csv");
        f << "country_iso3,year,sector,pollutant,emissions_t\n";
        for (int i = 0; i < d.n_countries(); ++i)
            for (int p = 0; p < d.n_years(); ++p)
                f << d.countries[i].iso3 << ',' << d.year_first + p << ','
                  << to_string(d.series.sector) << ',' << to_string(d.series.pollutant) << ','
                  << format_double(d.emissions(i, p)) << '\n';
    }
    {
        std::ofstream f = open("covariates.csv");
        f << "country_iso3,year,gdp_usd2015,population,hdd16,cdd18\n";
        for (int i = 0; i < d.n_countries(); ++i)
            for (int p = 0; p < d.n_years(); ++p)
                f << d.countries[i].iso3 << ',' << d.year_first + p << ','
                  << format_double(d.gdp(i, p)) << ',' << format_double(d.population(i, p))
                  << ',' << format_double(d.hdd(i, p)) << ',' << format_double(d.cdd(i, p))
                  << '\n';
    }
    {
        std::ofstream f = open("groups.csv");
        f << "country_iso3,group,eu_member\n";
        for (const auto& c : d.countries)
            f << c.iso3 << ',' << c.group() << ',' << (c.eu_member ? 1 : 0) << '\n';
    }
    {
        std::ofstream f = open("eu_controls.csv");
        f << "control_name,country_iso3,year,value\n";
        for (const auto& [name, m] : d.eu_controls)
            for (int i = 0; i < d.n_countries(); ++i)
                for (int p = 0; p < d.n_years(); ++p)
                    if (m(i, p) != 0.0)
                        f << name << ',' << d.countries[i].iso3 << ',' << d.year_first + p
                          << ',' << format_double(m(i, p)) << '\n';
    }
    {
        std::ofstream f = open("ground_truth.csv");
        f << "country_iso3,break_year,tau\n";
        for (size_t k = 0; k < panel.truth.break_indicators.size(); ++k) {
            const auto& ind = panel.truth.break_indicators[k];
            f << d.countries[ind.country].iso3 << ',' << ind.year << ','
              << format_double(panel.truth.taus[k]) << '\n';
        }
    }
}

CalibrationStats calibrate_false_positives(const DgpSpec& null_spec,
                                           const SelectionConfig& config, int reps) {
    if (reps < 50) throw input_error("calibration needs at least 50 replications");
    if (!null_spec.breaks.empty())
        throw input_error("calibration runs under the null: no injected breaks");

    CalibrationStats stats;
    stats.reps = reps;
    stats.candidates_per_rep =
        static_cast<long>(null_spec.n_countries) * (null_spec.n_periods - 1);
    stats.retained_counts.assign(reps, 0);

    parallel_for(reps, config.jobs, [&](std::size_t rep) {
        DgpSpec spec = null_spec;
        spec.seed = Rng::child_seed(null_spec.seed, 2 * rep);
        SelectionConfig c = config;
        c.seed = Rng::child_seed(null_spec.seed, 2 * rep + 1);
        c.jobs = 1;
        SimulatedPanel panel = simulate_panel(spec);
        stats.retained_counts[rep] =
            static_cast<int>(sis_search(panel.data, c).retained.size());
    });

    std::vector<int> sorted = stats.retained_counts;
    std::sort(sorted.begin(), sorted.end());
    long total = 0;
    for (int c : sorted) total += c;
    stats.mean_retained = static_cast<double>(total) / reps;
    stats.mean_rate = stats.mean_retained / stats.candidates_per_rep;
    stats.median_retained = sorted[reps / 2];
    stats.p90_retained = sorted[static_cast<size_t>(reps * 0.9)];
    stats.max_retained = sorted.back();
    return stats;
}

std::vector<RecoveryCell> recovery_benchmark(
    const std::vector<std::tuple<double, double, int>>& grid, const DgpSpec& base,
    const SelectionConfig& config, int reps) {
    if (reps < 1) throw input_error("recovery benchmark needs at least one replication");

    std::vector<RecoveryCell> cells;
    for (const auto& [tau_abs, sigma, post_len] : grid) {
        if (post_len < 1 || post_len > base.n_periods - 1)
            throw input_error("post-break length out of range");
        RecoveryCell cell;
        cell.tau_abs = tau_abs;
        cell.sigma = sigma;
        cell.post_len = post_len;
        cell.reps = reps;

        std::vector<int> outcome(reps, 0);  // 0 missed, 1 within +-1, 2 exact
        std::vector<double> tau_err(reps, 0.0);
        const std::uint64_t cell_seed =
            Rng::mix_string(base.seed, std::to_string(tau_abs) + "/" + std::to_string(sigma) +
                                           "/" + std::to_string(post_len));
        parallel_for(reps, config.jobs, [&](std::size_t rep) {
            DgpSpec spec = base;
            spec.sigma = sigma;
            spec.seed = Rng::child_seed(cell_seed, 2 * rep);
            InjectedBreak brk;
            brk.country = static_cast<int>(rep % spec.n_countries);
            brk.period = spec.n_periods - post_len + 1;
            brk.tau = -tau_abs;
            spec.breaks = {brk};
            SimulatedPanel panel = simulate_panel(spec);

            SelectionConfig c = config;
            c.seed = Rng::child_seed(cell_seed, 2 * rep + 1);
            c.jobs = 1;
            const auto retained = sis_search(panel.data, c).retained;
            const Indicator truth = panel.truth.break_indicators[0];

            bool exact = false, near = false;
            for (const auto& ind : retained) {
                if (ind.kind != IndicatorKind::step || ind.country != truth.country) continue;
                if (ind.year == truth.year) exact = true;
                if (std::abs(ind.year - truth.year) <= 1) near = true;
            }
            outcome[rep] = exact ? 2 : (near ? 1 : 0);
            if (exact) {
                const auto sparse = fit_sparse(panel.data, retained);
                for (const auto& est : sparse.estimates)
                    if (est.country == truth.country && est.year == truth.year)
                        tau_err[rep] = est.tau_hat - brk.tau;
            }
        });

        int n_exact = 0, n_near = 0;
        double err_sum = 0.0, err_sq = 0.0;
        for (int rep = 0; rep < reps; ++rep) {
            if (outcome[rep] == 2) {
                ++n_exact;
                err_sum += tau_err[rep];
                err_sq += tau_err[rep] * tau_err[rep];
            }
            if (outcome[rep] >= 1) ++n_near;
        }
        cell.exact_rate = static_cast<double>(n_exact) / reps;
        cell.within1_rate = static_cast<double>(n_near) / reps;
        cell.missed_rate = 1.0 - cell.within1_rate;
        if (n_exact > 0) {
            cell.bias = err_sum / n_exact;
            cell.rmse = std::sqrt(err_sq / n_exact);
        }
        cells.push_back(cell);
    }
    return cells;
}

}  // namespace breakscope
