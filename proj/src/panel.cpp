#include "breakscope/panel.hpp"

#include "breakscope/csv.hpp"
#include "breakscope/util.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace breakscope {

Pollutant parse_pollutant(const std::string& s) {
    std::string v = lower(trim(s));
    if (v == "nox") return Pollutant::NOx;
    if (v == "co") return Pollutant::CO;
    if (v == "vocs" || v == "voc") return Pollutant::VOCs;
    throw input_error("unknown pollutant '" + s + "' (expected NOx, CO or VOCs)");
}

Sector parse_sector(const std::string& s) {
    std::string v = lower(trim(s));
    if (v == "buildings") return Sector::buildings;
    if (v == "electricity") return Sector::electricity;
    if (v == "industry") return Sector::industry;
    if (v == "transport") return Sector::transport;
    throw input_error("unknown sector '" + s +
                      "' (expected buildings, electricity, industry or transport)");
}

std::string to_string(Pollutant p) {
    switch (p) {
        case Pollutant::NOx: return "NOx";
        case Pollutant::CO: return "CO";
        case Pollutant::VOCs: return "VOCs";
    }
    return "?";
}

std::string to_string(Sector s) {
    switch (s) {
        case Sector::buildings: return "buildings";
        case Sector::electricity: return "electricity";
        case Sector::industry: return "industry";
        case Sector::transport: return "transport";
    }
    return "?";
}

std::string sector_abbrev(Sector s) {
    switch (s) {
        case Sector::buildings: return "bui.";
        case Sector::electricity: return "ele.";
        case Sector::industry: return "ind.";
        case Sector::transport: return "tra.";
    }
    return "?";
}

SeriesKey parse_series_key(const std::string& s) {
    auto dot = s.find('.');
    if (dot == std::string::npos)
        throw input_error("bad series key '" + s + "' (expected pollutant.sector)");
    return {parse_pollutant(s.substr(0, dot)), parse_sector(s.substr(dot + 1))};
}

int PanelDataset::country_index(const std::string& iso3) const {
    for (int i = 0; i < n_countries(); ++i)
        if (countries[i].iso3 == iso3) return i;
    throw input_error("unknown country '" + iso3 + "'");
}

std::vector<std::string> PanelDataset::groups() const {
    std::set<std::string> g;
    for (const auto& c : countries) g.insert(c.group());
    return {g.begin(), g.end()};
}

namespace {

void check_positive(const Eigen::MatrixXd& m, const std::string& what,
                    const PanelDataset& data) {
    for (int i = 0; i < m.rows(); ++i)
        for (int t = 0; t < m.cols(); ++t) {
            double v = m(i, t);
            if (!std::isfinite(v) || v <= 0.0)
                throw input_error(what + " must be positive and finite: " +
                                  data.countries[i].iso3 + " " +
                                  std::to_string(data.year_first + t) + " has " +
                                  format_double(v));
        }
}

}  // namespace

void PanelDataset::validate() const {
    if (countries.empty()) throw input_error("panel has no countries");
    if (year_last < year_first + 1) throw input_error("panel needs at least two years");
    const long N = n_countries(), T = n_years();
    auto shape = [&](const Eigen::MatrixXd& m, const std::string& what) {
        if (m.rows() != N || m.cols() != T)
            throw input_error(what + " matrix has wrong shape");
    };
    shape(emissions, "emissions");
    shape(gdp, "gdp");
    shape(population, "population");
    shape(hdd, "hdd");
    shape(cdd, "cdd");
    check_positive(emissions, "emissions", *this);
    check_positive(gdp, "gdp", *this);
    check_positive(population, "population", *this);
    check_positive(hdd, "hdd", *this);
    check_positive(cdd, "cdd", *this);
    for (size_t i = 1; i < countries.size(); ++i)
        if (!(countries[i - 1].iso3 < countries[i].iso3))
            throw input_error("countries must be sorted and distinct");
    for (const auto& [name, m] : eu_controls) {
        shape(m, "eu control " + name);
        for (int i = 0; i < m.rows(); ++i)
            for (int t = 0; t < m.cols(); ++t)
                if (m(i, t) != 0.0 && m(i, t) != 1.0)
                    throw input_error("eu control " + name + " must be 0/1");
    }
}

PanelDataset PanelDataset::subset(const std::vector<int>& country_indices) const {
    PanelDataset out;
    out.series = series;
    out.year_first = year_first;
    out.year_last = year_last;
    std::vector<int> idx = country_indices;
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    const int T = n_years();
    auto take = [&](const Eigen::MatrixXd& m) {
        Eigen::MatrixXd r(idx.size(), T);
        for (size_t k = 0; k < idx.size(); ++k) r.row(k) = m.row(idx[k]);
        return r;
    };
    for (int i : idx) {
        if (i < 0 || i >= n_countries()) throw input_error("country index out of range");
        out.countries.push_back(countries[i]);
    }
    out.emissions = take(emissions);
    out.gdp = take(gdp);
    out.population = take(population);
    out.hdd = take(hdd);
    out.cdd = take(cdd);
    for (const auto& [name, m] : eu_controls) out.eu_controls.emplace_back(name, take(m));
    return out;
}

std::string indicator_name(const PanelDataset& data, const Indicator& ind) {
    const char* prefix = ind.kind == IndicatorKind::step ? "step:" : "imp:";
    return prefix + data.countries[ind.country].iso3 + ":" + std::to_string(ind.year);
}

std::vector<Indicator> all_step_candidates(const PanelDataset& data) {
    std::vector<Indicator> out;
    out.reserve(static_cast<size_t>(data.n_countries()) * (data.n_years() - 1));
    for (int j = 0; j < data.n_countries(); ++j)
        for (int s = data.year_first + 1; s <= data.year_last; ++s)
            out.push_back({IndicatorKind::step, j, s});
    return out;
}

std::vector<Indicator> all_impulse_candidates(const PanelDataset& data) {
    std::vector<Indicator> out;
    out.reserve(static_cast<size_t>(data.n_countries()) * data.n_years());
    for (int j = 0; j < data.n_countries(); ++j)
        for (int s = data.year_first; s <= data.year_last; ++s)
            out.push_back({IndicatorKind::impulse, j, s});
    return out;
}

Eigen::VectorXd indicator_column(const PanelDataset& data, const Indicator& ind) {
    if (ind.country < 0 || ind.country >= data.n_countries())
        throw input_error("indicator country out of range");
    const int lo = ind.kind == IndicatorKind::step ? data.year_first + 1 : data.year_first;
    if (ind.year < lo || ind.year > data.year_last)
        throw input_error("indicator year " + std::to_string(ind.year) + " out of range");
    Eigen::VectorXd col = Eigen::VectorXd::Zero(data.n_rows());
    const int s = data.year_index(ind.year);
    if (ind.kind == IndicatorKind::step) {
        for (int t = s; t < data.n_years(); ++t) col[data.row(ind.country, t)] = 1.0;
    } else {
        col[data.row(ind.country, s)] = 1.0;
    }
    return col;
}

DesignMatrix build_design(const PanelDataset& data, const std::vector<Indicator>& candidates) {
    data.validate();
    {
        std::set<Indicator> seen;
        for (const auto& c : candidates)
            if (!seen.insert(c).second)
                throw input_error("duplicate candidate indicator " + indicator_name(data, c));
    }
    const int N = data.n_countries();
    const int T = data.n_years();
    const long n = data.n_rows();
    const auto group_labels = data.groups();
    const int G = static_cast<int>(group_labels.size());

    DesignMatrix d;
    d.y.resize(n);
    d.row_country.resize(n);
    d.row_year.resize(n);
    for (int i = 0; i < N; ++i)
        for (int t = 0; t < T; ++t) {
            const long r = data.row(i, t);
            d.y[r] = std::log(data.emissions(i, t));
            d.row_country[r] = i;
            d.row_year[r] = data.year_first + t;
        }

    const int n_cols = N + G * (T - 1) + 5 + static_cast<int>(data.eu_controls.size()) + N +
                       static_cast<int>(candidates.size());
    d.X = Eigen::MatrixXd::Zero(n, n_cols);
    d.columns.reserve(n_cols);
    int c = 0;

    for (int i = 0; i < N; ++i, ++c) {
        for (int t = 0; t < T; ++t) d.X(data.row(i, t), c) = 1.0;
        d.columns.push_back({ColumnKind::country_fe, "fe:" + data.countries[i].iso3, true, i, -1});
    }
    std::map<std::string, int> group_of;
    for (int g = 0; g < G; ++g) group_of[group_labels[g]] = g;
    for (int g = 0; g < G; ++g)
        for (int t = 1; t < T; ++t, ++c) {
            for (int i = 0; i < N; ++i)
                if (group_of.at(data.countries[i].group()) == g) d.X(data.row(i, t), c) = 1.0;
            d.columns.push_back({ColumnKind::group_year_fe,
                                 "gy:" + group_labels[g] + ":" + std::to_string(data.year_first + t),
                                 true, -1, data.year_first + t});
        }
    {
        const char* names[5] = {"ln_gdp", "ln_gdp2", "ln_pop", "ln_hdd", "ln_cdd"};
        for (int k = 0; k < 5; ++k)
            d.columns.push_back({ColumnKind::covariate, names[k], true, -1, -1});
        for (int i = 0; i < N; ++i)
            for (int t = 0; t < T; ++t) {
                const long r = data.row(i, t);
                const double lg = std::log(data.gdp(i, t));
                d.X(r, c + 0) = lg;
                d.X(r, c + 1) = lg * lg;
                d.X(r, c + 2) = std::log(data.population(i, t));
                d.X(r, c + 3) = std::log(data.hdd(i, t));
                d.X(r, c + 4) = std::log(data.cdd(i, t));
            }
        c += 5;
    }
    for (const auto& [name, m] : data.eu_controls) {
        for (int i = 0; i < N; ++i) {
            if (!data.countries[i].eu_member) continue;
            for (int t = 0; t < T; ++t) d.X(data.row(i, t), c) = m(i, t);
        }
        d.columns.push_back({ColumnKind::eu_control, "eu:" + name, true, -1, -1});
        ++c;
    }
    const double t_mid = (T - 1) / 2.0;
    for (int i = 0; i < N; ++i, ++c) {
        for (int t = 0; t < T; ++t) d.X(data.row(i, t), c) = t - t_mid;
        d.columns.push_back({ColumnKind::trend, "trend:" + data.countries[i].iso3, true, i, -1});
    }
    d.n_forced = c;

    for (const auto& ind : candidates) {
        d.X.col(c) = indicator_column(data, ind);
        d.columns.push_back({ind.kind == IndicatorKind::step ? ColumnKind::step
                                                             : ColumnKind::impulse,
                             indicator_name(data, ind), false, ind.country, ind.year});
        ++c;
    }
    return d;
}

std::optional<int> DesignMatrix::find_column(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i].name == name) return static_cast<int>(i);
    return std::nullopt;
}

PanelDataset load_panel(const std::string& emissions_file, const std::string& covariates_file,
                        const std::string& groups_file, const std::string& eu_controls_file,
                        const SeriesKey& series, const LoadOptions& options) {
    CsvTable em = read_csv(emissions_file);
    CsvTable cov = read_csv(covariates_file);
    CsvTable grp = read_csv(groups_file);
    CsvTable eu = read_csv(eu_controls_file);

    const int em_iso = em.col("country_iso3"), em_year = em.col("year"),
              em_sec = em.col("sector"), em_pol = em.col("pollutant"),
              em_val = em.col("emissions_t");
    std::map<std::pair<std::string, int>, double> em_cells;
    int data_min = 0, data_max = 0;
    bool any = false;
    for (const auto& r : em.rows) {
        if (parse_pollutant(r[em_pol]) != series.pollutant ||
            parse_sector(r[em_sec]) != series.sector)
            continue;
        const std::string iso = trim(r[em_iso]);
        const int year = static_cast<int>(to_long(r[em_year], "year"));
        if (!em_cells.emplace(std::make_pair(iso, year), to_double(r[em_val], "emissions_t"))
                 .second)
            throw input_error("duplicate emissions row for " + iso + " " + std::to_string(year) +
                              " in " + series.label());
        data_min = any ? std::min(data_min, year) : year;
        data_max = any ? std::max(data_max, year) : year;
        any = true;
    }
    if (!any) throw input_error("no emissions rows for series " + series.label());

    int y0 = options.year_min.value_or(std::max(data_min, 2000));
    int y1 = options.year_max.value_or(std::min(data_max, 2021));
    if (y1 <= y0)
        throw input_error("empty year window [" + std::to_string(y0) + ", " +
                          std::to_string(y1) + "] for " + series.label());

    const int g_iso = grp.col("country_iso3"), g_grp = grp.col("group"),
              g_eu = grp.col("eu_member");
    std::map<std::string, CountryInfo> info;
    for (const auto& r : grp.rows) {
        CountryInfo ci;
        ci.iso3 = trim(r[g_iso]);
        const std::string label = lower(trim(r[g_grp]));
        if (label == "developed") ci.developed = true;
        else if (label == "developing") ci.developed = false;
        else throw input_error("unknown group '" + r[g_grp] + "' for " + ci.iso3);
        ci.eu_member = parse_bool(r[g_eu], "eu_member");
        if (!info.emplace(ci.iso3, ci).second)
            throw input_error("duplicate groups row for " + ci.iso3);
    }

    const int c_iso = cov.col("country_iso3"), c_year = cov.col("year"),
              c_gdp = cov.col("gdp_usd2015"), c_pop = cov.col("population"),
              c_hdd = cov.col("hdd16"), c_cdd = cov.col("cdd18");
    std::map<std::pair<std::string, int>, std::array<double, 4>> cov_cells;
    for (const auto& r : cov.rows) {
        const std::string iso = trim(r[c_iso]);
        const int year = static_cast<int>(to_long(r[c_year], "year"));
        std::array<double, 4> v = {to_double(r[c_gdp], "gdp_usd2015"),
                                   to_double(r[c_pop], "population"),
                                   to_double(r[c_hdd], "hdd16"), to_double(r[c_cdd], "cdd18")};
        if (!cov_cells.emplace(std::make_pair(iso, year), v).second)
            throw input_error("duplicate covariates row for " + iso + " " +
                              std::to_string(year));
    }

    std::set<std::string> iso_set;
    for (const auto& [key, v] : em_cells) iso_set.insert(key.first);

    PanelDataset data;
    data.series = series;
    data.year_first = y0;
    data.year_last = y1;
    const int T = y1 - y0 + 1;

    std::vector<std::string> kept;
    std::vector<std::string> missing;
    for (const std::string& iso : iso_set) {
        std::vector<std::string> gaps;
        for (int year = y0; year <= y1; ++year) {
            if (!em_cells.count({iso, year})) gaps.push_back(iso + ":" + std::to_string(year) + ":emissions");
            if (!cov_cells.count({iso, year})) gaps.push_back(iso + ":" + std::to_string(year) + ":covariates");
        }
        if (!info.count(iso)) gaps.push_back(iso + ":groups");
        if (gaps.empty()) {
            kept.push_back(iso);
        } else {
            missing.insert(missing.end(), gaps.begin(), gaps.end());
            if (options.drop_unbalanced)
                data.load_warnings.push_back("dropped " + iso + " (" +
                                             std::to_string(gaps.size()) + " missing cells)");
        }
    }
    if (!missing.empty() && !options.drop_unbalanced) {
        std::ostringstream msg;
        msg << "unbalanced panel for " << series.label() << ": " << missing.size()
            << " missing cells (";
        for (size_t i = 0; i < missing.size() && i < 5; ++i) msg << (i ? ", " : "") << missing[i];
        if (missing.size() > 5) msg << ", ...";
        msg << "); pass drop_unbalanced to drop affected countries";
        throw input_error(msg.str());
    }
    if (kept.empty()) throw input_error("no balanced countries for series " + series.label());

    const int N = static_cast<int>(kept.size());
    data.emissions.resize(N, T);
    data.gdp.resize(N, T);
    data.population.resize(N, T);
    data.hdd.resize(N, T);
    data.cdd.resize(N, T);
    for (int i = 0; i < N; ++i) {
        data.countries.push_back(info.at(kept[i]));
        for (int year = y0; year <= y1; ++year) {
            const int t = year - y0;
            data.emissions(i, t) = em_cells.at({kept[i], year});
            const auto& v = cov_cells.at({kept[i], year});
            data.gdp(i, t) = v[0];
            data.population(i, t) = v[1];
            data.hdd(i, t) = v[2];
            data.cdd(i, t) = v[3];
        }
    }

    const int e_name = eu.col("control_name"), e_iso = eu.col("country_iso3"),
              e_year = eu.col("year"), e_val = eu.col("value");
    std::map<std::string, int> eu_index;
    for (const auto& r : eu.rows) {
        const std::string name = trim(r[e_name]);
        const std::string iso = trim(r[e_iso]);
        const int year = static_cast<int>(to_long(r[e_year], "year"));
        auto it = std::find(kept.begin(), kept.end(), iso);
        if (it == kept.end()) continue;
        if (year < y0 || year > y1) continue;
        auto [pos, inserted] = eu_index.emplace(name, static_cast<int>(data.eu_controls.size()));
        if (inserted) data.eu_controls.emplace_back(name, Eigen::MatrixXd::Zero(N, T));
        data.eu_controls[pos->second].second(it - kept.begin(), year - y0) =
            to_double(r[e_val], "value");
    }
    std::sort(data.eu_controls.begin(), data.eu_controls.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    data.validate();
    return data;
}

std::vector<SeriesKey> list_series(const std::string& emissions_file) {
    CsvTable em = read_csv(emissions_file);
    const int em_sec = em.col("sector"), em_pol = em.col("pollutant");
    std::set<SeriesKey> keys;
    for (const auto& r : em.rows) keys.insert({parse_pollutant(r[em_pol]), parse_sector(r[em_sec])});
    return {keys.begin(), keys.end()};
}

}  // namespace breakscope
