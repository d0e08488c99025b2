#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace breakscope {

enum class Pollutant { NOx, CO, VOCs };
enum class Sector { buildings, electricity, industry, transport };

Pollutant parse_pollutant(const std::string& s);
Sector parse_sector(const std::string& s);
std::string to_string(Pollutant p);
std::string to_string(Sector s);
std::string sector_abbrev(Sector s);  // bui. / ele. / ind. / tra.

/// One (pollutant, sector) emission series.
struct SeriesKey {
    Pollutant pollutant = Pollutant::NOx;
    Sector sector = Sector::transport;

    std::string label() const { return to_string(pollutant) + "." + to_string(sector); }
    bool operator==(const SeriesKey&) const = default;
    bool operator<(const SeriesKey& o) const {
        if (pollutant != o.pollutant) return pollutant < o.pollutant;
        return sector < o.sector;
    }
};

SeriesKey parse_series_key(const std::string& s);  // "NOx.transport"

struct CountryInfo {
    std::string iso3;
    bool developed = true;
    bool eu_member = false;

    std::string group() const { return developed ? "developed" : "developing"; }
};

/// Balanced country x year panel for one series. Countries are sorted by
/// ISO code and years are consecutive; rows everywhere downstream are
/// ordered (country asc, year asc). Matrices are country x year.
struct PanelDataset {
    SeriesKey series;
    std::vector<CountryInfo> countries;
    int year_first = 0;
    int year_last = 0;

    Eigen::MatrixXd emissions;   // tonnes/year, > 0
    Eigen::MatrixXd gdp;         // constant-2015 USD, > 0
    Eigen::MatrixXd population;  // persons, > 0
    Eigen::MatrixXd hdd;         // heating degree-days (base 16C), > 0
    Eigen::MatrixXd cdd;         // cooling degree-days (base 18C), > 0
    std::vector<std::pair<std::string, Eigen::MatrixXd>> eu_controls;  // 0/1 series

    std::vector<std::string> load_warnings;

    int n_countries() const { return static_cast<int>(countries.size()); }
    int n_years() const { return year_last - year_first + 1; }
    long n_rows() const { return static_cast<long>(n_countries()) * n_years(); }
    int year_index(int year) const { return year - year_first; }
    long row(int country, int year_idx) const {
        return static_cast<long>(country) * n_years() + year_idx;
    }
    int country_index(const std::string& iso3) const;
    std::vector<std::string> groups() const;  // distinct group labels, sorted

    /// Enforce the dataset invariants (positivity, shapes, group labels).
    void validate() const;

    /// Restrict to a subset of country indices (used by --per-group runs).
    PanelDataset subset(const std::vector<int>& country_indices) const;
};

enum class IndicatorKind { step, impulse };

/// A candidate break/outlier indicator: a step 1{i=j, t>=s} or an impulse
/// 1{i=j, t=s}. `year` is the calendar year s; steps require s > t_first.
struct Indicator {
    IndicatorKind kind = IndicatorKind::step;
    int country = 0;
    int year = 0;

    bool operator==(const Indicator&) const = default;
    bool operator<(const Indicator& o) const {
        if (kind != o.kind) return kind < o.kind;
        if (country != o.country) return country < o.country;
        return year < o.year;
    }
};

using CandidateStep = Indicator;

std::string indicator_name(const PanelDataset& data, const Indicator& ind);

/// All N x (T-1) candidate steps, ordered by (country, year).
std::vector<Indicator> all_step_candidates(const PanelDataset& data);
/// All N x T candidate impulses.
std::vector<Indicator> all_impulse_candidates(const PanelDataset& data);

enum class ColumnKind { country_fe, group_year_fe, covariate, eu_control, trend, step, impulse };

struct DesignColumn {
    ColumnKind kind;
    std::string name;
    bool forced = true;
    int country = -1;  // indicator / fe / trend provenance
    int year = -1;     // indicator / group_year provenance
};

/// Response plus regressor matrix with column provenance. Forced columns
/// come first; candidate indicator columns follow, sorted by (kind, j, s).
struct DesignMatrix {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<DesignColumn> columns;
    int n_forced = 0;
    std::vector<int> row_country;
    std::vector<int> row_year;  // calendar years

    int n_cols() const { return static_cast<int>(columns.size()); }
    long n_rows() const { return X.rows(); }
    std::optional<int> find_column(const std::string& name) const;
};

/// Single indicator column in the dataset's fixed row order.
Eigen::VectorXd indicator_column(const PanelDataset& data, const Indicator& ind);

/// The saturated design of the panel model: response ln(emissions); forced
/// country dummies, group-year dummies (reference year dropped per group),
/// ln covariates, EU controls, centered country trends; then the requested
/// candidate indicator columns.
DesignMatrix build_design(const PanelDataset& data, const std::vector<Indicator>& candidates);

struct LoadOptions {
    bool drop_unbalanced = false;
    /// Explicit year window; by default the range is clipped to 2000-2021
    /// when the files cover it.
    std::optional<int> year_min;
    std::optional<int> year_max;
};

PanelDataset load_panel(const std::string& emissions_file, const std::string& covariates_file,
                        const std::string& groups_file, const std::string& eu_controls_file,
                        const SeriesKey& series, const LoadOptions& options = {});

/// Distinct (pollutant, sector) pairs present in an emissions file.
std::vector<SeriesKey> list_series(const std::string& emissions_file);

}  // namespace breakscope
