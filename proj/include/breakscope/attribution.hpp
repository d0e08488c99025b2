#pragma once

#include "breakscope/effects.hpp"
#include "breakscope/panel.hpp"

#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace breakscope {

enum class PolicyAction { adoption, tightening };
enum class PolicyCategory { information, pricing, regulation, subsidy };

std::string to_string(PolicyAction a);
std::string to_string(PolicyCategory c);
PolicyAction parse_action(const std::string& s);
PolicyCategory parse_category(const std::string& s);

struct PolicyEvent {
    std::string country_iso3;  // adopting country; EU-wide events match all members
    int year = 0;
    Sector sector = Sector::transport;
    std::string instrument;  // normalized lower-case
    PolicyAction action = PolicyAction::adoption;
    PolicyCategory category = PolicyCategory::regulation;
    bool eu_wide = false;
};

/// Instrument name -> category. Shipped defaults cover the common
/// instruments; a keyword fallback handles close variants; anything else
/// is a hard error so silent misclassification cannot happen.
using CategoryTable = std::map<std::string, PolicyCategory>;

CategoryTable default_categories();
/// Overlay rows from a CSV (instrument,category) onto a table.
void merge_categories(CategoryTable& table, const std::string& csv_path);
PolicyCategory categorize(const CategoryTable& table, const std::string& instrument);
bool is_pricing_instrument(const CategoryTable& table, const std::string& instrument);

/// Merge the three tax-type instruments under one label for the
/// single-vs-mix comparison; other instruments pass through.
std::string taxation_label(const std::string& instrument);

/// policies.csv: country_iso3,year,sector,instrument,action,eu_wide.
std::vector<PolicyEvent> load_policies(const std::string& path, const CategoryTable& table);

/// Within each (country, series), a break whose timing interval lies fully
/// inside another break's interval is a duplicate: the one with the larger
/// absolute effect survives. Applied to a fixed point, so the result is
/// idempotent; input order of survivors is preserved.
std::vector<BreakEstimate> dedupe_breaks(const std::vector<BreakEstimate>& breaks);

struct MatchedBreak {
    BreakEstimate brk;
    std::vector<PolicyEvent> events;
    std::set<PolicyCategory> categories;
    bool includes_pricing = false;

    bool matched() const { return !events.empty(); }
    bool single_type() const { return categories.size() <= 1; }
};

/// An event matches a break when sector agrees, the event year falls in
/// the break's attribution window, and the event's country is the break's
/// country (or the event is EU-wide and the country an EU member).
std::vector<MatchedBreak> match_policies(const std::vector<BreakEstimate>& breaks,
                                         const std::vector<PolicyEvent>& events,
                                         const std::vector<CountryInfo>& countries);

struct SummaryRow {
    std::string instrument;
    int frequency = 0;  // matched breaks in which the instrument appears
    double mean_effect = 0.0;  // mean of exp(tau)-1 across those breaks
    std::string typology;      // developed-dominant | developing-dominated | equivalent
    std::array<std::string, 3> cases;  // top-3 by |effect|: "ISO.year (pct%) sec."
};

std::vector<SummaryRow> summarize_instruments(const std::vector<MatchedBreak>& matches,
                                              const std::vector<CountryInfo>& countries);

struct MixRow {
    std::string instrument;  // after taxation grouping
    std::optional<double> alone_pct;
    std::optional<double> mixed_pct;
    std::optional<double> with_pricing_pct;
    int n_alone = 0, n_mixed = 0, n_with_pricing = 0;
};

std::vector<MixRow> mix_vs_single(const std::vector<MatchedBreak>& matches);

struct ComboRow {
    Sector sector = Sector::transport;
    std::string group;
    std::string combo;  // "+"-joined category names, alphabetical
    int count = 0;
    double share = 0.0;  // of matched breaks in this (sector, group)
};

std::vector<ComboRow> combo_shares(const std::vector<MatchedBreak>& matches,
                                   const std::vector<CountryInfo>& countries);

}  // namespace breakscope
