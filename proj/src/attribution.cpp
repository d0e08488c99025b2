#include "breakscope/attribution.hpp"

#include "breakscope/csv.hpp"
#include "breakscope/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace breakscope {

std::string to_string(PolicyAction a) {
    return a == PolicyAction::adoption ? "adoption" : "tightening";
}

std::string to_string(PolicyCategory c) {
    switch (c) {
        case PolicyCategory::information: return "information";
        case PolicyCategory::pricing: return "pricing";
        case PolicyCategory::regulation: return "regulation";
        case PolicyCategory::subsidy: return "subsidy";
    }
    return "?";
}

PolicyAction parse_action(const std::string& s) {
    const std::string v = lower(trim(s));
    if (v == "adoption") return PolicyAction::adoption;
    if (v == "tightening") return PolicyAction::tightening;
    throw input_error("unknown policy action '" + s + "'");
}

PolicyCategory parse_category(const std::string& s) {
    const std::string v = lower(trim(s));
    if (v == "information") return PolicyCategory::information;
    if (v == "pricing") return PolicyCategory::pricing;
    if (v == "regulation") return PolicyCategory::regulation;
    if (v == "subsidy") return PolicyCategory::subsidy;
    throw input_error("unknown policy category '" + s + "'");
}

CategoryTable default_categories() {
    using C = PolicyCategory;
    return {
        {"energy label", C::information},
        {"labelling scheme", C::information},
        {"information campaign", C::information},
        {"carbon tax", C::pricing},
        {"fuel tax", C::pricing},
        {"emission trading scheme", C::pricing},
        {"fossil fuel subsidy reform", C::pricing},
        {"congestion charge", C::pricing},
        {"ban and phase-out", C::regulation},
        {"building code", C::regulation},
        {"performance standard", C::regulation},
        {"energy efficiency mandate", C::regulation},
        {"renewable auction", C::regulation},
        {"renewable expansion planning", C::regulation},
        {"air quality standard", C::regulation},
        {"adoption subsidy", C::subsidy},
        {"financing mechanism", C::subsidy},
        {"public expenditure", C::subsidy},
        {"public expenditure for rail", C::subsidy},
    };
}

void merge_categories(CategoryTable& table, const std::string& csv_path) {
    CsvTable csv = read_csv(csv_path);
    const int c_inst = csv.col("instrument"), c_cat = csv.col("category");
    for (const auto& r : csv.rows)
        table[lower(trim(r[c_inst]))] = parse_category(r[c_cat]);
}

namespace {

bool contains_word(const std::string& s, const char* w) {
    return s.find(w) != std::string::npos;
}

}  // namespace

PolicyCategory categorize(const CategoryTable& table, const std::string& instrument) {
    const std::string name = lower(trim(instrument));
    auto it = table.find(name);
    if (it != table.end()) return it->second;
    if (contains_word(name, "tax") || contains_word(name, "trading") ||
        contains_word(name, "subsidy reform") || contains_word(name, "pricing") ||
        contains_word(name, "charge"))
        return PolicyCategory::pricing;
    if (contains_word(name, "label") || contains_word(name, "information") ||
        contains_word(name, "campaign"))
        return PolicyCategory::information;
    if (contains_word(name, "subsid") || contains_word(name, "financ") ||
        contains_word(name, "expenditure") || contains_word(name, "grant"))
        return PolicyCategory::subsidy;
    if (contains_word(name, "ban") || contains_word(name, "standard") ||
        contains_word(name, "code") || contains_word(name, "mandate") ||
        contains_word(name, "auction") || contains_word(name, "phase-out") ||
        contains_word(name, "planning") || contains_word(name, "limit"))
        return PolicyCategory::regulation;
    throw input_error("no category mapping for instrument '" + instrument +
                      "'; add it to the categories table");
}

bool is_pricing_instrument(const CategoryTable& table, const std::string& instrument) {
    return categorize(table, instrument) == PolicyCategory::pricing;
}

std::string taxation_label(const std::string& instrument) {
    const std::string name = lower(trim(instrument));
    if (name == "carbon tax" || name == "fuel tax" || name == "emission trading scheme")
        return "taxation";
    return name;
}

std::vector<PolicyEvent> load_policies(const std::string& path, const CategoryTable& table) {
    CsvTable csv = read_csv(path);
    const int c_iso = csv.col("country_iso3"), c_year = csv.col("year"),
              c_sec = csv.col("sector"), c_inst = csv.col("instrument"),
              c_act = csv.col("action"), c_eu = csv.col("eu_wide");
    std::vector<PolicyEvent> out;
    out.reserve(csv.rows.size());
    for (const auto& r : csv.rows) {
        PolicyEvent e;
        e.country_iso3 = trim(r[c_iso]);
        e.year = static_cast<int>(to_long(r[c_year], "year"));
        e.sector = parse_sector(r[c_sec]);
        e.instrument = lower(trim(r[c_inst]));
        e.action = parse_action(r[c_act]);
        e.category = categorize(table, e.instrument);
        e.eu_wide = parse_bool(r[c_eu], "eu_wide");
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

bool ci_contains(const BreakEstimate& outer, const BreakEstimate& inner) {
    return outer.ci_lo <= inner.ci_lo && inner.ci_hi <= outer.ci_hi;
}

bool same_scope(const BreakEstimate& a, const BreakEstimate& b) {
    return a.country_iso3 == b.country_iso3 && a.series == b.series;
}

/// The duplicate to drop out of a containment pair.
size_t dedupe_loser(const std::vector<BreakEstimate>& breaks, size_t i, size_t j) {
    const double ei = std::abs(breaks[i].effect()), ej = std::abs(breaks[j].effect());
    if (ei != ej) return ei < ej ? i : j;
    return breaks[i].year <= breaks[j].year ? j : i;
}

}  // namespace

std::vector<BreakEstimate> dedupe_breaks(const std::vector<BreakEstimate>& breaks) {
    std::vector<bool> alive(breaks.size(), true);
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < breaks.size() && !changed; ++i) {
            if (!alive[i]) continue;
            for (size_t j = i + 1; j < breaks.size() && !changed; ++j) {
                if (!alive[j] || !same_scope(breaks[i], breaks[j])) continue;
                if (ci_contains(breaks[i], breaks[j]) || ci_contains(breaks[j], breaks[i])) {
                    alive[dedupe_loser(breaks, i, j)] = false;
                    changed = true;
                }
            }
        }
    }
    std::vector<BreakEstimate> out;
    for (size_t i = 0; i < breaks.size(); ++i)
        if (alive[i]) out.push_back(breaks[i]);
    return out;
}

std::vector<MatchedBreak> match_policies(const std::vector<BreakEstimate>& breaks,
                                         const std::vector<PolicyEvent>& events,
                                         const std::vector<CountryInfo>& countries) {
    std::map<std::string, CountryInfo> info;
    for (const auto& c : countries) info[c.iso3] = c;

    std::vector<MatchedBreak> out;
    out.reserve(breaks.size());
    for (const auto& brk : breaks) {
        auto it = info.find(brk.country_iso3);
        if (it == info.end()) throw input_error("break country '" + brk.country_iso3 +
                                                "' missing from the country table");
        const bool eu_member = it->second.eu_member;
        MatchedBreak m;
        m.brk = brk;
        for (const auto& e : events) {
            if (e.sector != brk.series.sector) continue;
            if (e.year < brk.window_lo || e.year > brk.window_hi) continue;
            if (e.country_iso3 != brk.country_iso3 && !(e.eu_wide && eu_member)) continue;
            m.events.push_back(e);
            m.categories.insert(e.category);
            if (e.category == PolicyCategory::pricing) m.includes_pricing = true;
        }
        out.push_back(std::move(m));
    }
    return out;
}

namespace {

std::string case_label(const BreakEstimate& b) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s.%d (%.1f%%) %s", b.country_iso3.c_str(), b.year,
                  b.effect_pct(), sector_abbrev(b.series.sector).c_str());
    return buf;
}

}  // namespace

std::vector<SummaryRow> summarize_instruments(const std::vector<MatchedBreak>& matches,
                                              const std::vector<CountryInfo>& countries) {
    std::map<std::string, bool> developed;
    for (const auto& c : countries) developed[c.iso3] = c.developed;

    std::map<std::string, std::vector<const MatchedBreak*>> by_instrument;
    for (const auto& m : matches) {
        if (!m.matched()) continue;
        std::set<std::string> instruments;
        for (const auto& e : m.events) instruments.insert(e.instrument);
        for (const auto& inst : instruments) by_instrument[inst].push_back(&m);
    }

    std::vector<SummaryRow> rows;
    for (const auto& [inst, list] : by_instrument) {
        SummaryRow row;
        row.instrument = inst;
        row.frequency = static_cast<int>(list.size());
        int n_developed = 0;
        double sum = 0.0;
        for (const auto* m : list) {
            sum += m->brk.effect();
            if (developed.at(m->brk.country_iso3)) ++n_developed;
        }
        row.mean_effect = sum / row.frequency;
        const int n_developing = row.frequency - n_developed;
        if (3 * n_developed >= 2 * row.frequency) row.typology = "developed-dominant";
        else if (3 * n_developing >= 2 * row.frequency) row.typology = "developing-dominated";
        else row.typology = "equivalent";

        std::vector<const MatchedBreak*> ranked = list;
        std::sort(ranked.begin(), ranked.end(), [](const MatchedBreak* a, const MatchedBreak* b) {
            const double ea = std::abs(a->brk.effect()), eb = std::abs(b->brk.effect());
            if (ea != eb) return ea > eb;
            if (a->brk.country_iso3 != b->brk.country_iso3)
                return a->brk.country_iso3 < b->brk.country_iso3;
            return a->brk.year < b->brk.year;
        });
        for (size_t k = 0; k < 3 && k < ranked.size(); ++k)
            row.cases[k] = case_label(ranked[k]->brk);
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
        if (a.frequency != b.frequency) return a.frequency > b.frequency;
        return a.instrument < b.instrument;
    });
    return rows;
}

std::vector<MixRow> mix_vs_single(const std::vector<MatchedBreak>& matches) {
    struct Cell {
        double sum = 0.0;
        int n = 0;
        void add(double v) { sum += v; ++n; }
    };
    struct Acc {
        Cell alone, mixed, with_pricing;
    };
    std::map<std::string, Acc> acc;

    for (const auto& m : matches) {
        if (!m.matched()) continue;
        std::set<std::string> labels;
        for (const auto& e : m.events) labels.insert(taxation_label(e.instrument));
        const double pct = m.brk.effect_pct();
        for (const auto& label : labels) {
            Acc& a = acc[label];
            if (labels.size() == 1) a.alone.add(pct);
            else a.mixed.add(pct);
            const bool pricing_partner = std::any_of(
                m.events.begin(), m.events.end(), [&](const PolicyEvent& e) {
                    return e.category == PolicyCategory::pricing &&
                           taxation_label(e.instrument) != label;
                });
            if (pricing_partner) a.with_pricing.add(pct);
        }
    }

    std::vector<MixRow> rows;
    for (const auto& [label, a] : acc) {
        MixRow row;
        row.instrument = label;
        if (a.alone.n > 0) row.alone_pct = a.alone.sum / a.alone.n;
        if (a.mixed.n > 0) row.mixed_pct = a.mixed.sum / a.mixed.n;
        if (a.with_pricing.n > 0) row.with_pricing_pct = a.with_pricing.sum / a.with_pricing.n;
        row.n_alone = a.alone.n;
        row.n_mixed = a.mixed.n;
        row.n_with_pricing = a.with_pricing.n;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<ComboRow> combo_shares(const std::vector<MatchedBreak>& matches,
                                   const std::vector<CountryInfo>& countries) {
    std::map<std::string, std::string> group;
    for (const auto& c : countries) group[c.iso3] = c.group();

    std::map<std::pair<Sector, std::string>, std::map<std::string, int>> cells;
    for (const auto& m : matches) {
        if (!m.matched()) continue;
        std::string combo;
        for (const auto& c : m.categories) {
            if (!combo.empty()) combo += "+";
            combo += to_string(c);
        }
        cells[{m.brk.series.sector, group.at(m.brk.country_iso3)}][combo] += 1;
    }

    std::vector<ComboRow> rows;
    for (const auto& [cell, combos] : cells) {
        int total = 0;
        for (const auto& [combo, n] : combos) total += n;
        for (const auto& [combo, n] : combos) {
            ComboRow row;
            row.sector = cell.first;
            row.group = cell.second;
            row.combo = combo;
            row.count = n;
            row.share = static_cast<double>(n) / total;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace breakscope
