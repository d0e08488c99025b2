#include "breakscope/csv.hpp"
#include "breakscope/pipeline.hpp"
#include "breakscope/simgen.hpp"
#include "breakscope/util.hpp"
#include "breakscope/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

namespace fs = std::filesystem;
using namespace breakscope;
using ojson = nlohmann::ordered_json;

namespace {

std::uint64_t parse_seed_env(const std::string& s) {
    try {
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(trim(s), &pos, 10);
        if (pos != trim(s).size()) throw std::invalid_argument(s);
        return x;
    } catch (const std::exception&) {
        throw input_error("bad seed '" + s + "' in BREAKSCOPE_SEED");
    }
}

std::string pct1(double pct) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", pct);
    return buf;
}

/// Options shared by the analysis subcommands, layered over the config
/// file and the BREAKSCOPE_SEED fallback (flags > config file > env).
/// The same instance backs every subcommand; only the parsed one writes.
struct Flags {
    std::string config, emissions, covariates, groups, eu_controls, policies, categories;
    std::string series, pollutant, sector, breaks_file, out = "out";
    double gamma = 0.01;
    int block_size = 20, window = 2, jobs = 1, year_min = 0, year_max = 0;
    int max_outer = 10, max_paths = 8;
    std::uint64_t seed = 0;
    bool per_group = false, robust = false, drop_unbalanced = false;

    std::map<std::string, std::vector<CLI::Option*>> opts;

    void reg(const std::string& key, CLI::Option* o) { opts[key].push_back(o); }
    bool given(const std::string& key) const {
        const auto it = opts.find(key);
        if (it == opts.end()) return false;
        for (const CLI::Option* o : it->second)
            if (o->count() > 0) return true;
        return false;
    }

    void add_data(CLI::App* cmd) {
        reg("config", cmd->add_option("--config", config, "key=value config file (flags win)"));
        reg("emissions", cmd->add_option("--emissions", emissions, "emissions CSV"));
        reg("covariates", cmd->add_option("--covariates", covariates, "covariates CSV"));
        reg("groups", cmd->add_option("--groups", groups, "country groups CSV"));
        reg("eu_controls", cmd->add_option("--eu-controls", eu_controls, "EU policy controls CSV"));
        reg("drop_unbalanced",
            cmd->add_flag("--drop-unbalanced", drop_unbalanced,
                          "drop countries with missing cells instead of failing"));
        reg("year_min", cmd->add_option("--year-min", year_min, "first sample year"));
        reg("year_max", cmd->add_option("--year-max", year_max, "last sample year"));
        reg("series", cmd->add_option("--series", series,
                                      "comma-separated series, e.g. NOx.transport (default: all)"));
        reg("pollutant", cmd->add_option("--pollutant", pollutant,
                                         "pollutant of a single series (needs --sector)"));
        reg("sector", cmd->add_option("--sector", sector,
                                      "sector of a single series (needs --pollutant)"));
    }

    void add_selection(CLI::App* cmd) {
        reg("gamma", cmd->add_option("--gamma", gamma, "selection significance level"));
        reg("block_size", cmd->add_option("--block-size", block_size, "candidates per search block"));
        reg("seed", cmd->add_option("--seed", seed, "master seed (BREAKSCOPE_SEED as fallback)"));
        reg("jobs", cmd->add_option("--jobs", jobs, "worker threads"));
        reg("max_outer", cmd->add_option("--max-outer-iterations", max_outer,
                                         "outer search iteration cap"));
        reg("max_paths",
            cmd->add_option("--max-paths", max_paths, "elimination paths per search"));
    }

    void add_policies(CLI::App* cmd, bool required) {
        CLI::Option* o = cmd->add_option("--policies", policies, "policy events CSV");
        if (required) o->required();
        reg("policies", o);
        reg("categories", cmd->add_option("--categories", categories,
                                          "extra instrument,category rows (CSV)"));
    }

    void add_window(CLI::App* cmd) {
        reg("window", cmd->add_option("--window", window, "attribution window pad, years"));
    }

    void add_per_group(CLI::App* cmd) {
        reg("per_group", cmd->add_flag("--per-group", per_group,
                                       "run developed/developing separately"));
    }

    void add_out(CLI::App* cmd) {
        reg("out", cmd->add_option("--out", out, "output directory"));
    }

    void add_breaks_input(CLI::App* cmd) {
        reg("breaks", cmd->add_option("--breaks", breaks_file, "breaks CSV from a previous run")
                          ->required());
    }

    RunConfig build() const {
        RunConfig c;
        if (const char* env = std::getenv("BREAKSCOPE_SEED")) c.seed = parse_seed_env(env);
        if (given("config")) apply_config_file(c, config);
        if (given("emissions")) c.emissions_file = emissions;
        if (given("covariates")) c.covariates_file = covariates;
        if (given("groups")) c.groups_file = groups;
        if (given("eu_controls")) c.eu_controls_file = eu_controls;
        if (given("policies")) c.policies_file = policies;
        if (given("categories")) c.categories_file = categories;
        if (given("pollutant") != given("sector"))
            throw input_error("--pollutant and --sector go together");
        if (given("series")) c.series = parse_series_list(series);
        if (given("pollutant")) {
            if (given("series")) throw input_error("use either --series or --pollutant/--sector");
            c.series = {SeriesKey{parse_pollutant(pollutant), parse_sector(sector)}};
        }
        if (given("gamma")) c.gamma = gamma;
        if (given("block_size")) c.block_size = block_size;
        if (given("seed")) c.seed = seed;
        if (given("window")) c.window = window;
        if (given("per_group")) c.per_group = per_group;
        if (given("out")) c.out_dir = out;
        if (given("jobs")) c.jobs = jobs;
        if (given("robustness")) c.robustness = robust;
        if (given("drop_unbalanced")) c.drop_unbalanced = drop_unbalanced;
        if (given("year_min")) c.year_min = year_min;
        if (given("year_max")) c.year_max = year_max;
        if (given("max_outer")) c.max_outer_iterations = max_outer;
        if (given("max_paths")) c.max_paths = max_paths;
        return c;
    }
};

struct SliceRun {
    SeriesKey series;
    std::string group;
    PanelDataset data;
    SelectionResult selection;
};

std::vector<SliceRun> run_selection(const RunConfig& c) {
    std::vector<SeriesKey> keys = c.series;
    if (keys.empty()) keys = list_series(c.emissions_file);
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    if (keys.empty()) throw input_error("no series to analyze");

    std::vector<SliceRun> out;
    for (const auto& key : keys) {
        PanelDataset full = load_panel(c.emissions_file, c.covariates_file, c.groups_file,
                                       c.eu_controls_file, key, c.load_options());
        std::vector<SliceRun> slices;
        if (c.per_group) {
            for (const auto& g : full.groups()) {
                std::vector<int> idx;
                for (int i = 0; i < full.n_countries(); ++i)
                    if (full.countries[i].group() == g) idx.push_back(i);
                slices.push_back({key, g, full.subset(idx), {}});
            }
        } else {
            slices.push_back({key, "pooled", std::move(full), {}});
        }
        for (auto& s : slices) {
            s.selection = sis_search(s.data, c.selection_config(derive_seed(c.seed, key, s.group)));
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::string slice_label(const SliceRun& s) {
    return s.group == "pooled" ? s.series.label() : s.series.label() + " (" + s.group + ")";
}

void cmd_detect(const Flags& f) {
    const RunConfig c = f.build();
    c.validate();
    const auto slices = run_selection(c);
    std::ostringstream csv, trace;
    csv << "series_key,group,country,break_year\n";
    for (const auto& s : slices) {
        std::cout << slice_label(s) << ": " << s.selection.retained.size() << " break(s), "
                  << (s.selection.converged ? "converged" : "not converged") << " after "
                  << s.selection.outer_iterations << " outer iteration(s)\n";
        for (const auto& ind : s.selection.retained) {
            std::cout << "  " << indicator_name(s.data, ind) << "\n";
            csv << s.series.label() << ',' << s.group << ','
                << s.data.countries[ind.country].iso3 << ',' << ind.year << '\n';
        }
        trace << trace_records_jsonl(s.series, s.group, s.data, s.selection.trace);
    }
    ensure_writable_dir(c.out_dir);
    write_file_atomic((fs::path(c.out_dir) / "detected_breaks.csv").string(), csv.str());
    write_file_atomic((fs::path(c.out_dir) / "selection_trace.jsonl").string(), trace.str());
    std::cout << "wrote detected_breaks.csv and selection_trace.jsonl to " << c.out_dir << "\n";
}

void cmd_estimate(const Flags& f) {
    const RunConfig c = f.build();
    c.validate();
    const auto slices = run_selection(c);
    std::vector<BreakEstimate> all;
    for (const auto& s : slices) {
        const SparseFit sparse = fit_sparse(s.data, s.selection.retained, c.estimate_options());
        for (const auto& w : sparse.warnings)
            std::cerr << "warning: " << slice_label(s) << ": " << w << "\n";
        for (const auto& b : sparse.estimates) {
            std::cout << b.series.label() << " " << b.country_iso3 << " " << b.year
                      << ": tau=" << format_double(b.tau_hat) << " (se " << format_double(b.se)
                      << "), effect " << pct1(b.effect_pct()) << ", timing [" << b.ci_lo << ", "
                      << b.ci_hi << "], cumulative " << format_double(b.cum_reduction) << " t\n";
            all.push_back(b);
        }
    }
    ensure_writable_dir(c.out_dir);
    write_breaks_csv((fs::path(c.out_dir) / "breaks.csv").string(), all);
    std::cout << "wrote " << all.size() << " estimate(s) to " << c.out_dir << "/breaks.csv\n";
}

struct AttributionInputs {
    std::vector<BreakEstimate> deduped;
    std::vector<MatchedBreak> matched;
    std::vector<CountryInfo> countries;
};

AttributionInputs load_attribution(const Flags& f) {
    AttributionInputs in;
    in.deduped = dedupe_breaks(read_breaks_csv(f.breaks_file));
    in.countries = read_groups_csv(f.groups);
    std::vector<PolicyEvent> events;
    if (!f.policies.empty()) {
        CategoryTable table = default_categories();
        if (!f.categories.empty()) merge_categories(table, f.categories);
        events = load_policies(f.policies, table);
    }
    in.matched = match_policies(in.deduped, events, in.countries);
    return in;
}

void cmd_attribute(const Flags& f) {
    const AttributionInputs in = load_attribution(f);
    int matched = 0;
    for (const auto& m : in.matched) matched += m.matched() ? 1 : 0;
    ensure_writable_dir(f.out);
    write_attribution_csv((fs::path(f.out) / "attribution.csv").string(), in.matched);
    std::cout << matched << " of " << in.matched.size()
              << " break(s) matched a policy event; wrote " << f.out << "/attribution.csv\n";
}

void cmd_summarize(const Flags& f) {
    const AttributionInputs in = load_attribution(f);
    const auto summary = summarize_instruments(in.matched, in.countries);
    const auto mix = mix_vs_single(in.matched);
    const auto combos = combo_shares(in.matched, in.countries);
    const auto totals = cumulative_totals(in.deduped);
    ensure_writable_dir(f.out);
    write_summary_instruments_csv((fs::path(f.out) / "summary_instruments.csv").string(), summary);
    write_mix_vs_single_csv((fs::path(f.out) / "mix_vs_single.csv").string(), mix);
    write_combo_shares_csv((fs::path(f.out) / "combo_shares.csv").string(), combos);
    write_totals_csv((fs::path(f.out) / "totals.csv").string(), totals);
    for (const auto& r : summary)
        std::cout << r.instrument << ": " << r.frequency << " break(s), mean effect "
                  << pct1(100.0 * r.mean_effect) << ", " << r.typology << "\n";
    for (const auto& t : totals)
        std::cout << to_string(t.pollutant) << ": " << format_double(t.total_gt)
                  << " Gt avoided across " << t.n_breaks << " break(s)\n";
    std::cout << "wrote summary_instruments.csv, mix_vs_single.csv, combo_shares.csv, totals.csv"
              << " to " << f.out << "\n";
}

void report_pipeline(const PipelineResult& result, const RunConfig& c) {
    for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
    std::cout << result.breaks.size() << " break(s) across " << result.runs.size()
              << " series; " << result.artifacts.size() << " artifact(s) in " << c.out_dir << "\n";
}

void cmd_pipeline(const Flags& f) {
    const RunConfig c = f.build();
    report_pipeline(run_pipeline(c), c);
}

void cmd_robustness(const Flags& f) {
    RunConfig c = f.build();
    c.robustness = true;
    report_pipeline(run_pipeline(c), c);
}

struct SimFlags {
    DgpSpec spec;
    std::vector<std::string> inject;
    std::string pollutant = "NOx", sector = "transport", out;
};

void cmd_simulate(SimFlags& f) {
    f.spec.pollutant = parse_pollutant(f.pollutant);
    f.spec.sector = parse_sector(f.sector);
    for (const auto& text : f.inject) {
        std::stringstream ss(text);
        std::string c, p, t;
        if (!std::getline(ss, c, ':') || !std::getline(ss, p, ':') || !std::getline(ss, t))
            throw input_error("bad --inject '" + text + "', expected country:period:tau");
        InjectedBreak b;
        b.country = static_cast<int>(to_long(c, "--inject country"));
        b.period = static_cast<int>(to_long(p, "--inject period"));
        b.tau = to_double(t, "--inject tau");
        f.spec.breaks.push_back(b);
    }
    f.spec.validate();
    const SimulatedPanel panel = simulate_panel(f.spec);
    ensure_writable_dir(f.out);
    write_panel_csvs(panel, f.out);
    std::cout << "wrote simulated panel (" << f.spec.n_countries << " countries x "
              << f.spec.n_periods << " years, " << f.spec.breaks.size()
              << " injected break(s)) to " << f.out << "\n";
}

struct CalibrateFlags {
    DgpSpec spec;
    SelectionConfig selection;
    int reps = 200;
    std::string out;
};

void cmd_calibrate(CalibrateFlags& f) {
    f.spec.breaks.clear();
    const CalibrationStats stats = calibrate_false_positives(f.spec, f.selection, f.reps);
    std::cout << "replications: " << stats.reps << "\n"
              << "candidates per replication: " << stats.candidates_per_rep << "\n"
              << "mean retained: " << format_double(stats.mean_retained) << " (rate "
              << format_double(stats.mean_rate) << ")\n"
              << "median retained: " << format_double(stats.median_retained) << "\n"
              << "p90 retained: " << format_double(stats.p90_retained) << "\n"
              << "max retained: " << stats.max_retained << "\n";
    if (!f.out.empty()) {
        ojson j;
        j["reps"] = stats.reps;
        j["candidates_per_rep"] = stats.candidates_per_rep;
        j["gamma"] = f.selection.gamma;
        j["mean_retained"] = stats.mean_retained;
        j["mean_rate"] = stats.mean_rate;
        j["median_retained"] = stats.median_retained;
        j["p90_retained"] = stats.p90_retained;
        j["max_retained"] = stats.max_retained;
        j["retained_counts"] = stats.retained_counts;
        const std::string parent = fs::path(f.out).parent_path().string();
        ensure_writable_dir(parent.empty() ? "." : parent);
        write_file_atomic(f.out, j.dump(2) + "\n");
        std::cout << "wrote " << f.out << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structural break detection and policy attribution for emission panels"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    Flags fl;

    CLI::App* detect = app.add_subcommand("detect", "run break selection for the chosen series");
    fl.add_data(detect);
    fl.add_selection(detect);
    fl.add_per_group(detect);
    fl.add_out(detect);
    detect->callback([&] { cmd_detect(fl); });

    CLI::App* estimate =
        app.add_subcommand("estimate", "selection plus effect sizes, timing and counterfactuals");
    fl.add_data(estimate);
    fl.add_selection(estimate);
    fl.add_per_group(estimate);
    fl.add_window(estimate);
    fl.add_out(estimate);
    estimate->callback([&] { cmd_estimate(fl); });

    CLI::App* attribute =
        app.add_subcommand("attribute", "match estimated breaks to policy events");
    fl.add_breaks_input(attribute);
    fl.reg("groups", attribute->add_option("--groups", fl.groups, "country groups CSV")->required());
    fl.add_policies(attribute, true);
    fl.add_out(attribute);
    attribute->callback([&] { cmd_attribute(fl); });

    CLI::App* summarize =
        app.add_subcommand("summarize", "instrument frequency/effect tables from matched breaks");
    fl.add_breaks_input(summarize);
    fl.reg("groups", summarize->add_option("--groups", fl.groups, "country groups CSV")->required());
    fl.add_policies(summarize, false);
    fl.add_out(summarize);
    summarize->callback([&] { cmd_summarize(fl); });

    CLI::App* pipeline =
        app.add_subcommand("pipeline", "end-to-end run with all artifacts and a manifest");
    fl.add_data(pipeline);
    fl.add_selection(pipeline);
    fl.add_policies(pipeline, false);
    fl.add_window(pipeline);
    fl.add_per_group(pipeline);
    fl.reg("robustness",
           pipeline->add_flag("--robustness", fl.robust, "run the robustness battery"));
    fl.add_out(pipeline);
    pipeline->callback([&] { cmd_pipeline(fl); });

    CLI::App* robustness = app.add_subcommand(
        "robustness", "end-to-end run with the robustness battery forced on");
    fl.add_data(robustness);
    fl.add_selection(robustness);
    fl.add_policies(robustness, false);
    fl.add_window(robustness);
    fl.add_per_group(robustness);
    fl.add_out(robustness);
    robustness->callback([&] { cmd_robustness(fl); });

    SimFlags sim;
    CLI::App* simulate =
        app.add_subcommand("simulate", "write a synthetic panel in the input schemas");
    simulate->add_option("--n-countries", sim.spec.n_countries, "countries");
    simulate->add_option("--n-periods", sim.spec.n_periods, "years");
    simulate->add_option("--year-first", sim.spec.year_first, "first calendar year");
    simulate->add_option("--pollutant", sim.pollutant, "pollutant label");
    simulate->add_option("--sector", sim.sector, "sector label");
    simulate->add_option("--sigma", sim.spec.sigma, "noise scale, log-points");
    simulate->add_option("--factors", sim.spec.n_factors, "common factors");
    simulate->add_option("--factor-scale", sim.spec.factor_scale, "factor loading spread");
    simulate->add_option("--seed", sim.spec.seed, "seed (BREAKSCOPE_SEED as fallback)");
    simulate->add_option("--inject", sim.inject,
                         "injected break country:period:tau (repeatable), period 1-based");
    simulate->add_option("--out", sim.out, "output directory")->required();
    simulate->callback([&] { cmd_simulate(sim); });

    CalibrateFlags cal;
    CLI::App* calibrate =
        app.add_subcommand("calibrate", "false-positive retention rates on a break-free panel");
    calibrate->add_option("--n-countries", cal.spec.n_countries, "countries");
    calibrate->add_option("--n-periods", cal.spec.n_periods, "years");
    calibrate->add_option("--sigma", cal.spec.sigma, "noise scale, log-points");
    calibrate->add_option("--reps", cal.reps, "replications (>= 50)");
    calibrate->add_option("--gamma", cal.selection.gamma, "selection significance level");
    calibrate->add_option("--block-size", cal.selection.block_size, "candidates per block");
    calibrate->add_option("--jobs", cal.selection.jobs, "worker threads");
    calibrate->add_option("--seed", cal.spec.seed, "seed (BREAKSCOPE_SEED as fallback)");
    calibrate->add_option("--out", cal.out, "write the stats as JSON to this file");
    calibrate->callback([&] { cmd_calibrate(cal); });

    try {
        if (const char* env = std::getenv("BREAKSCOPE_SEED")) {
            const std::uint64_t s = parse_seed_env(env);
            sim.spec.seed = s;
            cal.spec.seed = s;
        }
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    } catch (const input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numerical_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const convergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
