#include "breakscope/pipeline.hpp"

#include "breakscope/csv.hpp"
#include "breakscope/regress.hpp"
#include "breakscope/util.hpp"
#include "breakscope/version.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace breakscope {

using ojson = nlohmann::ordered_json;

namespace {

ojson json_num(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

std::string num_or_empty(double v) { return std::isfinite(v) ? format_double(v) : std::string(); }

double double_or_nan(const std::string& s, const std::string& context) {
    if (trim(s).empty()) return std::numeric_limits<double>::quiet_NaN();
    return to_double(s, context);
}

std::uint64_t parse_seed_value(const std::string& s, const std::string& what) {
    const std::string v = trim(s);
    try {
        // stoull would wrap a negative value instead of rejecting it.
        if (v.empty() || !std::isdigit(static_cast<unsigned char>(v[0])))
            throw std::invalid_argument(v);
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos, 10);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw input_error("bad seed '" + s + "' in " + what);
    }
}

int int_field(const std::string& v, const std::string& what) {
    const long x = to_long(v, what);
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
        throw input_error(what + " out of range: " + v);
    return static_cast<int>(x);
}

std::string run_label(const SeriesKey& series, const std::string& group) {
    if (group == "pooled") return series.label();
    return series.label() + " (" + group + ")";
}

}  // namespace

void RunConfig::validate() const {
    if (emissions_file.empty() || covariates_file.empty() || groups_file.empty() ||
        eu_controls_file.empty())
        throw input_error("emissions, covariates, groups and eu_controls files are all required");
    if (!(gamma > 0.0 && gamma < 1.0)) throw input_error("gamma must be in (0, 1)");
    if (block_size < 2) throw input_error("block_size must be at least 2");
    if (window < 0) throw input_error("window must be >= 0");
    if (jobs < 1) throw input_error("jobs must be >= 1");
    if (max_outer_iterations < 1) throw input_error("max_outer_iterations must be >= 1");
    if (max_paths < 1) throw input_error("max_paths must be >= 1");
    if (out_dir.empty()) throw input_error("output directory must not be empty");
}

SelectionConfig RunConfig::selection_config(std::uint64_t run_seed) const {
    SelectionConfig sc;
    sc.gamma = gamma;
    sc.block_size = block_size;
    sc.seed = run_seed;
    sc.max_outer_iterations = max_outer_iterations;
    sc.max_paths = max_paths;
    sc.jobs = jobs;
    return sc;
}

EstimateOptions RunConfig::estimate_options() const {
    EstimateOptions eo;
    eo.gamma = gamma;
    eo.window_pad = window;
    return eo;
}

LoadOptions RunConfig::load_options() const {
    LoadOptions lo;
    lo.drop_unbalanced = drop_unbalanced;
    lo.year_min = year_min;
    lo.year_max = year_max;
    return lo;
}

std::vector<SeriesKey> parse_series_list(const std::string& text) {
    std::vector<SeriesKey> out;
    const std::string t = trim(text);
    if (t.empty() || lower(t) == "all") return out;
    std::stringstream ss(t);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const std::string name = trim(item);
        if (name.empty()) continue;
        const SeriesKey key = parse_series_key(name);
        if (std::find(out.begin(), out.end(), key) != out.end())
            throw input_error("duplicate series '" + name + "' in series list");
        out.push_back(key);
    }
    return out;
}

void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value) {
    const std::string k = lower(trim(key));
    const std::string v = trim(value);
    if (k == "emissions") config.emissions_file = v;
    else if (k == "covariates") config.covariates_file = v;
    else if (k == "groups") config.groups_file = v;
    else if (k == "eu_controls") config.eu_controls_file = v;
    else if (k == "policies") config.policies_file = v;
    else if (k == "categories") config.categories_file = v;
    else if (k == "series") config.series = parse_series_list(v);
    else if (k == "gamma") config.gamma = to_double(v, "config key gamma");
    else if (k == "block_size") config.block_size = int_field(v, "config key block_size");
    else if (k == "seed") config.seed = parse_seed_value(v, "config key seed");
    else if (k == "window") config.window = int_field(v, "config key window");
    else if (k == "per_group") config.per_group = parse_bool(v, "config key per_group");
    else if (k == "out") config.out_dir = v;
    else if (k == "jobs") config.jobs = int_field(v, "config key jobs");
    else if (k == "robustness") config.robustness = parse_bool(v, "config key robustness");
    else if (k == "drop_unbalanced")
        config.drop_unbalanced = parse_bool(v, "config key drop_unbalanced");
    else if (k == "year_min") config.year_min = int_field(v, "config key year_min");
    else if (k == "year_max") config.year_max = int_field(v, "config key year_max");
    else if (k == "max_outer_iterations")
        config.max_outer_iterations = int_field(v, "config key max_outer_iterations");
    else if (k == "max_paths") config.max_paths = int_field(v, "config key max_paths");
    else throw input_error("unknown config key '" + key + "'");
}

void apply_config_file(RunConfig& config, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw input_error("cannot read config file '" + path + "'");
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            throw input_error("config line " + std::to_string(lineno) + " has no '=': " + t);
        apply_config_entry(config, t.substr(0, eq), t.substr(eq + 1));
    }
}

RunConfig parse_config_file(const std::string& path) {
    RunConfig config;
    apply_config_file(config, path);
    return config;
}

std::uint64_t derive_seed(std::uint64_t master, const SeriesKey& series, const std::string& group) {
    return Rng::mix_string(master, series.label() + ":" + group);
}

void ensure_writable_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw input_error("cannot create output directory '" + dir + "': " + ec.message());
    const fs::path probe = fs::path(dir) / ".writable_probe";
    bool ok = false;
    {
        std::ofstream f(probe, std::ios::binary | std::ios::trunc);
        f << "ok";
        f.flush();
        ok = static_cast<bool>(f);
    }
    fs::remove(probe, ec);
    if (!ok) throw input_error("output directory '" + dir + "' is not writable");
}

void write_file_atomic(const std::string& path, const std::string& text) {
    const std::string tmp = path + ".tmp";
    bool ok = false;
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f.write(text.data(), static_cast<std::streamsize>(text.size()));
        f.flush();
        ok = static_cast<bool>(f);
    }
    std::error_code ec;
    if (!ok) {
        fs::remove(tmp, ec);
        throw input_error("cannot write '" + path + "'");
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ec2;
        fs::remove(tmp, ec2);
        throw input_error("cannot replace '" + path + "': " + ec.message());
    }
}

std::vector<CountryInfo> read_groups_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const int c_iso = t.col("country_iso3"), c_grp = t.col("group"), c_eu = t.col("eu_member");
    std::map<std::string, CountryInfo> info;
    for (const auto& r : t.rows) {
        CountryInfo ci;
        ci.iso3 = trim(r[c_iso]);
        const std::string label = lower(trim(r[c_grp]));
        if (label == "developed") ci.developed = true;
        else if (label == "developing") ci.developed = false;
        else throw input_error("unknown group '" + r[c_grp] + "' for " + ci.iso3);
        ci.eu_member = parse_bool(r[c_eu], "eu_member");
        if (!info.emplace(ci.iso3, ci).second)
            throw input_error("duplicate groups row for " + ci.iso3);
    }
    std::vector<CountryInfo> out;
    out.reserve(info.size());
    for (const auto& [iso, ci] : info) out.push_back(ci);
    return out;
}

void write_breaks_csv(const std::string& path, const std::vector<BreakEstimate>& breaks) {
    std::ostringstream out;
    out << "series_key,country,break_year,tau_hat,se,effect_pct,ci99_lo,ci99_hi,"
           "window_lo,window_hi,cum_reduction_t,cum_lo_t,cum_hi_t\n";
    for (const auto& b : breaks) {
        out << b.series.label() << ',' << b.country_iso3 << ',' << b.year << ','
            << format_double(b.tau_hat) << ',' << num_or_empty(b.se) << ','
            << format_double(b.effect_pct()) << ',' << b.ci_lo << ',' << b.ci_hi << ','
            << b.window_lo << ',' << b.window_hi << ',' << format_double(b.cum_reduction) << ','
            << num_or_empty(b.cum_lo) << ',' << num_or_empty(b.cum_hi) << '\n';
    }
    write_file_atomic(path, out.str());
}

std::vector<BreakEstimate> read_breaks_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const int c_series = t.col("series_key"), c_iso = t.col("country"),
              c_year = t.col("break_year"), c_tau = t.col("tau_hat"), c_se = t.col("se"),
              c_cilo = t.col("ci99_lo"), c_cihi = t.col("ci99_hi"), c_wlo = t.col("window_lo"),
              c_whi = t.col("window_hi"), c_cum = t.col("cum_reduction_t"),
              c_clo = t.col("cum_lo_t"), c_chi = t.col("cum_hi_t");
    std::vector<BreakEstimate> out;
    out.reserve(t.rows.size());
    for (const auto& r : t.rows) {
        BreakEstimate b;
        b.series = parse_series_key(r[c_series]);
        b.country = -1;
        b.country_iso3 = trim(r[c_iso]);
        b.year = int_field(r[c_year], "break_year");
        b.tau_hat = to_double(r[c_tau], "tau_hat");
        b.se = double_or_nan(r[c_se], "se");
        b.se_cluster = std::numeric_limits<double>::quiet_NaN();
        b.p_value = 0.0;
        b.significant = true;
        b.ci_lo = int_field(r[c_cilo], "ci99_lo");
        b.ci_hi = int_field(r[c_cihi], "ci99_hi");
        b.window_lo = int_field(r[c_wlo], "window_lo");
        b.window_hi = int_field(r[c_whi], "window_hi");
        b.cum_reduction = to_double(r[c_cum], "cum_reduction_t");
        b.cum_lo = double_or_nan(r[c_clo], "cum_lo_t");
        b.cum_hi = double_or_nan(r[c_chi], "cum_hi_t");
        out.push_back(std::move(b));
    }
    return out;
}

void write_attribution_csv(const std::string& path, const std::vector<MatchedBreak>& matched) {
    std::ostringstream out;
    out << "series_key,country,break_year,effect_pct,ci99_lo,ci99_hi,window_lo,window_hi,"
           "matched,n_events,instruments,categories,single_type,includes_pricing\n";
    for (const auto& m : matched) {
        const auto& b = m.brk;
        std::set<std::string> instruments;
        for (const auto& e : m.events) instruments.insert(e.instrument);
        std::string ilist;
        for (const auto& i : instruments) {
            if (!ilist.empty()) ilist += "; ";
            ilist += i;
        }
        std::string clist;
        for (const auto& c : m.categories) {
            if (!clist.empty()) clist += "+";
            clist += to_string(c);
        }
        out << b.series.label() << ',' << b.country_iso3 << ',' << b.year << ','
            << format_double(b.effect_pct()) << ',' << b.ci_lo << ',' << b.ci_hi << ','
            << b.window_lo << ',' << b.window_hi << ',' << (m.matched() ? 1 : 0) << ','
            << m.events.size() << ',' << csv_field(ilist) << ',' << csv_field(clist) << ','
            << (m.single_type() ? 1 : 0) << ',' << (m.includes_pricing ? 1 : 0) << '\n';
    }
    write_file_atomic(path, out.str());
}

void write_summary_instruments_csv(const std::string& path, const std::vector<SummaryRow>& rows) {
    std::ostringstream out;
    out << "instrument,frequency,mean_effect,typology,case1,case2,case3\n";
    for (const auto& r : rows) {
        out << csv_field(r.instrument) << ',' << r.frequency << ','
            << format_double(r.mean_effect) << ',' << r.typology << ',' << csv_field(r.cases[0])
            << ',' << csv_field(r.cases[1]) << ',' << csv_field(r.cases[2]) << '\n';
    }
    write_file_atomic(path, out.str());
}

void write_mix_vs_single_csv(const std::string& path, const std::vector<MixRow>& rows) {
    std::ostringstream out;
    out << "instrument,alone_pct,n_alone,mixed_pct,n_mixed,with_pricing_pct,n_with_pricing\n";
    const auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (const auto& r : rows) {
        out << csv_field(r.instrument) << ',' << opt(r.alone_pct) << ',' << r.n_alone << ','
            << opt(r.mixed_pct) << ',' << r.n_mixed << ',' << opt(r.with_pricing_pct) << ','
            << r.n_with_pricing << '\n';
    }
    write_file_atomic(path, out.str());
}

void write_combo_shares_csv(const std::string& path, const std::vector<ComboRow>& rows) {
    std::ostringstream out;
    out << "sector,group,combo,count,share\n";
    for (const auto& r : rows) {
        out << to_string(r.sector) << ',' << r.group << ',' << csv_field(r.combo) << ',' << r.count
            << ',' << format_double(r.share) << '\n';
    }
    write_file_atomic(path, out.str());
}

void write_totals_csv(const std::string& path, const std::vector<PollutantTotal>& totals) {
    std::ostringstream out;
    out << "pollutant,n_breaks,total_gt,lo_gt,hi_gt\n";
    for (const auto& t : totals) {
        out << to_string(t.pollutant) << ',' << t.n_breaks << ',' << format_double(t.total_gt)
            << ',' << num_or_empty(t.lo_gt) << ',' << num_or_empty(t.hi_gt) << '\n';
    }
    write_file_atomic(path, out.str());
}

namespace {

ojson config_json(const RunConfig& c) {
    ojson j;
    j["emissions"] = c.emissions_file;
    j["covariates"] = c.covariates_file;
    j["groups"] = c.groups_file;
    j["eu_controls"] = c.eu_controls_file;
    j["policies"] = c.policies_file;
    j["categories"] = c.categories_file;
    ojson series = ojson::array();
    for (const auto& k : c.series) series.push_back(k.label());
    j["series"] = series;  // empty = every series in the emissions file
    j["gamma"] = c.gamma;
    j["block_size"] = c.block_size;
    j["seed"] = c.seed;
    j["window"] = c.window;
    j["per_group"] = c.per_group;
    j["out"] = c.out_dir;
    j["jobs"] = c.jobs;
    j["robustness"] = c.robustness;
    j["drop_unbalanced"] = c.drop_unbalanced;
    j["year_min"] = c.year_min ? ojson(*c.year_min) : ojson(nullptr);
    j["year_max"] = c.year_max ? ojson(*c.year_max) : ojson(nullptr);
    j["max_outer_iterations"] = c.max_outer_iterations;
    j["max_paths"] = c.max_paths;
    return j;
}

void write_manifest(const RunConfig& config, const std::string& status,
                    const std::string& failure_stage, const std::string& error,
                    const std::vector<SeriesRun>& runs, const std::vector<std::string>& artifacts,
                    const std::vector<std::string>& warnings) {
    ojson j;
    j["tool"] = "breakscope";
    j["version"] = kVersion;
    j["status"] = status;
    j["failure_stage"] = failure_stage.empty() ? ojson(nullptr) : ojson(failure_stage);
    j["error"] = error.empty() ? ojson(nullptr) : ojson(error);
    j["config"] = config_json(config);
    ojson rs = ojson::array();
    for (const auto& run : runs) {
        for (const auto& gr : run.groups) {
            ojson r;
            r["series"] = run.series.label();
            r["group"] = gr.group;
            r["seed"] = derive_seed(config.seed, run.series, gr.group);
            r["countries"] = gr.data.n_countries();
            r["years"] = gr.data.n_years();
            r["candidates"] = gr.data.n_countries() * (gr.data.n_years() - 1);
            r["retained"] = static_cast<int>(gr.selection.retained.size());
            r["converged"] = gr.selection.converged;
            r["outer_iterations"] = gr.selection.outer_iterations;
            rs.push_back(std::move(r));
        }
    }
    j["runs"] = rs;
    j["warnings"] = warnings;
    ojson as = ojson::array();
    for (const auto& name : artifacts) {
        ojson a;
        a["name"] = name;
        a["sha256"] = sha256_file((fs::path(config.out_dir) / name).string());
        as.push_back(std::move(a));
    }
    j["artifacts"] = as;
    write_file_atomic((fs::path(config.out_dir) / "manifest.json").string(), j.dump(2) + "\n");
}

ojson plotdata_json(const PipelineResult& result) {
    std::map<std::pair<std::string, std::string>, std::vector<const BreakEstimate*>> by_ci;
    for (const auto& b : result.breaks)
        by_ci[{b.series.label(), b.country_iso3}].push_back(&b);

    ojson arr = ojson::array();
    for (const auto& run : result.runs) {
        for (const auto& gr : run.groups) {
            const PanelDataset& d = gr.data;
            const Eigen::VectorXd ln_fit = predict(gr.sparse.design.X, gr.sparse.fit);
            ojson e;
            e["series"] = run.series.label();
            e["group"] = gr.group;
            ojson years = ojson::array();
            for (int t = 0; t < d.n_years(); ++t) years.push_back(d.year_first + t);
            e["years"] = years;
            ojson cs = ojson::array();
            for (int i = 0; i < d.n_countries(); ++i) {
                const std::string& iso = d.countries[i].iso3;
                const auto it = by_ci.find({run.series.label(), iso});
                ojson c;
                c["iso3"] = iso;
                ojson obs = ojson::array(), fit = ojson::array(), cf = ojson::array();
                for (int t = 0; t < d.n_years(); ++t) {
                    const double o = d.emissions(i, t);
                    obs.push_back(json_num(o));
                    fit.push_back(json_num(std::exp(ln_fit[d.row(i, t)])));
                    double tau_sum = 0.0;
                    if (it != by_ci.end())
                        for (const BreakEstimate* b : it->second)
                            if (b->year <= d.year_first + t) tau_sum += b->tau_hat;
                    cf.push_back(json_num(o * std::exp(-tau_sum)));
                }
                c["observed_t"] = obs;
                c["fitted_t"] = fit;
                c["counterfactual_t"] = cf;
                ojson bs = ojson::array();
                if (it != by_ci.end()) {
                    for (const BreakEstimate* b : it->second) {
                        ojson bj;
                        bj["year"] = b->year;
                        bj["tau_hat"] = json_num(b->tau_hat);
                        bj["se"] = json_num(b->se);
                        bj["se_cluster"] = json_num(b->se_cluster);
                        bj["p_value"] = json_num(b->p_value);
                        bj["significant"] = b->significant;
                        bj["effect_pct"] = json_num(b->effect_pct());
                        bj["ci99"] = ojson::array({b->ci_lo, b->ci_hi});
                        bj["window"] = ojson::array({b->window_lo, b->window_hi});
                        bj["cum_reduction_t"] = json_num(b->cum_reduction);
                        bs.push_back(std::move(bj));
                    }
                }
                c["breaks"] = bs;
                cs.push_back(std::move(c));
            }
            e["countries"] = cs;
            arr.push_back(std::move(e));
        }
    }
    ojson out;
    out["series"] = arr;
    return out;
}

std::string trace_jsonl(const PipelineResult& result) {
    std::string out;
    for (const auto& run : result.runs)
        for (const auto& gr : run.groups)
            out += trace_records_jsonl(run.series, gr.group, gr.data, gr.selection.trace);
    return out;
}

}  // namespace

std::string trace_records_jsonl(const SeriesKey& series, const std::string& group,
                                const PanelDataset& data, const std::vector<FitTrace>& trace) {
    std::string out;
    for (const FitTrace& t : trace) {
        ojson j;
        j["series"] = series.label();
        j["group"] = group;
        j["stage"] = t.stage;
        j["iteration"] = t.iteration;
        j["block"] = t.block;
        j["path"] = t.path;
        ojson cands = ojson::array();
        for (const auto& ind : t.working) cands.push_back(indicator_name(data, ind));
        j["candidates"] = cands;
        ojson ps = ojson::array();
        for (double p : t.p_values) ps.push_back(json_num(p));
        j["p_values"] = ps;
        j["rss"] = json_num(t.rss);
        j["ic"] = json_num(t.ic);
        out += j.dump();
        out += '\n';
    }
    return out;
}

namespace {

ojson build_robustness(const RunConfig& config, const PipelineResult& result) {
    ojson arr = ojson::array();
    for (const auto& run : result.runs) {
        for (const auto& gr : run.groups) {
            const std::uint64_t s = derive_seed(config.seed, run.series, gr.group);
            const SelectionConfig sc = config.selection_config(s);
            std::vector<double> gammas{0.001, config.gamma};
            std::sort(gammas.begin(), gammas.end());
            gammas.erase(std::unique(gammas.begin(), gammas.end()), gammas.end());

            ojson e;
            e["series"] = run.series.label();
            e["group"] = gr.group;

            const GammaReport gamma = gamma_sensitivity(gr.data, gammas, sc);
            ojson gj;
            ojson gruns = ojson::array();
            for (const auto& r : gamma.runs) {
                ojson g;
                g["gamma"] = r.gamma;
                ojson names = ojson::array();
                for (const auto& ind : r.retained) names.push_back(indicator_name(gr.data, ind));
                g["retained"] = names;
                gruns.push_back(std::move(g));
            }
            gj["runs"] = gruns;
            gj["jaccard"] = gamma.jaccard;
            ojson gb = ojson::array();
            for (std::size_t i = 0; i < gamma.all_breaks.size(); ++i) {
                ojson b;
                b["name"] = indicator_name(gr.data, gamma.all_breaks[i]);
                b["present"] = gamma.presence[i];
                gb.push_back(std::move(b));
            }
            gj["breaks"] = gb;
            e["gamma_sensitivity"] = gj;

            const IisReport iis = iis_stability(gr.data, sc);
            ojson ij;
            ij["n_impulses"] = iis.n_impulses;
            ojson steps = ojson::array();
            for (std::size_t i = 0; i < iis.sis_retained.size(); ++i) {
                ojson st;
                st["name"] = indicator_name(gr.data, iis.sis_retained[i]);
                st["persists"] = static_cast<bool>(iis.persists[i]);
                steps.push_back(std::move(st));
            }
            ij["steps"] = steps;
            e["impulse_stability"] = ij;

            ojson gs = ojson::array();
            for (const auto& b : result.breaks) {
                if (!(b.series == run.series)) continue;
                int ci = -1;
                for (int i = 0; i < gr.data.n_countries(); ++i)
                    if (gr.data.countries[i].iso3 == b.country_iso3) ci = i;
                if (ci < 0) continue;  // break belongs to the other group's run
                ojson g;
                g["country"] = b.country_iso3;
                g["break_year"] = b.year;
                g["tau_hat"] = json_num(b.tau_hat);
                try {
                    const Indicator ind{IndicatorKind::step, ci, b.year};
                    const GscmResult r = gscm_validate(gr.data, gr.selection.retained, ind);
                    g["insufficient_pretreatment"] = r.insufficient_pretreatment;
                    g["r"] = r.r;
                    g["n_donors"] = r.n_donors;
                    g["pre_rmse"] = json_num(r.pre_rmse);
                    g["mean_att"] = json_num(r.mean_att);
                    g["gap"] = r.insufficient_pretreatment ? ojson(nullptr)
                                                           : json_num(r.mean_att - b.tau_hat);
                    ojson atty = ojson::array(), att = ojson::array(), cv = ojson::array();
                    for (int y : r.att_years) atty.push_back(y);
                    for (double a : r.att) att.push_back(json_num(a));
                    for (double m : r.cv_mse) cv.push_back(json_num(m));
                    g["att_years"] = atty;
                    g["att"] = att;
                    g["cv_mse"] = cv;
                } catch (const input_error& err) {
                    g["skipped"] = err.what();
                }
                gs.push_back(std::move(g));
            }
            e["synthetic_control"] = gs;
            arr.push_back(std::move(e));
        }
    }
    ojson out;
    out["series"] = arr;
    return out;
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& config) {
    config.validate();
    ensure_writable_dir(config.out_dir);

    PipelineResult result;
    std::vector<std::string> artifacts;
    std::string stage = "load";
    try {
        std::vector<SeriesKey> keys = config.series;
        if (keys.empty()) keys = list_series(config.emissions_file);
        std::sort(keys.begin(), keys.end());
        keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
        if (keys.empty()) throw input_error("no series to analyze");

        for (const auto& key : keys) {
            PanelDataset full = load_panel(config.emissions_file, config.covariates_file,
                                           config.groups_file, config.eu_controls_file, key,
                                           config.load_options());
            for (const auto& w : full.load_warnings)
                result.warnings.push_back(key.label() + ": " + w);
            SeriesRun run;
            run.series = key;
            if (config.per_group) {
                for (const auto& g : full.groups()) {
                    std::vector<int> idx;
                    for (int i = 0; i < full.n_countries(); ++i)
                        if (full.countries[i].group() == g) idx.push_back(i);
                    GroupRun gr;
                    gr.group = g;
                    gr.data = full.subset(idx);
                    run.groups.push_back(std::move(gr));
                }
            } else {
                GroupRun gr;
                gr.group = "pooled";
                gr.data = std::move(full);
                run.groups.push_back(std::move(gr));
            }
            result.runs.push_back(std::move(run));
        }

        for (auto& run : result.runs) {
            for (auto& gr : run.groups) {
                stage = "selection";
                const std::uint64_t s = derive_seed(config.seed, run.series, gr.group);
                gr.selection = sis_search(gr.data, config.selection_config(s));
                if (!gr.selection.converged)
                    result.warnings.push_back(
                        run_label(run.series, gr.group) + ": selection stopped after " +
                        std::to_string(gr.selection.outer_iterations) +
                        " outer iterations without reaching a fixed point");
                stage = "estimation";
                gr.sparse = fit_sparse(gr.data, gr.selection.retained, config.estimate_options());
                for (const auto& w : gr.sparse.warnings)
                    result.warnings.push_back(run_label(run.series, gr.group) + ": " + w);
            }
        }

        stage = "dedup";
        std::vector<BreakEstimate> all;
        for (const auto& run : result.runs)
            for (const auto& gr : run.groups)
                all.insert(all.end(), gr.sparse.estimates.begin(), gr.sparse.estimates.end());
        result.breaks = dedupe_breaks(all);
        std::stable_sort(result.breaks.begin(), result.breaks.end(),
                         [](const BreakEstimate& a, const BreakEstimate& b) {
                             if (!(a.series == b.series)) return a.series < b.series;
                             if (a.country_iso3 != b.country_iso3)
                                 return a.country_iso3 < b.country_iso3;
                             return a.year < b.year;
                         });

        stage = "attribution";
        std::map<std::string, CountryInfo> cinfo;
        for (const auto& run : result.runs)
            for (const auto& gr : run.groups)
                for (const auto& c : gr.data.countries) cinfo.emplace(c.iso3, c);
        std::vector<CountryInfo> countries;
        countries.reserve(cinfo.size());
        for (const auto& [iso, ci] : cinfo) countries.push_back(ci);
        std::vector<PolicyEvent> events;
        if (!config.policies_file.empty()) {
            CategoryTable table = default_categories();
            if (!config.categories_file.empty()) merge_categories(table, config.categories_file);
            events = load_policies(config.policies_file, table);
        }
        result.matched = match_policies(result.breaks, events, countries);
        const std::vector<SummaryRow> summary = summarize_instruments(result.matched, countries);
        const std::vector<MixRow> mix = mix_vs_single(result.matched);
        const std::vector<ComboRow> combos = combo_shares(result.matched, countries);
        const std::vector<PollutantTotal> totals = cumulative_totals(result.breaks);

        ojson robustness_report;
        if (config.robustness) {
            stage = "robustness";
            robustness_report = build_robustness(config, result);
        }

        stage = "reports";
        const auto emit = [&](const std::string& name, const std::function<void(const std::string&)>& writer) {
            writer((fs::path(config.out_dir) / name).string());
            artifacts.push_back(name);
        };
        emit("breaks.csv", [&](const std::string& p) { write_breaks_csv(p, result.breaks); });
        emit("attribution.csv",
             [&](const std::string& p) { write_attribution_csv(p, result.matched); });
        emit("summary_instruments.csv",
             [&](const std::string& p) { write_summary_instruments_csv(p, summary); });
        emit("mix_vs_single.csv", [&](const std::string& p) { write_mix_vs_single_csv(p, mix); });
        emit("combo_shares.csv", [&](const std::string& p) { write_combo_shares_csv(p, combos); });
        emit("totals.csv", [&](const std::string& p) { write_totals_csv(p, totals); });
        emit("plotdata.json", [&](const std::string& p) {
            write_file_atomic(p, plotdata_json(result).dump(2) + "\n");
        });
        emit("selection_trace.jsonl",
             [&](const std::string& p) { write_file_atomic(p, trace_jsonl(result)); });
        if (config.robustness)
            emit("robustness_report.json", [&](const std::string& p) {
                write_file_atomic(p, robustness_report.dump(2) + "\n");
            });

        write_manifest(config, "ok", "", "", result.runs, artifacts, result.warnings);
        result.artifacts = artifacts;
        result.artifacts.push_back("manifest.json");
        return result;
    } catch (const std::exception& e) {
        std::error_code ec;
        for (const auto& name : artifacts) fs::remove(fs::path(config.out_dir) / name, ec);
        try {
            write_manifest(config, "failed", stage, e.what(), result.runs, {}, result.warnings);
        } catch (...) {
        }
        throw;
    }
}

}  // namespace breakscope
