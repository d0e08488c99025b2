#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "breakscope/attribution.hpp"
#include "breakscope/effects.hpp"
#include "breakscope/panel.hpp"
#include "breakscope/robustness.hpp"
#include "breakscope/saturation.hpp"

namespace breakscope {

/// Full configuration of an end-to-end run. Defaults reproduce the headline
/// analysis; every field can come from a key=value config file or from
/// command-line flags, flags winning.
struct RunConfig {
    std::string emissions_file;
    std::string covariates_file;
    std::string groups_file;
    std::string eu_controls_file;
    std::string policies_file;    // optional; attribution tables need it
    std::string categories_file;  // optional extra instrument -> category rows

    std::vector<SeriesKey> series;  // empty = every series in the emissions file

    double gamma = 0.01;
    int block_size = 20;
    std::uint64_t seed = 0;
    int window = 2;  // attribution window pad around the timing CI, years
    bool per_group = false;
    std::string out_dir = "out";
    int jobs = 1;
    bool robustness = false;
    bool drop_unbalanced = false;
    std::optional<int> year_min;
    std::optional<int> year_max;
    int max_outer_iterations = 10;
    int max_paths = 8;

    void validate() const;
    SelectionConfig selection_config(std::uint64_t run_seed) const;
    EstimateOptions estimate_options() const;
    LoadOptions load_options() const;
};

/// Parse a key=value config file ('#' starts a comment, blank lines skipped).
/// Unknown keys are input errors.
RunConfig parse_config_file(const std::string& path);
void apply_config_file(RunConfig& config, const std::string& path);
void apply_config_entry(RunConfig& config, const std::string& key, const std::string& value);

/// "NOx.transport,CO.industry" or "all" (empty result = all series).
std::vector<SeriesKey> parse_series_list(const std::string& text);

/// Seed for one selection run, derived from the master seed so that series
/// (and groups, in split runs) are independent but reproducible.
std::uint64_t derive_seed(std::uint64_t master, const SeriesKey& series, const std::string& group);

/// One selection + estimation pass over one dataset slice.
struct GroupRun {
    std::string group;  // "pooled" unless the run splits by group
    PanelDataset data;
    SelectionResult selection;
    SparseFit sparse;
};

struct SeriesRun {
    SeriesKey series;
    std::vector<GroupRun> groups;
};

struct PipelineResult {
    std::vector<SeriesRun> runs;
    std::vector<BreakEstimate> breaks;   // deduplicated, reporting order
    std::vector<MatchedBreak> matched;   // parallel to breaks; empty events without policies
    std::vector<std::string> artifacts;  // file names written under out_dir
    std::vector<std::string> warnings;
};

/// Run every stage and write all artifacts plus manifest.json under
/// config.out_dir. On failure, partial artifacts from this run are removed,
/// the manifest records the failed stage, and the error is rethrown.
PipelineResult run_pipeline(const RunConfig& config);

// --- artifact readers/writers shared with the command-line front end ---

std::vector<CountryInfo> read_groups_csv(const std::string& path);
std::vector<BreakEstimate> read_breaks_csv(const std::string& path);

void write_breaks_csv(const std::string& path, const std::vector<BreakEstimate>& breaks);
void write_attribution_csv(const std::string& path, const std::vector<MatchedBreak>& matched);
void write_summary_instruments_csv(const std::string& path, const std::vector<SummaryRow>& rows);
void write_mix_vs_single_csv(const std::string& path, const std::vector<MixRow>& rows);
void write_combo_shares_csv(const std::string& path, const std::vector<ComboRow>& rows);
void write_totals_csv(const std::string& path, const std::vector<PollutantTotal>& totals);

/// Selection audit records as JSON lines (one object per computed fit).
std::string trace_records_jsonl(const SeriesKey& series, const std::string& group,
                                const PanelDataset& data, const std::vector<FitTrace>& trace);

/// Write text to path atomically (temp file + rename).
void write_file_atomic(const std::string& path, const std::string& text);

/// Throws input_error unless dir exists (or can be created) and is writable.
void ensure_writable_dir(const std::string& dir);

}  // namespace breakscope
