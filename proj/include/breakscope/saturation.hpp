#pragma once

#include "breakscope/panel.hpp"
#include "breakscope/regress.hpp"

#include <cstdint>
#include <vector>

namespace breakscope {

enum class CandidateSet { step, impulse, both };

struct SelectionConfig {
    double gamma = 0.01;
    int block_size = 20;
    std::uint64_t seed = 0;
    int max_outer_iterations = 10;
    int max_paths = 8;
    CandidateSet indicator_kind = CandidateSet::step;
    double pivot_rel_tol = 1e-10;
    int jobs = 1;

    void validate() const;
};

/// One computed regression during selection, for the audit trace.
struct FitTrace {
    std::string stage;  // "block" or "union"
    int iteration = 0;  // outer iteration, 1-based
    int block = -1;     // -1 for union fits
    int path = -1;      // -1 for the initial fit of a search
    std::vector<Indicator> working;
    std::vector<double> p_values;  // aligned with working; NaN for aliased
    double rss = 0.0;
    double ic = 0.0;
};

struct SelectionResult {
    std::vector<Indicator> retained;  // sorted by (kind, country, year)
    FitResult final_fit;
    DesignMatrix final_design;
    bool converged = true;
    int outer_iterations = 0;
    std::vector<std::vector<Indicator>> union_history;
    std::vector<FitTrace> trace;
};

/// Seeded shuffle, then consecutive chunks of block_size; the last block
/// may be smaller. Every candidate lands in exactly one block.
std::vector<std::vector<Indicator>> partition_blocks(const std::vector<Indicator>& candidates,
                                                     const SelectionConfig& config);

/// Shared state for repeated selection fits on one dataset: the forced
/// design, its orthonormal basis, and residualized candidate columns.
class SearchContext {
public:
    SearchContext(const PanelDataset& data, const std::vector<Indicator>& candidates,
                  const SelectionConfig& config);

    const PanelDataset& data() const { return *data_; }
    const std::vector<Indicator>& candidates() const { return candidates_; }
    int rank_forced() const { return projector_.rank(); }
    long n_rows() const { return y_resid_.size(); }

    /// Largest working set that still leaves enough residual degrees of
    /// freedom for honest tests; bigger sets are re-blocked before
    /// elimination.
    int candidate_budget() const {
        const int budget = static_cast<int>(n_rows()) - rank_forced() - kMinResidualDf;
        return budget < 2 ? 2 : budget;
    }

    static constexpr int kMinResidualDf = 10;

    /// Joint fit of forced + working set, reported for the working set only.
    PartialledFit fit_working(const std::vector<Indicator>& working) const;

private:
    const PanelDataset* data_;
    std::vector<Indicator> candidates_;
    ForcedProjector projector_;
    Eigen::VectorXd y_resid_;
    Eigen::MatrixXd cand_resid_;
    std::vector<std::pair<Indicator, int>> index_;  // sorted for lookup
    double pivot_rel_tol_;
};

/// Multi-path backward elimination: starting from the working set, branch
/// on each insignificant candidate (most insignificant first, at most
/// max_paths branches), delete the worst p-value until all survivors pass
/// gamma, and keep the terminal set with the best information criterion
/// (ties: fewer candidates, then lexicographic order).
std::vector<Indicator> gets_select(const SearchContext& ctx, std::vector<Indicator> working,
                                   const SelectionConfig& config,
                                   std::vector<FitTrace>* trace = nullptr,
                                   const std::string& stage = "union", int iteration = 1,
                                   int block = -1);

/// Three-stage search: per-block elimination, then elimination on the
/// pooled survivors, repeated (with the current retained set joining every
/// block) until the retained set is stable. Blocks are drawn once from the
/// seed and reused across iterations.
SelectionResult saturation_search(const PanelDataset& data,
                                  const std::vector<Indicator>& candidates,
                                  const SelectionConfig& config);

/// Step-indicator saturation over all N x (T-1) candidate steps.
SelectionResult sis_search(const PanelDataset& data, const SelectionConfig& config);

/// Impulse-indicator saturation over all N x T candidate impulses.
SelectionResult iis_search(const PanelDataset& data, const SelectionConfig& config);

}  // namespace breakscope
