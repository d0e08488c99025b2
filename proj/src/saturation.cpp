#include "breakscope/saturation.hpp"

#include "breakscope/util.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace breakscope {

void SelectionConfig::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) throw input_error("gamma must be in (0, 1)");
    if (block_size < 2) throw input_error("block_size must be at least 2");
    if (max_paths < 1) throw input_error("max_paths must be at least 1");
    if (max_outer_iterations < 1) throw input_error("max_outer_iterations must be at least 1");
    if (jobs < 1) throw input_error("jobs must be at least 1");
}

std::vector<std::vector<Indicator>> partition_blocks(const std::vector<Indicator>& candidates,
                                                     const SelectionConfig& config) {
    config.validate();
    std::vector<Indicator> pool = candidates;
    Rng rng(config.seed);
    shuffle(pool, rng);
    std::vector<std::vector<Indicator>> blocks;
    for (size_t at = 0; at < pool.size(); at += config.block_size) {
        const size_t end = std::min(pool.size(), at + config.block_size);
        blocks.emplace_back(pool.begin() + at, pool.begin() + end);
    }
    return blocks;
}

SearchContext::SearchContext(const PanelDataset& data, const std::vector<Indicator>& candidates,
                             const SelectionConfig& config)
    : data_(&data), candidates_(candidates), pivot_rel_tol_(config.pivot_rel_tol) {
    config.validate();
    DesignMatrix forced = build_design(data, {});
    projector_ = ForcedProjector(forced.X, pivot_rel_tol_);
    y_resid_ = projector_.residualize(forced.y);

    Eigen::MatrixXd raw(forced.y.size(), candidates_.size());
    for (size_t c = 0; c < candidates_.size(); ++c)
        raw.col(c) = indicator_column(data, candidates_[c]);
    cand_resid_ = projector_.residualize(raw);
    // A candidate aliased by the forced block can never be retained.
    for (long c = 0; c < cand_resid_.cols(); ++c)
        if (cand_resid_.col(c).norm() <= pivot_rel_tol_ * raw.col(c).norm())
            cand_resid_.col(c).setZero();

    index_.reserve(candidates_.size());
    for (size_t c = 0; c < candidates_.size(); ++c)
        index_.emplace_back(candidates_[c], static_cast<int>(c));
    std::sort(index_.begin(), index_.end());
    for (size_t i = 1; i < index_.size(); ++i)
        if (index_[i - 1].first == index_[i].first)
            throw input_error("duplicate candidate " + indicator_name(data, index_[i].first));
}

PartialledFit SearchContext::fit_working(const std::vector<Indicator>& working) const {
    Eigen::MatrixXd cols(y_resid_.size(), working.size());
    for (size_t k = 0; k < working.size(); ++k) {
        auto it = std::lower_bound(index_.begin(), index_.end(),
                                   std::make_pair(working[k], 0),
                                   [](const auto& a, const auto& b) { return a.first < b.first; });
        if (it == index_.end() || !(it->first == working[k]))
            throw input_error("candidate " + indicator_name(*data_, working[k]) +
                              " not in search context");
        cols.col(k) = cand_resid_.col(it->second);
    }
    FitOptions opt;
    opt.pivot_rel_tol = pivot_rel_tol_;
    return fit_partialled(cols, y_resid_, projector_.rank(), opt);
}

namespace {

bool ic_close(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

struct Terminal {
    std::vector<Indicator> set;
    double ic = 0.0;
};

/// Is `a` a better terminal model than `b`?
bool better_terminal(const Terminal& a, const Terminal& b) {
    if (!ic_close(a.ic, b.ic)) return a.ic < b.ic;
    if (a.set.size() != b.set.size()) return a.set.size() < b.set.size();
    return a.set < b.set;
}

class GetsSearch {
public:
    GetsSearch(const SearchContext& ctx, const SelectionConfig& config,
               std::vector<FitTrace>* trace, const std::string& stage, int iteration, int block)
        : ctx_(ctx), config_(config), trace_(trace), stage_(stage), iteration_(iteration),
          block_(block) {}

    const PartialledFit& fit(const std::vector<Indicator>& working, int path) {
        auto it = memo_.find(working);
        if (it != memo_.end()) return it->second;
        PartialledFit f = ctx_.fit_working(working);
        if (trace_) {
            FitTrace t;
            t.stage = stage_;
            t.iteration = iteration_;
            t.block = block_;
            t.path = path;
            t.working = working;
            t.p_values.assign(f.p_value.data(), f.p_value.data() + f.p_value.size());
            t.rss = f.rss;
            t.ic = f.ic;
            trace_->push_back(std::move(t));
        }
        return memo_.emplace(working, std::move(f)).first->second;
    }

    /// Fit and drop aliased candidates until every survivor is estimable.
    std::vector<Indicator> settle(std::vector<Indicator> working, int path) {
        while (true) {
            const PartialledFit& f = fit(working, path);
            std::vector<Indicator> kept;
            for (size_t k = 0; k < working.size(); ++k)
                if (f.retained[k]) kept.push_back(working[k]);
            if (kept.size() == working.size()) return working;
            working = std::move(kept);
        }
    }

    std::vector<Indicator> run(std::vector<Indicator> working) {
        std::sort(working.begin(), working.end());
        working.erase(std::unique(working.begin(), working.end()), working.end());
        working = settle(std::move(working), -1);
        if (working.empty()) return working;

        const PartialledFit& f0 = fit(working, -1);
        std::vector<size_t> insig;
        for (size_t k = 0; k < working.size(); ++k)
            if (f0.p_value[k] >= config_.gamma) insig.push_back(k);
        if (insig.empty()) return working;
        std::stable_sort(insig.begin(), insig.end(), [&](size_t a, size_t b) {
            return f0.p_value[a] > f0.p_value[b];
        });
        const size_t n_paths = std::min<size_t>(config_.max_paths, insig.size());

        std::vector<Terminal> terminals;
        for (size_t p = 0; p < n_paths; ++p) {
            std::vector<Indicator> w = working;
            w.erase(std::find(w.begin(), w.end(), working[insig[p]]));
            terminals.push_back(eliminate(std::move(w), static_cast<int>(p)));
        }
        Terminal best = terminals[0];
        for (size_t i = 1; i < terminals.size(); ++i)
            if (better_terminal(terminals[i], best)) best = terminals[i];
        return best.set;
    }

private:
    /// Backward elimination: repeatedly delete the worst-p candidate until
    /// all survivors pass gamma.
    Terminal eliminate(std::vector<Indicator> working, int path) {
        while (true) {
            working = settle(std::move(working), path);
            const PartialledFit& f = fit(working, path);
            if (working.empty()) return {working, f.ic};
            size_t worst = 0;
            for (size_t k = 1; k < working.size(); ++k)
                if (f.p_value[k] > f.p_value[worst]) worst = k;
            if (f.p_value[worst] < config_.gamma) return {working, f.ic};
            working.erase(working.begin() + worst);
        }
    }

    const SearchContext& ctx_;
    const SelectionConfig& config_;
    std::vector<FitTrace>* trace_;
    std::string stage_;
    int iteration_;
    int block_;
    std::map<std::vector<Indicator>, PartialledFit> memo_;
};

}  // namespace

std::vector<Indicator> gets_select(const SearchContext& ctx, std::vector<Indicator> working,
                                   const SelectionConfig& config, std::vector<FitTrace>* trace,
                                   const std::string& stage, int iteration, int block) {
    config.validate();
    std::sort(working.begin(), working.end());
    working.erase(std::unique(working.begin(), working.end()), working.end());

    // An oversized working set would fit with next to no residual degrees of
    // freedom and every t-test would pass vacuously. Re-block the set and
    // eliminate sub-block by sub-block until it is small enough to fit
    // honestly. Sub-blocks are within the budget, so the recursion is flat.
    const int budget = ctx.candidate_budget();
    std::uint64_t pass = 0;
    while (static_cast<int>(working.size()) > budget) {
        SelectionConfig sub = config;
        sub.seed = Rng::child_seed(config.seed, 0x75626c6bULL + pass);
        sub.block_size = std::min(config.block_size, budget);
        std::vector<std::vector<Indicator>> subsets;
        std::vector<Indicator> next;
        for (auto& sb : partition_blocks(working, sub)) {
            subsets.push_back(gets_select(ctx, sb, config, trace, stage, iteration, block));
            next.insert(next.end(), subsets.back().begin(), subsets.back().end());
        }
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        if (next == working) {
            // Nothing was eliminated: drop the weakest survivor so the loop
            // always makes progress.
            Indicator worst{};
            double worst_p = -1.0;
            for (const auto& subset : subsets) {
                PartialledFit f = ctx.fit_working(subset);
                for (size_t k = 0; k < subset.size(); ++k) {
                    const double p = f.retained[k] ? f.p_value[k] : 2.0;
                    if (p > worst_p || (p == worst_p && worst < subset[k])) {
                        worst_p = p;
                        worst = subset[k];
                    }
                }
            }
            next.erase(std::find(next.begin(), next.end(), worst));
        }
        working = std::move(next);
        ++pass;
    }

    GetsSearch search(ctx, config, trace, stage, iteration, block);
    return search.run(std::move(working));
}

SelectionResult saturation_search(const PanelDataset& data,
                                  const std::vector<Indicator>& candidates,
                                  const SelectionConfig& config) {
    config.validate();
    SearchContext ctx(data, candidates, config);
    const auto blocks = partition_blocks(candidates, config);

    SelectionResult result;
    std::vector<Indicator> selected;
    for (int iter = 1; iter <= config.max_outer_iterations; ++iter) {
        result.outer_iterations = iter;
        std::vector<std::vector<Indicator>> survivors(blocks.size());
        std::vector<std::vector<FitTrace>> block_trace(blocks.size());
        parallel_for(blocks.size(), config.jobs, [&](size_t b) {
            std::vector<Indicator> w = blocks[b];
            w.insert(w.end(), selected.begin(), selected.end());
            survivors[b] = gets_select(ctx, std::move(w), config, &block_trace[b], "block", iter,
                                       static_cast<int>(b));
        });
        std::vector<Indicator> pooled;
        for (size_t b = 0; b < blocks.size(); ++b) {
            result.trace.insert(result.trace.end(), block_trace[b].begin(), block_trace[b].end());
            pooled.insert(pooled.end(), survivors[b].begin(), survivors[b].end());
        }
        std::sort(pooled.begin(), pooled.end());
        pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());
        result.union_history.push_back(pooled);

        std::vector<Indicator> next =
            gets_select(ctx, pooled, config, &result.trace, "union", iter, -1);
        if (next == selected) {
            result.converged = true;
            break;
        }
        selected = std::move(next);
        result.converged = false;
    }

    result.retained = selected;
    result.final_design = build_design(data, selected);
    FitOptions opt;
    opt.pivot_rel_tol = config.pivot_rel_tol;
    result.final_fit = fit_design(result.final_design, opt);
    return result;
}

SelectionResult sis_search(const PanelDataset& data, const SelectionConfig& config) {
    SelectionConfig c = config;
    c.indicator_kind = CandidateSet::step;
    return saturation_search(data, all_step_candidates(data), c);
}

SelectionResult iis_search(const PanelDataset& data, const SelectionConfig& config) {
    SelectionConfig c = config;
    c.indicator_kind = CandidateSet::impulse;
    return saturation_search(data, all_impulse_candidates(data), c);
}

}  // namespace breakscope
