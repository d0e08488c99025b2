#pragma once

#include "breakscope/panel.hpp"
#include "breakscope/saturation.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace breakscope {

struct GammaRun {
    double gamma = 0.0;
    std::vector<Indicator> retained;
};

struct GammaReport {
    std::vector<GammaRun> runs;
    std::vector<std::vector<double>> jaccard;  // pairwise overlap of retained sets
    std::vector<Indicator> all_breaks;         // union across runs, sorted
    std::vector<std::vector<bool>> presence;   // [break][run]
};

double jaccard_index(const std::vector<Indicator>& a, const std::vector<Indicator>& b);

/// Re-run selection at each significance level and report how the retained
/// set moves.
GammaReport gamma_sensitivity(const PanelDataset& data, const std::vector<double>& gammas,
                              const SelectionConfig& base);

struct IisReport {
    std::vector<Indicator> sis_retained;
    std::vector<Indicator> both_retained;  // steps and impulses competing
    std::vector<bool> persists;  // per SIS step: still there within +-1 year
    int n_impulses = 0;
};

/// Do step retentions survive when impulse indicators compete for the same
/// variation?
IisReport iis_stability(const PanelDataset& data, const SelectionConfig& config);

/// Interactive fixed-effects synthetic control on a donor panel of
/// log-emissions: unit and time effects plus a rank-r factor structure,
/// fitted by alternating least squares; treated loadings from pre-treatment
/// periods only.
struct GscmCore {
    Eigen::VectorXd synthetic;  // all T periods, log scale
    std::vector<double> att;    // observed - synthetic, post periods
    double pre_rmse = 0.0;
    double mean_att = 0.0;
    int sweeps = 0;
};

GscmCore gscm_core(const Eigen::MatrixXd& donors_log, const Eigen::VectorXd& treated_log,
                   int pre_count, int r);

struct GscmResult {
    std::string treated_iso3;
    int break_year = 0;
    int r = -1;  // factor count chosen by cross-validation
    double pre_rmse = 0.0;
    std::vector<int> att_years;
    std::vector<double> att;
    double mean_att = 0.0;
    bool insufficient_pretreatment = false;
    std::vector<double> cv_mse;  // indexed by r
    int n_donors = 0;
};

/// Validate one break against a synthetic control built from countries
/// with no retained break. Needs >= 5 pre-treatment periods (else flagged,
/// no estimate) and >= 2 donors. Factor count r in {0..r_max} chosen by
/// leave-one-pre-period-out cross-validation; r=0 is plain
/// difference-in-differences.
GscmResult gscm_validate(const PanelDataset& data, const std::vector<Indicator>& retained,
                         const Indicator& brk, int r_max = 3);

}  // namespace breakscope
