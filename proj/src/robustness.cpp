#include "breakscope/robustness.hpp"

#include "breakscope/util.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <set>

namespace breakscope {

double jaccard_index(const std::vector<Indicator>& a, const std::vector<Indicator>& b) {
    std::set<Indicator> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t both = 0;
    for (const auto& x : sa) both += sb.count(x);
    const std::size_t either = sa.size() + sb.size() - both;
    return either == 0 ? 1.0 : static_cast<double>(both) / either;
}

GammaReport gamma_sensitivity(const PanelDataset& data, const std::vector<double>& gammas,
                              const SelectionConfig& base) {
    if (gammas.empty()) throw input_error("gamma_sensitivity needs at least one gamma");
    GammaReport report;
    for (double g : gammas) {
        SelectionConfig c = base;
        c.gamma = g;
        GammaRun run;
        run.gamma = g;
        run.retained = sis_search(data, c).retained;
        report.runs.push_back(std::move(run));
    }
    const size_t k = report.runs.size();
    report.jaccard.assign(k, std::vector<double>(k, 1.0));
    for (size_t i = 0; i < k; ++i)
        for (size_t j = i + 1; j < k; ++j)
            report.jaccard[i][j] = report.jaccard[j][i] =
                jaccard_index(report.runs[i].retained, report.runs[j].retained);

    std::set<Indicator> all;
    for (const auto& run : report.runs) all.insert(run.retained.begin(), run.retained.end());
    report.all_breaks.assign(all.begin(), all.end());
    report.presence.assign(report.all_breaks.size(), std::vector<bool>(k, false));
    for (size_t b = 0; b < report.all_breaks.size(); ++b)
        for (size_t r = 0; r < k; ++r)
            report.presence[b][r] =
                std::binary_search(report.runs[r].retained.begin(),
                                   report.runs[r].retained.end(), report.all_breaks[b]);
    return report;
}

IisReport iis_stability(const PanelDataset& data, const SelectionConfig& config) {
    IisReport report;
    report.sis_retained = sis_search(data, config).retained;

    std::vector<Indicator> candidates = all_step_candidates(data);
    const auto impulses = all_impulse_candidates(data);
    candidates.insert(candidates.end(), impulses.begin(), impulses.end());
    SelectionConfig c = config;
    c.indicator_kind = CandidateSet::both;
    report.both_retained = saturation_search(data, candidates, c).retained;

    for (const auto& ind : report.both_retained)
        if (ind.kind == IndicatorKind::impulse) ++report.n_impulses;
    report.persists.reserve(report.sis_retained.size());
    for (const auto& step : report.sis_retained) {
        bool found = false;
        for (const auto& ind : report.both_retained)
            if (ind.kind == IndicatorKind::step && ind.country == step.country &&
                std::abs(ind.year - step.year) <= 1)
                found = true;
        report.persists.push_back(found);
    }
    return report;
}

namespace {

struct FactorModel {
    double grand = 0.0;
    Eigen::VectorXd xi;  // T time effects, mean zero
    Eigen::MatrixXd f;   // T x r factors
    int sweeps = 0;
};

/// Unit and time effects plus a rank-r factor structure on the donor
/// panel, factors by alternating least squares from a principal-component
/// start.
FactorModel fit_factor_model(const Eigen::MatrixXd& donors, int r) {
    const long n = donors.rows(), t = donors.cols();
    FactorModel fm;
    fm.grand = donors.mean();
    const Eigen::VectorXd row_mean = donors.rowwise().mean();
    const Eigen::VectorXd col_mean = donors.colwise().mean();
    fm.xi = col_mean.array() - fm.grand;

    Eigen::MatrixXd resid = donors;
    resid.colwise() -= row_mean;
    resid.rowwise() -= fm.xi.transpose();
    // resid is now doubly demeaned: Y - rowmean - colmean + grand

    fm.f = Eigen::MatrixXd::Zero(t, r);
    if (r == 0) return fm;

    // A factor beyond the numerical rank of the demeaned panel would make
    // the alternating solves divide by zero; cap r at what the data carry.
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(resid, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double frob = resid.norm();
    int r_eff = 0;
    for (int k = 0; k < r && k < sv.size(); ++k) {
        if (sv[k] <= 1e-10 * sv[0] || sv[k] <= 1e-12 * std::max(1.0, frob)) break;
        ++r_eff;
    }
    if (r_eff == 0) return fm;

    Eigen::MatrixXd f = svd.matrixV().leftCols(r_eff);
    Eigen::MatrixXd lambda(n, r_eff);

    double prev = std::numeric_limits<double>::infinity();
    const double scale = std::max(1.0, resid.squaredNorm());
    for (int sweep = 1; sweep <= 500; ++sweep) {
        lambda = f.colPivHouseholderQr().solve(resid.transpose()).transpose();
        f = lambda.colPivHouseholderQr().solve(resid).transpose();
        const double obj = (resid - lambda * f.transpose()).squaredNorm();
        if (obj > prev + 1e-9 * scale)
            throw numerical_error("factor estimation objective increased at sweep " +
                                  std::to_string(sweep));
        fm.sweeps = sweep;
        if (prev - obj <= 1e-12 * scale) {
            fm.f = f;
            return fm;
        }
        prev = obj;
    }
    throw convergence_error("factor estimation did not converge after 500 sweeps (rank " +
                            std::to_string(r) + ", objective " + std::to_string(prev) + ")");
}

/// Treated unit's intercept and loadings from the given pre-treatment
/// periods; returns the synthetic series over all periods.
Eigen::VectorXd synth_from_pre(const FactorModel& fm, const Eigen::VectorXd& treated,
                               const std::vector<int>& pre_idx) {
    const long t = treated.size();
    const int r = static_cast<int>(fm.f.cols());
    if (static_cast<int>(pre_idx.size()) < r + 1)
        throw input_error("too few pre-treatment periods for the factor count");
    Eigen::MatrixXd design(pre_idx.size(), r + 1);
    Eigen::VectorXd z(pre_idx.size());
    for (size_t k = 0; k < pre_idx.size(); ++k) {
        design(k, 0) = 1.0;
        design.row(k).tail(r) = fm.f.row(pre_idx[k]);
        z[k] = treated[pre_idx[k]] - fm.grand - fm.xi[pre_idx[k]];
    }
    const Eigen::VectorXd beta = design.colPivHouseholderQr().solve(z);
    Eigen::VectorXd synth(t);
    for (long p = 0; p < t; ++p)
        synth[p] = fm.grand + fm.xi[p] + beta[0] + fm.f.row(p).dot(beta.tail(r));
    return synth;
}

}  // namespace

GscmCore gscm_core(const Eigen::MatrixXd& donors_log, const Eigen::VectorXd& treated_log,
                   int pre_count, int r) {
    const long t = treated_log.size();
    if (donors_log.cols() != t) throw input_error("donor/treated period mismatch");
    if (donors_log.rows() < 2) throw input_error("need at least 2 donor countries");
    if (pre_count < 1 || pre_count >= t) throw input_error("pre-treatment count out of range");
    if (r < 0 || r > std::min(donors_log.rows(), donors_log.cols()) - 1)
        throw input_error("factor count out of range");
    if (pre_count < r + 1) throw input_error("too few pre-treatment periods for the factor count");

    FactorModel fm = fit_factor_model(donors_log, r);
    std::vector<int> pre_idx(pre_count);
    for (int k = 0; k < pre_count; ++k) pre_idx[k] = k;

    GscmCore out;
    out.synthetic = synth_from_pre(fm, treated_log, pre_idx);
    out.sweeps = fm.sweeps;
    double sq = 0.0;
    for (int k = 0; k < pre_count; ++k) {
        const double d = treated_log[k] - out.synthetic[k];
        sq += d * d;
    }
    out.pre_rmse = std::sqrt(sq / pre_count);
    for (long p = pre_count; p < t; ++p)
        out.att.push_back(treated_log[p] - out.synthetic[p]);
    out.mean_att = 0.0;
    for (double a : out.att) out.mean_att += a;
    out.mean_att /= static_cast<double>(out.att.size());
    return out;
}

GscmResult gscm_validate(const PanelDataset& data, const std::vector<Indicator>& retained,
                         const Indicator& brk, int r_max) {
    if (brk.kind != IndicatorKind::step) throw input_error("synthetic control needs a step break");
    if (r_max < 0) throw input_error("r_max must be nonnegative");

    GscmResult result;
    result.treated_iso3 = data.countries.at(brk.country).iso3;
    result.break_year = brk.year;

    const int t = data.n_years();
    const int pre_count = data.year_index(brk.year);
    if (pre_count < 5) {
        result.insufficient_pretreatment = true;
        return result;
    }

    std::set<int> broken;
    for (const auto& ind : retained)
        if (ind.kind == IndicatorKind::step) broken.insert(ind.country);
    std::vector<int> donors;
    for (int i = 0; i < data.n_countries(); ++i)
        if (i != brk.country && !broken.count(i)) donors.push_back(i);
    result.n_donors = static_cast<int>(donors.size());
    if (result.n_donors < 2)
        throw input_error("synthetic control for " + result.treated_iso3 +
                          " needs at least 2 countries with no retained break");

    Eigen::MatrixXd donors_log(donors.size(), t);
    for (size_t k = 0; k < donors.size(); ++k)
        for (int p = 0; p < t; ++p)
            donors_log(k, p) = std::log(data.emissions(donors[k], p));
    Eigen::VectorXd treated_log(t);
    for (int p = 0; p < t; ++p) treated_log[p] = std::log(data.emissions(brk.country, p));

    const int r_cap = std::min({r_max, result.n_donors - 1, t - 1, pre_count - 2});
    for (int r = 0; r <= r_cap; ++r) {
        FactorModel fm = fit_factor_model(donors_log, r);
        double sq = 0.0;
        for (int hold = 0; hold < pre_count; ++hold) {
            std::vector<int> pre_idx;
            for (int k = 0; k < pre_count; ++k)
                if (k != hold) pre_idx.push_back(k);
            const Eigen::VectorXd synth = synth_from_pre(fm, treated_log, pre_idx);
            const double d = treated_log[hold] - synth[hold];
            sq += d * d;
        }
        result.cv_mse.push_back(sq / pre_count);
    }
    int best_r = 0;
    for (int r = 1; r < static_cast<int>(result.cv_mse.size()); ++r)
        if (result.cv_mse[r] < result.cv_mse[best_r]) best_r = r;

    const GscmCore core = gscm_core(donors_log, treated_log, pre_count, best_r);
    result.r = best_r;
    result.pre_rmse = core.pre_rmse;
    result.att = core.att;
    result.mean_att = core.mean_att;
    for (int year = brk.year; year <= data.year_last; ++year) result.att_years.push_back(year);
    return result;
}

}  // namespace breakscope
