#pragma once

#include "breakscope/panel.hpp"

#include <Eigen/Dense>

#include <vector>

namespace breakscope {

struct FitOptions {
    /// Columns whose pivot falls below this fraction of the largest pivot
    /// are treated as linearly dependent and dropped.
    double pivot_rel_tol = 1e-10;
};

/// OLS fit with rank handling. Dropped (aliased) columns get coefficient 0
/// and NaN standard errors; `retained` records which survived.
struct FitResult {
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    Eigen::VectorXd p_value;
    std::vector<bool> retained;
    double rss = 0.0;
    long n = 0;
    int rank = 0;
    int df = 0;
    double sigma2 = 0.0;
    bool exact_fit = false;

    /// Schwarz criterion n*ln(rss/n) + rank*ln(n), with rss floored so an
    /// exact fit stays finite and comparable.
    double ic() const;
    std::vector<int> dropped_columns() const;
};

/// Two-stage rank-revealing fit: forced columns claim the column space
/// first, then candidates are tested against what remains, so an indicator
/// collinear with the fixed effects is the one that gets dropped.
FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int n_forced,
                  const FitOptions& options = {});

FitResult fit_design(const DesignMatrix& design, const FitOptions& options = {});

Eigen::VectorXd predict(const Eigen::MatrixXd& X, const FitResult& fit);

/// Fitted values with selected columns' contributions removed (the
/// counterfactual device). Zeroing a column the fit did not retain is an
/// error.
Eigen::VectorXd predict_zeroed(const DesignMatrix& design, const FitResult& fit,
                               const std::vector<int>& zeroed_columns);

/// Cluster-robust (sandwich) inference for a fitted model. With every row
/// its own cluster this reduces to HC1.
struct ClusterStats {
    Eigen::VectorXd se;
    Eigen::VectorXd p_value;  // t with n_clusters - 1 df
    int n_clusters = 0;
};

ClusterStats cluster_se(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitResult& fit,
                        const std::vector<int>& cluster);

/// Orthonormal basis of a forced-column block, reused to residualize many
/// candidate columns cheaply (Frisch-Waugh-Lovell partialling).
class ForcedProjector {
public:
    ForcedProjector() = default;
    explicit ForcedProjector(const Eigen::MatrixXd& forced, double pivot_rel_tol = 1e-10);

    int rank() const { return rank_; }
    const std::vector<bool>& forced_retained() const { return retained_; }
    Eigen::VectorXd residualize(const Eigen::VectorXd& v) const;
    Eigen::MatrixXd residualize(const Eigen::MatrixXd& m) const;

private:
    Eigen::MatrixXd Q_;
    std::vector<bool> retained_;
    int rank_ = 0;
};

/// Fit of residualized candidate columns against the residualized response.
/// Coefficients, standard errors and RSS match the full joint fit exactly;
/// only the candidate block is carried, which is what selection needs.
struct PartialledFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    Eigen::VectorXd p_value;
    std::vector<bool> retained;
    double rss = 0.0;
    long n = 0;
    int rank_total = 0;  // forced rank + candidate rank
    int df = 0;
    bool exact_fit = false;
    double ic = 0.0;
};

PartialledFit fit_partialled(const Eigen::MatrixXd& cand_resid, const Eigen::VectorXd& y_resid,
                             int rank_forced, const FitOptions& options = {});

double student_t_p(double t_stat, int df);
double chi_squared_quantile(double prob, int df);

}  // namespace breakscope
