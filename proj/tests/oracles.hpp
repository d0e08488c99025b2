#pragma once

// Independent reference implementations used to cross-check the library.
// Deliberately naive: explicit normal equations, explicit demeaning, the
// 2x2 difference-in-differences formula. Full-rank inputs only.

#include <Eigen/Dense>

#include <vector>

namespace oracle {

struct Ols {
    Eigen::VectorXd coef;
    Eigen::VectorXd se;
    double rss = 0.0;
    int df = 0;
};

// beta = (X'X)^-1 X'y with an explicit inverse.
inline Ols ols_normal_equations(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::MatrixXd xtx = X.transpose() * X;
    Eigen::MatrixXd inv = xtx.fullPivLu().inverse();
    Ols out;
    out.coef = inv * (X.transpose() * y);
    Eigen::VectorXd resid = y - X * out.coef;
    out.rss = resid.squaredNorm();
    out.df = static_cast<int>(X.rows()) - static_cast<int>(X.cols());
    double s2 = out.df > 0 ? out.rss / out.df : 0.0;
    out.se = (s2 * inv.diagonal().array()).cwiseMax(0.0).sqrt();
    return out;
}

// One-way fixed effects by explicit within-unit demeaning of y and the
// slope regressors, then OLS without intercept on the demeaned data.
inline Eigen::VectorXd within_slopes(const Eigen::MatrixXd& slopes, const Eigen::VectorXd& y,
                                     const std::vector<int>& unit, int n_units) {
    Eigen::MatrixXd xd = slopes;
    Eigen::VectorXd yd = y;
    for (int u = 0; u < n_units; ++u) {
        std::vector<long> rows;
        for (long i = 0; i < y.size(); ++i)
            if (unit[static_cast<std::size_t>(i)] == u) rows.push_back(i);
        if (rows.empty()) continue;
        Eigen::RowVectorXd xmean = Eigen::RowVectorXd::Zero(slopes.cols());
        double ymean = 0.0;
        for (long i : rows) {
            xmean += slopes.row(i);
            ymean += y(i);
        }
        xmean /= static_cast<double>(rows.size());
        ymean /= static_cast<double>(rows.size());
        for (long i : rows) {
            xd.row(i) -= xmean;
            yd(i) -= ymean;
        }
    }
    return ols_normal_equations(xd, yd).coef;
}

// HC1 heteroskedasticity-robust standard errors for a full-rank fit.
inline Eigen::VectorXd hc1_se(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const Eigen::VectorXd& coef) {
    long n = X.rows();
    long k = X.cols();
    Eigen::VectorXd resid = y - X * coef;
    Eigen::MatrixXd bread = (X.transpose() * X).fullPivLu().inverse();
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(k, k);
    for (long i = 0; i < n; ++i) {
        Eigen::VectorXd xi = X.row(i).transpose();
        meat += resid(i) * resid(i) * xi * xi.transpose();
    }
    double scale = static_cast<double>(n) / static_cast<double>(n - k);
    Eigen::MatrixXd v = scale * bread * meat * bread;
    return v.diagonal().cwiseMax(0.0).cwiseSqrt();
}

// Two-period treated-versus-donor-mean difference in differences.
inline double did_2x2(double treated_pre, double treated_post, double donor_pre,
                      double donor_post) {
    return (treated_post - treated_pre) - (donor_post - donor_pre);
}

}  // namespace oracle
