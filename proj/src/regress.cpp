#include "breakscope/regress.hpp"

#include "breakscope/util.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace breakscope {

namespace {

constexpr double kExactFitRel = 1e-18;
constexpr double kExactCoefTol = 1e-8;
constexpr double kRssFloorPerRow = 1e-280;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

double floored_rss(double rss, long n) {
    return std::max(rss, static_cast<double>(n) * kRssFloorPerRow);
}

bool is_exact(double rss, const Eigen::VectorXd& y) {
    return rss <= kExactFitRel * std::max(1.0, y.squaredNorm());
}

double exact_fit_p(double coef) { return std::abs(coef) > kExactCoefTol ? 0.0 : 1.0; }

}  // namespace

double student_t_p(double t_stat, int df) {
    if (df <= 0) throw numerical_error("no residual degrees of freedom for a t test");
    if (!std::isfinite(t_stat)) return 0.0;
    boost::math::students_t dist(df);
    return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t_stat)));
}

double chi_squared_quantile(double prob, int df) {
    boost::math::chi_squared dist(df);
    return boost::math::quantile(dist, prob);
}

double FitResult::ic() const {
    return n * std::log(floored_rss(rss, n) / n) + rank * std::log(static_cast<double>(n));
}

std::vector<int> FitResult::dropped_columns() const {
    std::vector<int> out;
    for (size_t i = 0; i < retained.size(); ++i)
        if (!retained[i]) out.push_back(static_cast<int>(i));
    return out;
}

ForcedProjector::ForcedProjector(const Eigen::MatrixXd& forced, double pivot_rel_tol) {
    retained_.assign(forced.cols(), false);
    Q_.resize(forced.rows(), 0);
    if (forced.cols() == 0) return;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    qr.setThreshold(pivot_rel_tol);
    qr.compute(forced);
    rank_ = static_cast<int>(qr.rank());
    for (int k = 0; k < rank_; ++k) retained_[qr.colsPermutation().indices()[k]] = true;
    Q_ = qr.householderQ() * Eigen::MatrixXd::Identity(forced.rows(), rank_);
}

Eigen::VectorXd ForcedProjector::residualize(const Eigen::VectorXd& v) const {
    if (rank_ == 0) return v;
    return v - Q_ * (Q_.transpose() * v);
}

Eigen::MatrixXd ForcedProjector::residualize(const Eigen::MatrixXd& m) const {
    if (rank_ == 0) return m;
    return m - Q_ * (Q_.transpose() * m);
}

PartialledFit fit_partialled(const Eigen::MatrixXd& cand_resid, const Eigen::VectorXd& y_resid,
                             int rank_forced, const FitOptions& options) {
    const long n = y_resid.size();
    if (cand_resid.rows() != n) throw input_error("candidate/response row mismatch");
    const int m = static_cast<int>(cand_resid.cols());

    PartialledFit out;
    out.n = n;
    out.coef = Eigen::VectorXd::Zero(m);
    out.se = Eigen::VectorXd::Constant(m, kNaN);
    out.p_value = Eigen::VectorXd::Constant(m, kNaN);
    out.retained.assign(m, false);

    int rank_c = 0;
    Eigen::VectorXd resid = y_resid;
    Eigen::MatrixXd r_inv;
    std::vector<int> pivot;
    if (m > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
        qr.setThreshold(options.pivot_rel_tol);
        qr.compute(cand_resid);
        rank_c = static_cast<int>(qr.rank());
        if (rank_c > 0) {
            Eigen::MatrixXd r1 = qr.matrixR().topLeftCorner(rank_c, rank_c);
            Eigen::VectorXd qty = (qr.householderQ().transpose() * y_resid).head(rank_c);
            Eigen::VectorXd beta = r1.triangularView<Eigen::Upper>().solve(qty);
            r_inv = r1.triangularView<Eigen::Upper>().solve(
                Eigen::MatrixXd::Identity(rank_c, rank_c));
            pivot.resize(rank_c);
            for (int k = 0; k < rank_c; ++k) {
                pivot[k] = qr.colsPermutation().indices()[k];
                out.coef[pivot[k]] = beta[k];
                out.retained[pivot[k]] = true;
            }
            resid = y_resid - cand_resid * out.coef;
        }
    }

    out.rss = resid.squaredNorm();
    out.rank_total = rank_forced + rank_c;
    out.df = static_cast<int>(n) - out.rank_total;
    out.exact_fit = is_exact(out.rss, y_resid);
    if (out.df <= 0 && !out.exact_fit && rank_c > 0)
        throw numerical_error("degrees of freedom exhausted (n=" + std::to_string(n) +
                              ", rank=" + std::to_string(out.rank_total) +
                              "); reduce the block size or candidate count");
    const double sigma2 = out.df > 0 ? out.rss / out.df : 0.0;
    for (int k = 0; k < rank_c; ++k) {
        const int j = pivot[k];
        if (out.exact_fit) {
            out.se[j] = 0.0;
            out.p_value[j] = exact_fit_p(out.coef[j]);
            continue;
        }
        out.se[j] = std::sqrt(sigma2 * r_inv.row(k).squaredNorm());
        out.p_value[j] = out.se[j] > 0.0 ? student_t_p(out.coef[j] / out.se[j], out.df)
                                         : exact_fit_p(out.coef[j]);
    }
    out.ic = n * std::log(floored_rss(out.rss, n) / n) +
             out.rank_total * std::log(static_cast<double>(n));
    return out;
}

FitResult fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int n_forced,
                  const FitOptions& options) {
    const long n = X.rows();
    const int p = static_cast<int>(X.cols());
    if (y.size() != n) throw input_error("design/response row mismatch");
    if (n == 0) throw input_error("empty design");
    if (n_forced < 0 || n_forced > p) throw input_error("n_forced out of range");

    FitResult out;
    out.n = n;
    out.coef = Eigen::VectorXd::Zero(p);
    out.se = Eigen::VectorXd::Constant(p, kNaN);
    out.p_value = Eigen::VectorXd::Constant(p, kNaN);
    out.retained.assign(p, false);

    std::vector<int> kept;
    Eigen::MatrixXd q_forced;
    int rank_f = 0;
    if (n_forced > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
        qr.setThreshold(options.pivot_rel_tol);
        qr.compute(X.leftCols(n_forced));
        rank_f = static_cast<int>(qr.rank());
        for (int k = 0; k < rank_f; ++k) kept.push_back(qr.colsPermutation().indices()[k]);
        std::sort(kept.begin(), kept.end());
        q_forced = qr.householderQ() * Eigen::MatrixXd::Identity(n, rank_f);
    }
    if (p > n_forced) {
        Eigen::MatrixXd cand = X.rightCols(p - n_forced);
        // Pivot size is judged against the candidates' scale before projection,
        // so a candidate aliased by the forced block is dropped, never the
        // forced column.
        double scale = 0.0;
        for (long j = 0; j < cand.cols(); ++j) scale = std::max(scale, cand.col(j).norm());
        if (rank_f > 0) cand -= q_forced * (q_forced.transpose() * cand);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cand);
        int rank_c = 0;
        const int max_rank = static_cast<int>(std::min<long>(cand.rows(), cand.cols()));
        while (rank_c < max_rank &&
               std::abs(qr.matrixQR()(rank_c, rank_c)) > options.pivot_rel_tol * scale)
            ++rank_c;
        std::vector<int> kept_cand;
        for (int k = 0; k < rank_c; ++k)
            kept_cand.push_back(n_forced + qr.colsPermutation().indices()[k]);
        std::sort(kept_cand.begin(), kept_cand.end());
        kept.insert(kept.end(), kept_cand.begin(), kept_cand.end());
    }

    const int k = static_cast<int>(kept.size());
    out.rank = k;
    out.df = static_cast<int>(n) - k;
    Eigen::VectorXd resid = y;
    Eigen::MatrixXd r_inv;
    Eigen::VectorXd beta;
    if (k > 0) {
        Eigen::MatrixXd xk(n, k);
        for (int j = 0; j < k; ++j) xk.col(j) = X.col(kept[j]);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(xk);
        Eigen::MatrixXd r1 = qr.matrixQR().topLeftCorner(k, k);
        for (int j = 0; j < k; ++j)
            if (r1(j, j) == 0.0)
                throw numerical_error("rank detection failed on retained columns");
        beta = qr.solve(y);
        r_inv = r1.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
        resid = y - xk * beta;
    }
    out.rss = resid.squaredNorm();
    out.exact_fit = is_exact(out.rss, y);
    out.sigma2 = out.df > 0 ? out.rss / out.df : 0.0;
    for (int j = 0; j < k; ++j) {
        const int col = kept[j];
        out.retained[col] = true;
        out.coef[col] = beta[j];
        if (out.exact_fit) {
            out.se[col] = 0.0;
            out.p_value[col] = exact_fit_p(beta[j]);
        } else if (out.df > 0) {
            out.se[col] = std::sqrt(out.sigma2 * r_inv.row(j).squaredNorm());
            out.p_value[col] = out.se[col] > 0.0 ? student_t_p(beta[j] / out.se[col], out.df)
                                                 : exact_fit_p(beta[j]);
        }
    }
    return out;
}

FitResult fit_design(const DesignMatrix& design, const FitOptions& options) {
    return fit_ols(design.X, design.y, design.n_forced, options);
}

Eigen::VectorXd predict(const Eigen::MatrixXd& X, const FitResult& fit) {
    if (X.cols() != fit.coef.size()) throw input_error("design/coefficient size mismatch");
    return X * fit.coef;
}

Eigen::VectorXd predict_zeroed(const DesignMatrix& design, const FitResult& fit,
                               const std::vector<int>& zeroed_columns) {
    if (design.X.cols() != fit.coef.size()) throw input_error("design/coefficient size mismatch");
    Eigen::VectorXd coef = fit.coef;
    for (int col : zeroed_columns) {
        if (col < 0 || col >= design.n_cols())
            throw input_error("zeroed column index out of range");
        if (!fit.retained[col])
            throw input_error("column " + design.columns[col].name + " is not in the fit");
        coef[col] = 0.0;
    }
    return design.X * coef;
}

ClusterStats cluster_se(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const FitResult& fit,
                        const std::vector<int>& cluster) {
    const long n = X.rows();
    if (static_cast<long>(cluster.size()) != n)
        throw input_error("cluster id count does not match rows");
    if (fit.coef.size() != X.cols()) throw input_error("fit does not match design");

    std::vector<int> kept;
    for (size_t i = 0; i < fit.retained.size(); ++i)
        if (fit.retained[i]) kept.push_back(static_cast<int>(i));
    const int k = static_cast<int>(kept.size());

    ClusterStats out;
    out.se = Eigen::VectorXd::Constant(X.cols(), kNaN);
    out.p_value = Eigen::VectorXd::Constant(X.cols(), kNaN);
    std::map<int, int> group_index;
    for (int id : cluster) group_index.emplace(id, static_cast<int>(group_index.size()));
    const int n_groups = static_cast<int>(group_index.size());
    out.n_clusters = n_groups;
    if (k == 0) return out;
    if (n_groups < 2)
        throw numerical_error("cluster-robust standard errors need at least 2 clusters");
    if (n - k <= 0) throw numerical_error("no residual degrees of freedom for cluster inference");

    Eigen::MatrixXd xk(n, k);
    for (int j = 0; j < k; ++j) xk.col(j) = X.col(kept[j]);
    const Eigen::VectorXd u = y - X * fit.coef;

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(xk);
    Eigen::MatrixXd r1 = qr.matrixQR().topLeftCorner(k, k);
    Eigen::MatrixXd r_inv =
        r1.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    Eigen::MatrixXd bread = r_inv * r_inv.transpose();

    Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(n_groups, k);
    for (long i = 0; i < n; ++i) scores.row(group_index.at(cluster[i])) += u[i] * xk.row(i);
    Eigen::MatrixXd meat = scores.transpose() * scores;
    const double c = (static_cast<double>(n_groups) / (n_groups - 1)) *
                     (static_cast<double>(n - 1) / (n - k));
    Eigen::MatrixXd v = c * bread * meat * bread;

    for (int j = 0; j < k; ++j) {
        const int col = kept[j];
        out.se[col] = std::sqrt(std::max(0.0, v(j, j)));
        if (out.se[col] > 0.0)
            out.p_value[col] = student_t_p(fit.coef[col] / out.se[col], n_groups - 1);
        else
            out.p_value[col] = exact_fit_p(fit.coef[col]);
    }
    return out;
}

}  // namespace breakscope
