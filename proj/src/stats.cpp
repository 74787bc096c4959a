#include "haptrain/stats.hpp"

#include "haptrain/distributions.hpp"
#include "haptrain/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace haptrain {

namespace {

TestResult t_result(double t, double df) {
    TestResult r;
    r.statistic = t;
    r.df1 = df;
    r.p_value = t_two_sided_p(t, df);
    r.significant = r.p_value < kSignificance;
    return r;
}

TestResult f_result(double f, double d1, double d2) {
    TestResult r;
    r.statistic = f;
    r.df1 = d1;
    r.df2 = d2;
    r.p_value = f_upper_p(f, d1, d2);
    r.significant = r.p_value < kSignificance;
    return r;
}

void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const char* what) {
    if (!m.allFinite()) throw ValidationError(std::string(what) + " contains missing or non-finite values");
}

}  // namespace

double mean(const Eigen::Ref<const Eigen::VectorXd>& v) {
    return v.mean();
}

double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() < 2) throw ValidationError("standard deviation needs at least two values");
    const double m = v.mean();
    return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

TestResult paired_t(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() != b.size()) throw ValidationError("paired samples differ in length");
    if (a.size() < 2) throw ValidationError("paired t-test needs at least two pairs");
    require_finite(a, "sample a");
    require_finite(b, "sample b");
    const Eigen::VectorXd d = a - b;
    const auto n = static_cast<double>(d.size());
    const double md = d.mean();
    const double ss = (d.array() - md).square().sum();
    if (ss == 0.0) {
        if (md == 0.0) return t_result(0.0, n - 1.0);
        throw DegenerateInputError("paired differences have zero variance");
    }
    const double sd = std::sqrt(ss / (n - 1.0));
    return t_result(md / (sd / std::sqrt(n)), n - 1.0);
}

TestResult independent_t(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    if (a.size() < 2 || b.size() < 2) throw ValidationError("independent t-test needs two values per sample");
    require_finite(a, "sample a");
    require_finite(b, "sample b");
    const auto na = static_cast<double>(a.size());
    const auto nb = static_cast<double>(b.size());
    const double ma = a.mean();
    const double mb = b.mean();
    const double ss = (a.array() - ma).square().sum() + (b.array() - mb).square().sum();
    const double df = na + nb - 2.0;
    if (ss == 0.0) {
        if (ma == mb) return t_result(0.0, df);
        throw DegenerateInputError("both samples have zero variance");
    }
    const double pooled = ss / df;
    return t_result((ma - mb) / std::sqrt(pooled * (1.0 / na + 1.0 / nb)), df);
}

TestResult one_way_anova(const std::vector<Eigen::VectorXd>& groups) {
    if (groups.size() < 2) throw ValidationError("one-way ANOVA needs at least two groups");
    double total = 0.0;
    Eigen::Index n_total = 0;
    for (const auto& g : groups) {
        if (g.size() < 2) throw ValidationError("every ANOVA group needs at least two values");
        require_finite(g, "ANOVA group");
        total += g.sum();
        n_total += g.size();
    }
    const double grand = total / static_cast<double>(n_total);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& g : groups) {
        const double m = g.mean();
        ssb += static_cast<double>(g.size()) * (m - grand) * (m - grand);
        ssw += (g.array() - m).square().sum();
    }
    const auto k = static_cast<double>(groups.size());
    const double d1 = k - 1.0;
    const double d2 = static_cast<double>(n_total) - k;
    const double scale = std::max(ssb + ssw, 1.0) * 1e-14;
    if (ssb <= scale) return f_result(0.0, d1, d2);
    if (ssw <= scale) return f_result(std::numeric_limits<double>::infinity(), d1, d2);
    return f_result((ssb / d1) / (ssw / d2), d1, d2);
}

TestResult rm_anova(const Eigen::Ref<const Eigen::MatrixXd>& data) {
    const Eigen::Index n = data.rows();
    const Eigen::Index k = data.cols();
    if (n < 2 || k < 2) throw ValidationError("repeated-measures ANOVA needs at least 2 subjects and 2 conditions");
    require_finite(data, "repeated-measures table");
    const double grand = data.mean();
    const Eigen::RowVectorXd cond_means = data.colwise().mean();
    const Eigen::VectorXd subj_means = data.rowwise().mean();
    const double ss_total = (data.array() - grand).square().sum();
    const double ss_cond = static_cast<double>(n) * (cond_means.array() - grand).square().sum();
    const double ss_subj = static_cast<double>(k) * (subj_means.array() - grand).square().sum();
    const double ss_err = std::max(0.0, ss_total - ss_cond - ss_subj);
    const double d1 = static_cast<double>(k - 1);
    const double d2 = static_cast<double>((k - 1) * (n - 1));
    // Relative floor so that exact algebraic zeros survive rounding.
    const double scale = std::max(ss_total, 1.0) * 1e-14;
    if (ss_cond <= scale) return f_result(0.0, d1, d2);
    if (ss_err <= scale) return f_result(std::numeric_limits<double>::infinity(), d1, d2);
    return f_result((ss_cond / d1) / (ss_err / d2), d1, d2);
}

Eigen::VectorXd holm_sidak(const Eigen::Ref<const Eigen::VectorXd>& p_values) {
    const Eigen::Index m = p_values.size();
    for (Eigen::Index i = 0; i < m; ++i)
        if (!(p_values(i) >= 0.0 && p_values(i) <= 1.0)) throw RangeError("p-values must lie in [0, 1]");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return p_values(i) < p_values(j); });

    Eigen::VectorXd adjusted(m);
    double running = 0.0;
    for (Eigen::Index rank = 0; rank < m; ++rank) {
        const auto idx = order[static_cast<std::size_t>(rank)];
        const double p = p_values(idx);
        const auto k = m - rank;
        const double adj = k == 1 ? p : 1.0 - std::pow(1.0 - p, static_cast<double>(k));
        running = std::max(running, std::min(1.0, adj));
        adjusted(idx) = running;
    }
    return adjusted;
}

}  // namespace haptrain
