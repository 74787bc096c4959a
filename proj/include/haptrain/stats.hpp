#pragma once

#include <Eigen/Core>

#include <limits>
#include <string>
#include <vector>

namespace haptrain {

inline constexpr double kSignificance = 0.05;

struct TestResult {
    double statistic = 0.0;  // t or F
    double df1 = 0.0;        // t: df; F: numerator df
    double df2 = std::numeric_limits<double>::quiet_NaN();  // F: denominator df
    double p_value = 1.0;
    bool significant = false;  // p < 0.05
};

// Two-sided paired t-test on a - b. Throws ValidationError on length
// mismatch or n < 2 and DegenerateInputError when every difference is the
// same nonzero value; all-zero differences give t = 0, p = 1.
TestResult paired_t(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

// Two-sided Student t-test for two independent samples, pooled variance.
TestResult independent_t(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b);

// F = MS_between / MS_within with df (k - 1, N - k).
TestResult one_way_anova(const std::vector<Eigen::VectorXd>& groups);

// Within-subjects ANOVA on an n x k (subjects x conditions) matrix,
// df (k - 1, (k - 1)(n - 1)). NaN cells are rejected.
TestResult rm_anova(const Eigen::Ref<const Eigen::MatrixXd>& data);

// Holm-Sidak step-down adjustment; returned in input order.
Eigen::VectorXd holm_sidak(const Eigen::Ref<const Eigen::VectorXd>& p_values);

// Sample mean / standard deviation helpers (n - 1 denominator).
double mean(const Eigen::Ref<const Eigen::VectorXd>& v);
double sample_sd(const Eigen::Ref<const Eigen::VectorXd>& v);

}  // namespace haptrain
