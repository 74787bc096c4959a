#pragma once

#include "haptrain/metrics.hpp"
#include "haptrain/stats.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace haptrain {

struct PostHoc {
    std::string a;
    std::string b;
    TestResult raw;
    double adjusted_p = 1.0;
    bool significant = false;
};

// One omnibus test of the battery plus its corrected pairwise follow-ups.
struct ReportEntry {
    std::string family;  // within_group_paired_t, between_group_anova, training_set_anova, training_rm_anova
    std::string label;
    std::optional<TestResult> result;  // empty when the data were degenerate
    std::string note;
    std::vector<PostHoc> post_hoc;
};

struct PercentChangeEntry {
    FeedbackMode group;
    Task task;
    double baseline_mean = 0.0;
    double evaluation_mean = 0.0;
    double percent = 0.0;
};

struct StudyReport {
    std::vector<FeedbackMode> groups;
    std::vector<ReportEntry> entries;
    std::vector<PercentChangeEntry> percent_changes;

    const ReportEntry* find(const std::string& family, const std::string& label) const;
};

// Full comparison battery over a results table:
//  - per group, paired t between baseline and evaluation (both tasks);
//  - between groups, one-way ANOVA + Holm-Sidak post-hoc t-tests at
//    baseline and evaluation (both tasks);
//  - between groups, ANOVA on each amplitude set and each wavelength set;
//  - per group, repeated-measures ANOVA across amplitudes and across
//    wavelengths with Holm-Sidak paired post-hoc tests.
// Throws MissingDataError listing the missing cells for incomplete studies.
StudyReport analyze_study(std::span<const MetricRow> rows);

nlohmann::json to_json(const StudyReport& report);
std::string to_text(const StudyReport& report);

}  // namespace haptrain
