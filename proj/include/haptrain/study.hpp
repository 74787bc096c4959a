#pragma once

#include "haptrain/clutch.hpp"
#include "haptrain/config.hpp"
#include "haptrain/metrics.hpp"
#include "haptrain/session.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace haptrain {

struct SubjectInfo {
    std::string id;
    FeedbackMode group = FeedbackMode::FPV;
};

struct StudyManifest {
    int version = 1;
    std::uint64_t master_seed = 0;
    std::vector<FeedbackMode> groups;
    std::vector<SubjectInfo> subjects;
    std::string config_hash;
    std::string created_at;
};

// A study directory:
//   manifest.json            seeds, groups, subject assignment, config hash
//   config.txt               canonical configuration
//   subjects/<id>.jsonl      append-only: calibration, trial summaries, questionnaires
//   trials/<id>_<NN>.jsonl   full trial records (header line + trace rows)
//   metrics.csv              summary table, rewritten after every trial
//   device.json              clutch polarity / spring bookkeeping
// One writer at a time; all mutating calls are serialised internally.
class Study {
public:
    // Subjects are assigned to groups round-robin: S01 -> groups[0], ...
    static Study create(const std::filesystem::path& dir, const std::vector<FeedbackMode>& groups, int subjects,
                        std::uint64_t master_seed, const StudyConfig& cfg = {});
    static Study open(const std::filesystem::path& dir);

    Study(Study&& other) noexcept;
    Study& operator=(Study&&) = delete;

    const std::filesystem::path& dir() const { return dir_; }
    const StudyManifest& manifest() const { return manifest_; }
    const StudyConfig& config() const { return config_; }
    const SubjectInfo& subject(const std::string& id) const;

    SessionPlan plan_for(const std::string& id) const;
    // Plan orders with a valid stored trial.
    std::vector<int> completed(const std::string& id) const;
    std::optional<PlanEntry> next_entry(const std::string& id) const;

    void set_calibration(const std::string& id, const Calibration& cal);
    std::optional<Calibration> calibration(const std::string& id) const;

    // Runs `order` (default: next in plan) and persists the trial. Out of
    // order runs throw PhaseError unless allow_out_of_order.
    TrialRecord run(const std::string& id, InputSource& source, std::optional<int> order = std::nullopt,
                    bool allow_out_of_order = false, ClutchLink* clutch = nullptr);

    // Persists an externally produced trial (e.g. from the real-time loop).
    void store_trial(const TrialRecord& rec);

    std::filesystem::path trial_path(const std::string& id, int order) const;
    std::optional<std::string> trial_jsonl(const std::string& id, int order) const;

    // Validates and appends. The path-following sessions of that phase must
    // already be complete.
    QuestionnaireResponse capture_questionnaire(const std::string& id, const QuestionnaireResponse& r);
    std::vector<QuestionnaireResponse> questionnaires(const std::string& id) const;

    std::vector<MetricRow> metric_rows() const;
    void write_metrics_csv() const;

    DeviceLedger device_ledger() const;
    // Registers the subject with the device ledger on first use.
    void begin_subject_if_needed(const std::string& id);

    nlohmann::json status() const;

private:
    Study(std::filesystem::path dir, StudyManifest manifest, StudyConfig cfg);

    std::vector<nlohmann::json> subject_log(const std::string& id) const;
    void append_subject_log(const std::string& id, const nlohmann::json& rec) const;

    std::filesystem::path dir_;
    StudyManifest manifest_;
    StudyConfig config_;
    mutable std::recursive_mutex mutex_;
};

std::vector<FeedbackMode> parse_groups(const std::string& csv);

}  // namespace haptrain
