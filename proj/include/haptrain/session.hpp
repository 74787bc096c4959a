#pragma once

#include "haptrain/clutch.hpp"
#include "haptrain/config.hpp"
#include "haptrain/feedback.hpp"
#include "haptrain/inputmap.hpp"
#include "haptrain/metrics.hpp"
#include "haptrain/trace.hpp"
#include "haptrain/trajectory.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace haptrain {

inline constexpr int kPlanLength = 21;

struct PlanEntry {
    int order = 1;  // 1..21, chronological
    Task task = Task::PathFollowing;
    Phase phase = Phase::Baseline;
    int session_index = 1;  // 1-based within (task, phase)
    bool feedback = false;  // only the nine training sessions
    std::uint64_t course_seed = 0;
    std::optional<SineTubeSpec> sine;  // training tubes

    Trajectory make_course(double knot_spacing = kDefaultKnotSpacing) const;
    std::string label() const;  // e.g. "path_following/training/4"

    friend bool operator==(const PlanEntry&, const PlanEntry&) = default;
};

struct SessionPlan {
    std::string subject_id;
    FeedbackMode group = FeedbackMode::FPV;
    std::uint64_t master_seed = 0;
    std::vector<PlanEntry> entries;
};

// Waypoint baseline x3, path-following baseline x3, training x9 (schedule
// order), path-following evaluation x3, waypoint evaluation x3. Course
// seeds depend only on master_seed and the slot, so every subject of a
// study flies the same courses.
SessionPlan build_plan(const std::string& subject_id, FeedbackMode group, std::uint64_t master_seed);

nlohmann::json to_json(const PlanEntry& e);
PlanEntry plan_entry_from_json(const nlohmann::json& j);

struct QuestionnaireResponse {
    Phase phase = Phase::Baseline;
    std::vector<int> likert;           // 0..6 each
    bool improved = false;             // yes/no self-assessment
    std::optional<int> helpfulness;    // training phase, arrows/haptic groups only

    friend bool operator==(const QuestionnaireResponse&, const QuestionnaireResponse&) = default;
};

// Throws ValidationError for out-of-range answers or a helpfulness answer
// from the wrong group / phase (or one missing where it is required).
QuestionnaireResponse validate_questionnaire(const QuestionnaireResponse& r, FeedbackMode group);

nlohmann::json to_json(const QuestionnaireResponse& r);
QuestionnaireResponse questionnaire_from_json(const nlohmann::json& j);

struct RunStats {
    std::uint64_t ticks = 0;
    std::uint64_t overruns = 0;
    double p99_tick_ms = 0.0;
    double max_tick_ms = 0.0;
};

struct TrialRecord {
    std::string subject_id;
    FeedbackMode group = FeedbackMode::FPV;
    PlanEntry entry;
    nlohmann::json course;  // trajectory document
    std::vector<TraceRow> trace;
    std::vector<double> inputs;  // elbow angle used on each tick
    std::vector<FeedbackTransition> events;
    SessionError error;
    bool valid = true;
    std::string invalid_reason;
    std::uint64_t seed = 0;
    Calibration calibration;
    std::string config_text;
    std::string config_hash;
    std::string input_source;
    std::string started_at;
    std::string finished_at;
    std::uint64_t clutch_commands = 0;
    bool polarity_reversed = false;
    RunStats run_stats;
    std::vector<std::string> warnings;
};

// Header line with everything but the trace, then one line per trace row.
void write_trial_jsonl(std::ostream& os, const TrialRecord& rec);
TrialRecord read_trial_jsonl(std::istream& is);
void save_trial(const std::string& path, const TrialRecord& rec);
TrialRecord load_trial(const std::string& path);

// Steps one session tick by tick. The headless runner and the real-time
// loop both drive this, so traces depend only on (config, course, inputs).
class SessionRunner {
public:
    SessionRunner(std::string subject_id, FeedbackMode group, PlanEntry entry, InputSource& source,
                  const StudyConfig& cfg, std::optional<Calibration> calibration = std::nullopt);

    // Advances one tick; false once the course is complete or aborted.
    bool tick();
    bool done() const { return done_; }

    // Attach a device link; haptic transitions are submitted to it.
    void attach_clutch(ClutchLink* link) { link_ = link; }

    const Trajectory& course() const { return course_; }
    const DroneState& state() const { return state_; }
    const TraceRow& last_row() const { return rec_.trace.back(); }
    const PlanEntry& entry() const { return rec_.entry; }
    const StudyConfig& config() const { return cfg_; }
    const ClutchBank& clutches() const { return bank_; }
    std::uint64_t ticks() const { return state_.tick; }

    const std::string& subject_id() const { return rec_.subject_id; }
    FeedbackMode group() const { return rec_.group; }

    // Ends the session early; the record is marked invalid.
    void abort(const std::string& why);

    // Computes metrics and returns the finished record.
    TrialRecord finish();

private:

    StudyConfig cfg_;
    Calibration cal_;
    Trajectory course_;
    InputSource& source_;
    ClutchLink* link_ = nullptr;
    DroneState state_;
    FeedbackState fb_;
    ClutchBank bank_;
    TrialRecord rec_;
    bool done_ = false;
};

struct RunOptions {
    std::optional<Calibration> calibration;
    ClutchLink* clutch = nullptr;
};

// Runs a plan entry headless to completion.
TrialRecord run_session(const std::string& subject_id, FeedbackMode group, const PlanEntry& entry, InputSource& source,
                        const StudyConfig& cfg, const RunOptions& opts = {});

// Recomputes the session error from the stored trace and course.
SessionError recompute_error(const TrialRecord& rec);

struct ReplayResult {
    bool identical = false;
    std::size_t first_mismatch = 0;  // trace row index
    TrialRecord replayed;
};

// Re-runs a stored trial from its config, course seed and recorded inputs.
ReplayResult replay_trial(const TrialRecord& rec);

std::string iso_timestamp_now();

}  // namespace haptrain
