#pragma once

#include "haptrain/dynamics.hpp"
#include "haptrain/feedback.hpp"
#include "haptrain/trace.hpp"
#include "haptrain/trajectory.hpp"

#include <Eigen/Core>

#include <array>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace haptrain {

enum class Task { PathFollowing, Waypoint };

std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct SessionError {
    Task task = Task::PathFollowing;
    Phase phase = Phase::Baseline;
    int session_index = 1;  // 1-based within the phase
    double error = 0.0;     // metres
    int collisions = 0;

    friend bool operator==(const SessionError&, const SessionError&) = default;
};

// Mean absolute altitude error along the tube, as a trapezoidal mean over
// the samples with 0 <= x <= length. The trace must reach both ends of the
// course (MissingDataError otherwise).
double pf_error(const Eigen::Ref<const Eigen::VectorXd>& xs, const Eigen::Ref<const Eigen::VectorXd>& zs,
                const Trajectory& traj);
double pf_error(std::span<const TraceRow> trace, const Trajectory& traj);
double pf_error(std::span<const DroneState> trace, const Trajectory& traj);

// Mean |z - centre| over all rings of the course.
double wp_error(std::span<const RingCrossing> crossings, const RingCourse& course);

// Number of separate wall contacts (rising edges of the colliding flag).
int count_collisions(std::span<const TraceRow> trace);

enum class Grouping { Amplitude, Wavelength };

// Means of the three training sessions sharing each amplitude (0.5, 1,
// 1.5 m) or each wavelength (8, 10, 12 m). Needs all nine sessions.
std::array<double, 3> set_mean(std::span<const SessionError> training, Grouping grouping);

// 100 (baseline - eval) / baseline; positive means fewer errors.
double percent_change(double baseline_mean, double eval_mean);

// Flat results table: one row per (subject, session).
struct MetricRow {
    std::string subject;
    FeedbackMode group = FeedbackMode::FPV;
    Task task = Task::PathFollowing;
    Phase phase = Phase::Baseline;
    int session = 1;
    double error = 0.0;
    int collisions = 0;

    friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

inline constexpr const char* kMetricsCsvHeader = "subject,group,task,phase,session,error,collisions";

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows);
std::vector<MetricRow> read_metrics_csv(std::istream& is);

}  // namespace haptrain
