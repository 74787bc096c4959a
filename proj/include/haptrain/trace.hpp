#pragma once

#include "haptrain/feedback.hpp"

#include <nlohmann/json_fwd.hpp>

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace haptrain {

// One simulation tick as exported to JSONL.
struct TraceRow {
    double t = 0.0;
    double x = 0.0;
    double z = 0.0;
    double commanded_z = 0.0;
    double centerline_z = 0.0;  // reference at x, clamped into the course
    bool colliding = false;
    ActiveSide feedback_state = ActiveSide::None;
    FeedbackAction action;

    friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

nlohmann::json to_json(const TraceRow& row);
TraceRow trace_row_from_json(const nlohmann::json& j);

// {"t","x","z","commanded_z","centerline_z","colliding","feedback_state","action"} per line.
void write_trace_jsonl(std::ostream& os, const std::vector<TraceRow>& rows);
std::vector<TraceRow> read_trace_jsonl(std::istream& is);
std::string trace_jsonl(const std::vector<TraceRow>& rows);

}  // namespace haptrain
