#include "haptrain/trace.hpp"

#include "haptrain/error.hpp"

#include <nlohmann/json.hpp>

#include <sstream>

namespace haptrain {

namespace {

FeedbackAction action_from_string(const std::string& s) {
    if (s == "none") return FeedbackAction::none();
    if (s == "arrow_up") return FeedbackAction::arrow_up();
    if (s == "arrow_down") return FeedbackAction::arrow_down();
    if (s == "engage_dorsal") return FeedbackAction::engage(ClutchSide::Dorsal, kOperatingVoltage);
    if (s == "engage_ventral") return FeedbackAction::engage(ClutchSide::Ventral, kOperatingVoltage);
    throw ValidationError("unknown feedback action '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const TraceRow& row) {
    nlohmann::json j;
    j["t"] = row.t;
    j["x"] = row.x;
    j["z"] = row.z;
    j["commanded_z"] = row.commanded_z;
    j["centerline_z"] = row.centerline_z;
    j["colliding"] = row.colliding;
    j["feedback_state"] = to_string(row.feedback_state);
    j["action"] = to_string(row.action);
    if (row.action.kind == FeedbackAction::Kind::Engage) j["voltage"] = row.action.voltage;
    return j;
}

TraceRow trace_row_from_json(const nlohmann::json& j) {
    TraceRow r;
    r.t = j.at("t");
    r.x = j.at("x");
    r.z = j.at("z");
    r.commanded_z = j.at("commanded_z");
    r.centerline_z = j.at("centerline_z");
    r.colliding = j.at("colliding");
    r.feedback_state = active_side_from_string(j.at("feedback_state"));
    r.action = action_from_string(j.value("action", std::string("none")));
    if (r.action.kind == FeedbackAction::Kind::Engage) r.action.voltage = j.value("voltage", kOperatingVoltage);
    return r;
}

void write_trace_jsonl(std::ostream& os, const std::vector<TraceRow>& rows) {
    for (const auto& r : rows) os << to_json(r).dump() << '\n';
}

std::vector<TraceRow> read_trace_jsonl(std::istream& is) {
    std::vector<TraceRow> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        rows.push_back(trace_row_from_json(nlohmann::json::parse(line)));
    }
    return rows;
}

std::string trace_jsonl(const std::vector<TraceRow>& rows) {
    std::ostringstream os;
    write_trace_jsonl(os, rows);
    return os.str();
}

}  // namespace haptrain
