#include "haptrain/session.hpp"

#include "haptrain/error.hpp"
#include "haptrain/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace haptrain {

namespace {

std::uint64_t course_stream(Task task, Phase phase, int index) {
    return static_cast<std::uint64_t>(task) * 1000 + static_cast<std::uint64_t>(phase) * 100 +
           static_cast<std::uint64_t>(index);
}

nlohmann::json to_json(const Calibration& c) {
    return {{"angle_min", c.angle_min},
            {"angle_max", c.angle_max},
            {"alt_min", c.alt_min},
            {"alt_max", c.alt_max},
            {"polarity", to_string(c.polarity)}};
}

Calibration calibration_from_json(const nlohmann::json& j) {
    return calibrate(j.at("angle_min"), j.at("angle_max"), j.at("alt_min"), j.at("alt_max"),
                     polarity_from_string(j.at("polarity")));
}

}  // namespace

Trajectory PlanEntry::make_course(double knot_spacing) const {
    if (sine) return gen_training_tube(*sine);
    if (task == Task::Waypoint) return gen_ring_course(course_seed);
    return gen_spline_tube(course_seed, knot_spacing);
}

std::string PlanEntry::label() const {
    return to_string(task) + "/" + to_string(phase) + "/" + std::to_string(session_index);
}

SessionPlan build_plan(const std::string& subject_id, FeedbackMode group, std::uint64_t master_seed) {
    SessionPlan plan{subject_id, group, master_seed, {}};
    int order = 0;
    auto add = [&](Task task, Phase phase, int index) {
        PlanEntry e;
        e.order = ++order;
        e.task = task;
        e.phase = phase;
        e.session_index = index;
        e.feedback = phase == Phase::Training;
        e.course_seed = derive_seed(master_seed, course_stream(task, phase, index));
        plan.entries.push_back(e);
    };
    for (int i = 1; i <= 3; ++i) add(Task::Waypoint, Phase::Baseline, i);
    for (int i = 1; i <= 3; ++i) add(Task::PathFollowing, Phase::Baseline, i);
    const auto schedule = training_schedule();
    for (int i = 1; i <= 9; ++i) {
        add(Task::PathFollowing, Phase::Training, i);
        plan.entries.back().sine = schedule[i - 1];
    }
    for (int i = 1; i <= 3; ++i) add(Task::PathFollowing, Phase::Evaluation, i);
    for (int i = 1; i <= 3; ++i) add(Task::Waypoint, Phase::Evaluation, i);
    return plan;
}

nlohmann::json to_json(const PlanEntry& e) {
    nlohmann::json j = {{"order", e.order},
                        {"task", to_string(e.task)},
                        {"phase", to_string(e.phase)},
                        {"session_index", e.session_index},
                        {"feedback", e.feedback},
                        {"course_seed", e.course_seed}};
    if (e.sine) j["sine"] = {{"amplitude", e.sine->amplitude}, {"wavelength", e.sine->wavelength}};
    return j;
}

PlanEntry plan_entry_from_json(const nlohmann::json& j) {
    PlanEntry e;
    e.order = j.at("order");
    e.task = task_from_string(j.at("task"));
    e.phase = phase_from_string(j.at("phase"));
    e.session_index = j.at("session_index");
    e.feedback = j.at("feedback");
    e.course_seed = j.at("course_seed");
    if (j.contains("sine")) {
        SineTubeSpec s;
        s.amplitude = j["sine"].at("amplitude");
        s.wavelength = j["sine"].at("wavelength");
        e.sine = s;
    }
    return e;
}

QuestionnaireResponse validate_questionnaire(const QuestionnaireResponse& r, FeedbackMode group) {
    if (r.likert.empty()) throw ValidationError("questionnaire has no Likert answers");
    for (std::size_t i = 0; i < r.likert.size(); ++i)
        if (r.likert[i] < 0 || r.likert[i] > 6)
            throw ValidationError("Likert answer " + std::to_string(i + 1) + " = " + std::to_string(r.likert[i]) +
                                  " outside 0..6");
    const bool wants_help = r.phase == Phase::Training && group != FeedbackMode::FPV;
    if (r.helpfulness && !wants_help)
        throw ValidationError("helpfulness rating only applies to the training phase of the arrows/haptic groups");
    if (!r.helpfulness && wants_help) throw ValidationError("helpfulness rating required for this group and phase");
    if (r.helpfulness && (*r.helpfulness < 0 || *r.helpfulness > 6))
        throw ValidationError("helpfulness rating outside 0..6");
    return r;
}

nlohmann::json to_json(const QuestionnaireResponse& r) {
    nlohmann::json j = {{"phase", to_string(r.phase)}, {"likert", r.likert}, {"improved", r.improved}};
    if (r.helpfulness) j["helpfulness"] = *r.helpfulness;
    return j;
}

QuestionnaireResponse questionnaire_from_json(const nlohmann::json& j) {
    try {
        QuestionnaireResponse r;
        r.phase = phase_from_string(j.at("phase"));
        r.likert = j.at("likert").get<std::vector<int>>();
        const auto& imp = j.at("improved");
        if (imp.is_boolean())
            r.improved = imp.get<bool>();
        else if (imp.is_string() && (imp == "yes" || imp == "no"))
            r.improved = imp == "yes";
        else
            throw ValidationError("'improved' must be yes/no");
        if (j.contains("helpfulness") && !j["helpfulness"].is_null()) r.helpfulness = j["helpfulness"].get<int>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed questionnaire: ") + e.what());
    }
}

std::string iso_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

SessionRunner::SessionRunner(std::string subject_id, FeedbackMode group, PlanEntry entry, InputSource& source,
                             const StudyConfig& cfg, std::optional<Calibration> calibration)
    : cfg_(cfg),
      cal_(calibration.value_or(cfg.calibration)),
      course_(entry.make_course(cfg.knot_spacing)),
      source_(source) {
    cfg_.validate();
    fb_.threshold = cfg_.threshold;
    fb_.release_band = cfg_.release_band;
    state_ = spawn(course_, cfg_.sim);

    rec_.subject_id = std::move(subject_id);
    rec_.group = group;
    rec_.entry = entry;
    rec_.course = to_json(course_);
    rec_.seed = entry.course_seed;
    rec_.calibration = cal_;
    rec_.config_text = to_text(cfg_);
    rec_.config_hash = config_hash(cfg_);
    rec_.input_source = source.describe();
    rec_.started_at = iso_timestamp_now();
    rec_.error.task = entry.task;
    rec_.error.phase = entry.phase;
    rec_.error.session_index = entry.session_index;

    TraceRow first;
    first.t = state_.t;
    first.x = state_.x;
    first.z = state_.z;
    first.commanded_z = state_.z;
    first.centerline_z = course_.centerline_clamped(state_.x);
    rec_.trace.push_back(first);
}

void SessionRunner::abort(const std::string& why) {
    rec_.valid = false;
    rec_.invalid_reason = why;
    done_ = true;
}

bool SessionRunner::tick() {
    if (done_) return false;
    const auto& prev = rec_.trace.back();
    int arrow = 0;
    if (prev.action.kind == FeedbackAction::Kind::ArrowUp) arrow = 1;
    if (prev.action.kind == FeedbackAction::Kind::ArrowDown) arrow = -1;

    PolledSample polled;
    try {
        polled = source_.read(SourceContext{state_.t, &state_, &course_, arrow});
    } catch (const Error& e) {
        abort(std::string("input source failed: ") + e.what());
        return false;
    }
    if (!std::isfinite(polled.sample.angle)) {
        abort("input source produced a non-finite angle");
        return false;
    }
    const double commanded = map_angle(cal_, polled.sample.angle).z;

    const bool training = rec_.entry.phase == Phase::Training;
    double target = commanded;
    if (training && rec_.group == FeedbackMode::Haptic && cfg_.haptic_restraint)
        target = restrain(commanded, bank_, cal_, cfg_.compliance).z;

    DroneState next;
    try {
        next = step(state_, target, cfg_.sim, course_);
    } catch (const Error& e) {
        abort(std::string("step rejected: ") + e.what());
        return false;
    }

    const bool inside = next.x >= 0.0 && next.x <= course_.length();
    const bool finished = next.x >= course_.length();
    std::vector<FeedbackTransition> transitions;
    if (training && inside) {
        const double err = next.z - course_.centerline(next.x);
        auto out = evaluate(err, fb_, rec_.group, Phase::Training, next.t, cfg_.voltage);
        fb_ = out.state;
        transitions = std::move(out.transitions);
    }
    if (training && finished && fb_.active != ActiveSide::None) {
        transitions.push_back({next.t, TransitionKind::Release, fb_.active});
        fb_.active = ActiveSide::None;
    }
    for (const auto& tr : transitions) {
        const auto side = tr.side == ActiveSide::HighSide ? ClutchSide::Dorsal : ClutchSide::Ventral;
        if (tr.kind == TransitionKind::Engage)
            bank_.engage(side, cfg_.voltage, next.z);
        else
            bank_.release(side, tr.t);
        if (rec_.group == FeedbackMode::Haptic) {
            ++rec_.clutch_commands;
            if (link_)
                if (auto cmd = clutch_command_for(tr, cfg_.voltage)) link_->submit(*cmd);
        }
        rec_.events.push_back(tr);
    }

    TraceRow row;
    row.t = next.t;
    row.x = next.x;
    row.z = next.z;
    row.commanded_z = commanded;
    row.centerline_z = course_.centerline_clamped(next.x);
    row.colliding = next.colliding;
    row.feedback_state = fb_.active;
    row.action = training ? action_for(fb_.active, rec_.group, cfg_.voltage) : FeedbackAction::none();
    rec_.trace.push_back(row);
    rec_.inputs.push_back(polled.sample.angle);
    state_ = next;

    if (finished) done_ = true;
    return !done_;
}

SessionError recompute_error(const TrialRecord& rec) {
    const auto course = trajectory_from_json(rec.course);
    SessionError e;
    e.task = rec.entry.task;
    e.phase = rec.entry.phase;
    e.session_index = rec.entry.session_index;
    if (course.is_tube()) {
        e.error = pf_error(std::span<const TraceRow>(rec.trace), course);
        e.collisions = count_collisions(rec.trace);
    } else {
        std::vector<DroneState> states;
        states.reserve(rec.trace.size());
        for (const auto& r : rec.trace) states.push_back(DroneState{r.x, r.z, r.t});
        const auto crossings = ring_crossings(states, std::get<RingCourse>(course.spec()));
        e.error = wp_error(crossings, std::get<RingCourse>(course.spec()));
    }
    return e;
}

TrialRecord SessionRunner::finish() {
    rec_.finished_at = iso_timestamp_now();
    rec_.run_stats.ticks = state_.tick;
    if (rec_.valid) {
        try {
            rec_.error = recompute_error(rec_);
        } catch (const Error& e) {
            rec_.valid = false;
            rec_.invalid_reason = e.what();
        }
    }
    return rec_;
}

TrialRecord run_session(const std::string& subject_id, FeedbackMode group, const PlanEntry& entry, InputSource& source,
                        const StudyConfig& cfg, const RunOptions& opts) {
    SessionRunner runner(subject_id, group, entry, source, cfg, opts.calibration);
    runner.attach_clutch(opts.clutch);
    while (runner.tick()) {
    }
    return runner.finish();
}

ReplayResult replay_trial(const TrialRecord& rec) {
    const auto cfg = parse_config(rec.config_text);
    if (config_hash(cfg) != rec.config_hash) throw ValidationError("stored config does not match its hash");
    RecordedSource source(rec.inputs);
    ReplayResult out;
    out.replayed = run_session(rec.subject_id, rec.group, rec.entry, source, cfg, RunOptions{rec.calibration, nullptr});
    const auto& a = rec.trace;
    const auto& b = out.replayed.trace;
    const std::size_t n = std::min(a.size(), b.size());
    out.first_mismatch = n;
    for (std::size_t i = 0; i < n; ++i)
        if (to_json(a[i]).dump() != to_json(b[i]).dump()) {
            out.first_mismatch = i;
            break;
        }
    out.identical = a.size() == b.size() && out.first_mismatch == n;
    return out;
}

void write_trial_jsonl(std::ostream& os, const TrialRecord& rec) {
    nlohmann::json head;
    head["type"] = "trial";
    head["version"] = 1;
    head["subject"] = rec.subject_id;
    head["group"] = to_string(rec.group);
    head["entry"] = to_json(rec.entry);
    head["course"] = rec.course;
    head["inputs"] = rec.inputs;
    auto& events = head["events"] = nlohmann::json::array();
    for (const auto& e : rec.events)
        events.push_back({{"t", e.t}, {"kind", to_string(e.kind)}, {"side", to_string(e.side)}});
    head["error"] = {{"task", to_string(rec.error.task)},
                     {"phase", to_string(rec.error.phase)},
                     {"session_index", rec.error.session_index},
                     {"error", rec.error.error},
                     {"collisions", rec.error.collisions}};
    head["valid"] = rec.valid;
    if (!rec.valid) head["invalid_reason"] = rec.invalid_reason;
    head["seed"] = rec.seed;
    head["calibration"] = to_json(rec.calibration);
    head["config"] = rec.config_text;
    head["config_hash"] = rec.config_hash;
    head["input_source"] = rec.input_source;
    head["started_at"] = rec.started_at;
    head["finished_at"] = rec.finished_at;
    head["clutch_commands"] = rec.clutch_commands;
    head["polarity_reversed"] = rec.polarity_reversed;
    head["run_stats"] = {{"ticks", rec.run_stats.ticks},
                         {"overruns", rec.run_stats.overruns},
                         {"p99_tick_ms", rec.run_stats.p99_tick_ms},
                         {"max_tick_ms", rec.run_stats.max_tick_ms}};
    head["warnings"] = rec.warnings;
    head["rows"] = rec.trace.size();
    os << head.dump() << '\n';
    write_trace_jsonl(os, rec.trace);
}

TrialRecord read_trial_jsonl(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ValidationError("empty trial file");
    TrialRecord rec;
    try {
        const auto head = nlohmann::json::parse(line);
        if (head.at("type") != "trial") throw ValidationError("not a trial file");
        rec.subject_id = head.at("subject");
        rec.group = feedback_mode_from_string(head.at("group"));
        rec.entry = plan_entry_from_json(head.at("entry"));
        rec.course = head.at("course");
        rec.inputs = head.at("inputs").get<std::vector<double>>();
        for (const auto& e : head.at("events"))
            rec.events.push_back({e.at("t"),
                                  e.at("kind") == "engage" ? TransitionKind::Engage : TransitionKind::Release,
                                  active_side_from_string(e.at("side"))});
        const auto& err = head.at("error");
        rec.error = {task_from_string(err.at("task")), phase_from_string(err.at("phase")), err.at("session_index"),
                     err.at("error"), err.at("collisions")};
        rec.valid = head.at("valid");
        rec.invalid_reason = head.value("invalid_reason", std::string{});
        rec.seed = head.at("seed");
        rec.calibration = calibration_from_json(head.at("calibration"));
        rec.config_text = head.at("config");
        rec.config_hash = head.at("config_hash");
        rec.input_source = head.value("input_source", std::string{});
        rec.started_at = head.value("started_at", std::string{});
        rec.finished_at = head.value("finished_at", std::string{});
        rec.clutch_commands = head.value("clutch_commands", std::uint64_t{0});
        rec.polarity_reversed = head.value("polarity_reversed", false);
        if (head.contains("run_stats")) {
            const auto& rs = head["run_stats"];
            rec.run_stats = {rs.value("ticks", std::uint64_t{0}), rs.value("overruns", std::uint64_t{0}),
                             rs.value("p99_tick_ms", 0.0), rs.value("max_tick_ms", 0.0)};
        }
        rec.warnings = head.value("warnings", std::vector<std::string>{});
        rec.trace = read_trace_jsonl(is);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed trial file: ") + e.what());
    }
    return rec;
}

void save_trial(const std::string& path, const TrialRecord& rec) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write trial file " + path);
    write_trial_jsonl(out, rec);
}

TrialRecord load_trial(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open trial file " + path);
    return read_trial_jsonl(in);
}

}  // namespace haptrain
