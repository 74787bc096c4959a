#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "haptrain/error.hpp"
#include "haptrain/pilot.hpp"
#include "haptrain/session.hpp"

#include <cmath>
#include <sstream>

using namespace haptrain;

namespace {

PilotParams perfect() {
    PilotParams p;
    p.gain = 1.0;
    p.delay_ticks = 0;
    p.lookahead = 0.05;
    return p;
}

PilotParams noisy(std::uint64_t seed) {
    return PilotParams::parse("gain=0.3,delay=10,noise=0.3,tau=0.8,lookahead=0.5,seed=" + std::to_string(seed));
}

// Fails on the n-th read.
class FailingSource final : public InputSource {
public:
    explicit FailingSource(int after) : after_(after) {}
    PolledSample read(const SourceContext& ctx) override {
        if (reads_++ >= after_) throw NoSignalError("sensor unplugged");
        return {InputSample{90.0, ctx.t}, false};
    }
    std::string describe() const override { return "failing"; }

private:
    int after_;
    int reads_ = 0;
};

}  // namespace

TEST_CASE("plan layout") {
    const auto plan = build_plan("S01", FeedbackMode::Haptic, 77);
    REQUIRE(plan.entries.size() == 21);
    for (int i = 0; i < 21; ++i) {
        const auto& e = plan.entries[i];
        CHECK(e.order == i + 1);
        const bool training = i >= 6 && i <= 14;
        CHECK(e.feedback == training);
        CHECK((e.phase == Phase::Training) == training);
    }
    CHECK(plan.entries[0].task == Task::Waypoint);
    CHECK(plan.entries[3].task == Task::PathFollowing);
    CHECK(plan.entries[15].phase == Phase::Evaluation);
    CHECK(plan.entries[20].task == Task::Waypoint);
    CHECK(plan.entries[6].sine == training_schedule()[0]);
    CHECK(plan.entries[6].label() == "path_following/training/1");
}

TEST_CASE("subjects of one study share courses") {
    const auto a = build_plan("S01", FeedbackMode::FPV, 5);
    const auto b = build_plan("S02", FeedbackMode::Haptic, 5);
    for (int i = 0; i < 21; ++i) CHECK(a.entries[i].make_course().coefficient_bytes() == b.entries[i].make_course().coefficient_bytes());
    const auto c = build_plan("S01", FeedbackMode::FPV, 6);
    CHECK(a.entries[0].make_course().coefficient_bytes() != c.entries[0].make_course().coefficient_bytes());
    // Baseline and evaluation courses differ.
    CHECK(a.entries[3].course_seed != a.entries[15].course_seed);
}

TEST_CASE("plan entry json round trip") {
    for (const auto& e : build_plan("S01", FeedbackMode::Arrows, 3).entries) CHECK(plan_entry_from_json(to_json(e)) == e);
}

TEST_CASE("questionnaire validation") {
    QuestionnaireResponse r{Phase::Baseline, {6, 0, 3}, true, std::nullopt};
    CHECK_NOTHROW(validate_questionnaire(r, FeedbackMode::FPV));
    r.likert[0] = 7;
    CHECK_THROWS_AS(validate_questionnaire(r, FeedbackMode::FPV), ValidationError);
    r.likert[0] = -1;
    CHECK_THROWS_AS(validate_questionnaire(r, FeedbackMode::FPV), ValidationError);

    QuestionnaireResponse t{Phase::Training, {4}, false, 5};
    CHECK_THROWS_AS(validate_questionnaire(t, FeedbackMode::FPV), ValidationError);
    CHECK_NOTHROW(validate_questionnaire(t, FeedbackMode::Haptic));
    t.helpfulness.reset();
    CHECK_THROWS_AS(validate_questionnaire(t, FeedbackMode::Arrows), ValidationError);
    CHECK_NOTHROW(validate_questionnaire(t, FeedbackMode::FPV));

    QuestionnaireResponse e{Phase::Evaluation, {1}, false, 2};
    CHECK_THROWS_AS(validate_questionnaire(e, FeedbackMode::Haptic), ValidationError);

    const QuestionnaireResponse h{Phase::Training, {2, 3}, true, 6};
    CHECK(questionnaire_from_json(to_json(h)) == h);
    auto j = to_json(h);
    j["improved"] = "yes";
    CHECK(questionnaire_from_json(j).improved);
    j["improved"] = "maybe";
    CHECK_THROWS_AS(questionnaire_from_json(j), ValidationError);
}

TEST_CASE("perfect tracking gives zero error on every kind of course") {
    StudyConfig cfg;
    for (auto group : {FeedbackMode::FPV, FeedbackMode::Haptic}) {
        for (const auto& e : build_plan("S01", group, 21).entries) {
            ScriptedPilot pilot(perfect(), cfg.calibration, cfg.sim.dt);
            const auto rec = run_session("S01", group, e, pilot, cfg);
            REQUIRE(rec.valid);
            CHECK(rec.error.error < 1e-6);
            CHECK(rec.error.collisions == 0);
        }
    }
}

TEST_CASE("holding z = 10 on the sine tube") {
    StudyConfig cfg;
    cfg.sim.clamp_to_walls = false;
    PlanEntry e;
    e.task = Task::PathFollowing;
    e.phase = Phase::Training;
    e.sine = SineTubeSpec{1.0, 10.0};
    ConstantAltitudeSource hold(10.0, cfg.calibration);
    const auto rec = run_session("S01", FeedbackMode::FPV, e, hold, cfg);
    REQUIRE(rec.valid);
    // Mean |sin| over 7.6 wavelengths, by quadrature.
    CHECK(std::abs(rec.error.error - 0.63224268) < 1e-4);
}

TEST_CASE("mode isolation: no clutch commands outside haptic training") {
    StudyConfig cfg;
    const auto plan = build_plan("S01", FeedbackMode::FPV, 2);
    for (auto group : {FeedbackMode::FPV, FeedbackMode::Arrows, FeedbackMode::Haptic}) {
        for (int order : {4, 9, 16}) {
            ScriptedPilot pilot(noisy(3), cfg.calibration, cfg.sim.dt);
            const auto rec = run_session("S01", group, plan.entries[order - 1], pilot, cfg);
            const bool expect = group == FeedbackMode::Haptic && order == 9;
            CHECK((rec.clutch_commands > 0) == expect);
            if (order != 9) CHECK(rec.events.empty());
        }
    }
}

TEST_CASE("arrows reach the input source") {
    StudyConfig cfg;
    const auto plan = build_plan("S01", FeedbackMode::Arrows, 2);
    auto p = noisy(4);
    auto q = p;
    q.arrow_gain = 0.3;
    ScriptedPilot plain(p, cfg.calibration, cfg.sim.dt), helped(q, cfg.calibration, cfg.sim.dt);
    const auto a = run_session("S01", FeedbackMode::Arrows, plan.entries[8], plain, cfg);
    const auto b = run_session("S01", FeedbackMode::Arrows, plan.entries[8], helped, cfg);
    CHECK(a.inputs != b.inputs);
}

TEST_CASE("input failure aborts and keeps the partial trace") {
    StudyConfig cfg;
    FailingSource src(300);
    const auto rec = run_session("S01", FeedbackMode::FPV, build_plan("S01", FeedbackMode::FPV, 1).entries[3], src, cfg);
    CHECK_FALSE(rec.valid);
    CHECK(rec.invalid_reason.find("sensor unplugged") != std::string::npos);
    CHECK(rec.trace.size() == 301);
}

TEST_CASE("trial jsonl round trip and replay") {
    StudyConfig cfg;
    const auto plan = build_plan("S09", FeedbackMode::Haptic, 99);
    for (int order : {2, 5, 10}) {
        ScriptedPilot pilot(noisy(order), cfg.calibration, cfg.sim.dt);
        const auto rec = run_session("S09", FeedbackMode::Haptic, plan.entries[order - 1], pilot, cfg);
        std::stringstream ss;
        write_trial_jsonl(ss, rec);
        const std::string first = ss.str();
        const auto back = read_trial_jsonl(ss);
        std::stringstream again;
        write_trial_jsonl(again, back);
        CHECK(again.str() == first);
        CHECK(back.trace.size() == rec.trace.size());
        CHECK(recompute_error(back).error == rec.error.error);

        const auto rep = replay_trial(back);
        CHECK(rep.identical);
        CHECK(trace_jsonl(rep.replayed.trace) == trace_jsonl(rec.trace));
    }
}

TEST_CASE("replay detects a tampered trace") {
    StudyConfig cfg;
    ScriptedPilot pilot(noisy(1), cfg.calibration, cfg.sim.dt);
    auto rec = run_session("S01", FeedbackMode::FPV, build_plan("S01", FeedbackMode::FPV, 1).entries[4], pilot, cfg);
    rec.trace[500].z += 1e-9;
    const auto rep = replay_trial(rec);
    CHECK_FALSE(rep.identical);
    CHECK(rep.first_mismatch == 500);
}

TEST_CASE("pilot parameter strings") {
    const auto p = PilotParams::parse("gain=0.25,delay=7,noise=0.1,tau=0.3,lookahead=0.8,arrow=0.2,seed=11");
    CHECK(p.gain == 0.25);
    CHECK(p.delay_ticks == 7);
    CHECK(p.seed == 11);
    CHECK(PilotParams::parse(p.to_string()).to_string() == p.to_string());
    CHECK_THROWS_AS(PilotParams::parse("speed=3"), ValidationError);
}
