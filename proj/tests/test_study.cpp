#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "haptrain/analysis.hpp"
#include "haptrain/error.hpp"
#include "haptrain/pilot.hpp"
#include "haptrain/rng.hpp"
#include "haptrain/study.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace haptrain;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int n = 0;
        path = fs::temp_directory_path() / ("haptrain_study_test_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ScriptedPilot pilot(const StudyConfig& cfg, std::uint64_t seed) {
    return ScriptedPilot(PilotParams::parse("gain=0.3,delay=10,noise=0.2,seed=" + std::to_string(seed)), cfg.calibration,
                         cfg.sim.dt);
}

// Complete results table; `shift` scales the evaluation errors of the last group.
std::vector<MetricRow> synthetic(std::uint64_t seed, int per_group, double shift = 1.0) {
    Rng rng(seed);
    const FeedbackMode groups[] = {FeedbackMode::FPV, FeedbackMode::Arrows, FeedbackMode::Haptic};
    std::vector<MetricRow> rows;
    int id = 0;
    for (int g = 0; g < 3; ++g)
        for (int s = 0; s < per_group; ++s) {
            const std::string subject = "S" + std::to_string(++id);
            const double skill = rng.normal(0.0, 0.05);
            for (const auto& e : build_plan(subject, groups[g], 1).entries) {
                double err = 0.35 + skill + rng.normal(0.0, 0.05);
                if (e.task == Task::Waypoint) err += 0.15;
                if (g == 2 && e.phase == Phase::Evaluation) err *= shift;
                rows.push_back({subject, groups[g], e.task, e.phase, e.session_index, err, 0});
            }
        }
    return rows;
}

}  // namespace

TEST_CASE("create assigns subjects round robin and reopens") {
    TempDir tmp;
    {
        auto study = Study::create(tmp.path, parse_groups("fpv,arrows,haptic"), 7, 42);
        REQUIRE(study.manifest().subjects.size() == 7);
        CHECK(study.subject("S01").group == FeedbackMode::FPV);
        CHECK(study.subject("S02").group == FeedbackMode::Arrows);
        CHECK(study.subject("S06").group == FeedbackMode::Haptic);
        CHECK(study.subject("S07").group == FeedbackMode::FPV);
        CHECK_THROWS_AS(study.subject("S99"), ValidationError);
    }
    CHECK(fs::exists(tmp.path / "manifest.json"));
    CHECK(fs::exists(tmp.path / "metrics.csv"));
    auto again = Study::open(tmp.path);
    CHECK(again.manifest().master_seed == 42);
    CHECK(again.manifest().subjects.size() == 7);
    CHECK_THROWS_AS(Study::create(tmp.path, parse_groups("fpv"), 2, 1), ValidationError);
}

TEST_CASE("group list parsing") {
    CHECK(parse_groups("haptic,fpv").size() == 2);
    CHECK_THROWS_AS(parse_groups("fpv,fpv"), ValidationError);
    CHECK_THROWS_AS(parse_groups(""), ValidationError);
    CHECK_THROWS_AS(parse_groups("fpv,vr"), ValidationError);
}

TEST_CASE("sessions run in plan order") {
    TempDir tmp;
    auto study = Study::create(tmp.path, parse_groups("fpv,haptic"), 2, 3);
    auto p = pilot(study.config(), 1);
    CHECK_THROWS_AS(study.run("S01", p, 5), PhaseError);
    const auto rec = study.run("S01", p);
    CHECK(rec.entry.order == 1);
    CHECK(study.completed("S01") == std::vector<int>{1});
    CHECK(study.next_entry("S01")->order == 2);
    CHECK(fs::exists(study.trial_path("S01", 1)));
    CHECK(study.trial_jsonl("S01", 1)->find("\"subject\":\"S01\"") != std::string::npos);
    CHECK_FALSE(study.trial_jsonl("S01", 2));

    // Out of order on request.
    const auto late = study.run("S01", p, 9, true);
    CHECK(late.entry.order == 9);
    CHECK(study.next_entry("S01")->order == 2);
}

TEST_CASE("questionnaire waits for the phase") {
    TempDir tmp;
    auto study = Study::create(tmp.path, parse_groups("haptic"), 1, 3);
    const QuestionnaireResponse base{Phase::Baseline, {3, 4}, true, std::nullopt};
    CHECK_THROWS_AS(study.capture_questionnaire("S01", base), PhaseError);
    auto p = pilot(study.config(), 2);
    for (int i = 0; i < 6; ++i) study.run("S01", p);
    CHECK(study.capture_questionnaire("S01", base) == base);
    CHECK_THROWS_AS(study.capture_questionnaire("S01", {Phase::Baseline, {9}, true, std::nullopt}), ValidationError);
    REQUIRE(study.questionnaires("S01").size() == 1);
    CHECK(study.questionnaires("S01")[0] == base);
}

TEST_CASE("metrics table, polarity ledger and reopen") {
    TempDir tmp;
    {
        auto study = Study::create(tmp.path, parse_groups("fpv,arrows,haptic"), 3, 5);
        for (const auto& s : study.manifest().subjects) {
            auto p = pilot(study.config(), 10);
            for (int i = 0; i < 2; ++i) study.run(s.id, p);
        }
        const auto d = study.device_ledger();
        CHECK(d.total_subjects == 3);
        CHECK(d.polarity_reversed == false);  // third subject is back to normal polarity
    }
    auto study = Study::open(tmp.path);
    const auto rows = study.metric_rows();
    CHECK(rows.size() == 6);
    std::ifstream in(tmp.path / "metrics.csv");
    CHECK(read_metrics_csv(in) == rows);

    const auto s2 = load_trial((tmp.path / "trials" / "S02_01.jsonl").string());
    CHECK(s2.polarity_reversed);
    CHECK(replay_trial(s2).identical);
    const auto status = study.status();
    CHECK(status["progress"][0]["completed"] == 2);
}

TEST_CASE("a config edited behind the study's back is refused") {
    TempDir tmp;
    Study::create(tmp.path, parse_groups("fpv"), 1, 1);
    std::ofstream(tmp.path / "config.txt", std::ios::app) << "threshold = 0.3\n";
    CHECK_THROWS_AS(Study::open(tmp.path), ValidationError);
}

TEST_CASE("analysis of an incomplete study lists what is missing") {
    auto rows = synthetic(1, 3);
    rows.erase(rows.begin() + 4);
    try {
        analyze_study(rows);
        FAIL("expected MissingDataError");
    } catch (const MissingDataError& e) {
        REQUIRE(e.missing().size() == 1);
    }
    std::vector<MetricRow> one(rows.begin(), rows.begin() + 20);
    CHECK_THROWS_AS(analyze_study(one), MissingDataError);
}

TEST_CASE("analysis battery shape") {
    const auto report = analyze_study(synthetic(7, 10));
    CHECK(report.groups.size() == 3);
    const auto* base = report.find("between_group_anova", "path_following baseline");
    REQUIRE(base);
    REQUIRE(base->result);
    CHECK(base->result->df1 == 2);
    CHECK(base->result->df2 == 27);
    CHECK(base->post_hoc.size() == 3);
    const auto* rm = report.find("training_rm_anova", "haptic across amplitude");
    REQUIRE(rm);
    REQUIRE(rm->result);
    CHECK(rm->result->df1 == 2);
    CHECK(rm->result->df2 == 18);
    CHECK(report.find("within_group_paired_t", "fpv waypoint baseline vs evaluation"));
    CHECK(report.find("training_set_anova", "wavelength 12"));
    CHECK(report.percent_changes.size() == 6);
    CHECK_FALSE(to_text(report).empty());
    CHECK(to_json(report)["comparisons"].size() == report.entries.size());
}

TEST_CASE("a halved evaluation error in one group is detected") {
    const auto report = analyze_study(synthetic(11, 10, 0.5));
    const auto* eval = report.find("between_group_anova", "path_following evaluation");
    REQUIRE(eval);
    REQUIRE(eval->result);
    CHECK(eval->result->significant);
    const auto* paired = report.find("within_group_paired_t", "haptic path_following baseline vs evaluation");
    REQUIRE(paired);
    CHECK(paired->result->significant);
}
