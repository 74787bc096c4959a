#include "haptrain/analysis.hpp"

#include "haptrain/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace haptrain {

namespace {

constexpr int kSessionsPerPhase = 3;
constexpr int kTrainingSessions = 9;

struct SubjectData {
    FeedbackMode group = FeedbackMode::FPV;
    // [task][phase][session-1]
    std::map<std::tuple<Task, Phase, int>, double> cells;

    double phase_mean(Task task, Phase phase) const {
        double s = 0.0;
        for (int i = 1; i <= kSessionsPerPhase; ++i) s += cells.at({task, phase, i});
        return s / kSessionsPerPhase;
    }

    std::vector<SessionError> training() const {
        std::vector<SessionError> out;
        for (int i = 1; i <= kTrainingSessions; ++i)
            out.push_back({Task::PathFollowing, Phase::Training, i, cells.at({Task::PathFollowing, Phase::Training, i}), 0});
        return out;
    }
};

std::vector<std::tuple<Task, Phase, int>> required_cells() {
    std::vector<std::tuple<Task, Phase, int>> cells;
    for (auto task : {Task::Waypoint, Task::PathFollowing})
        for (auto phase : {Phase::Baseline, Phase::Evaluation})
            for (int i = 1; i <= kSessionsPerPhase; ++i) cells.emplace_back(task, phase, i);
    for (int i = 1; i <= kTrainingSessions; ++i) cells.emplace_back(Task::PathFollowing, Phase::Training, i);
    return cells;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

template <typename Test>
ReportEntry run_entry(std::string family, std::string label, Test&& test) {
    ReportEntry e{std::move(family), std::move(label), std::nullopt, {}, {}};
    try {
        e.result = test();
    } catch (const Error& err) {
        e.note = err.what();
    }
    return e;
}

template <typename PairTest>
void add_post_hoc(ReportEntry& entry, const std::vector<std::string>& names, const std::vector<Eigen::VectorXd>& samples,
                  PairTest&& test) {
    std::vector<PostHoc> tests;
    for (std::size_t i = 0; i < samples.size(); ++i)
        for (std::size_t j = i + 1; j < samples.size(); ++j) {
            try {
                tests.push_back({names[i], names[j], test(samples[i], samples[j]), 1.0, false});
            } catch (const Error& err) {
                entry.note += (entry.note.empty() ? "" : "; ") + names[i] + " vs " + names[j] + ": " + err.what();
            }
        }
    if (tests.empty()) return;
    Eigen::VectorXd p(static_cast<Eigen::Index>(tests.size()));
    for (std::size_t i = 0; i < tests.size(); ++i) p(static_cast<Eigen::Index>(i)) = tests[i].raw.p_value;
    const Eigen::VectorXd adj = holm_sidak(p);
    for (std::size_t i = 0; i < tests.size(); ++i) {
        tests[i].adjusted_p = adj(static_cast<Eigen::Index>(i));
        tests[i].significant = tests[i].adjusted_p < kSignificance;
    }
    entry.post_hoc = std::move(tests);
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nlohmann::json to_json(const TestResult& r) {
    nlohmann::json j = {{"statistic", r.statistic}, {"df1", r.df1}, {"p", r.p_value}, {"significant", r.significant}};
    if (!std::isnan(r.df2)) j["df2"] = r.df2;
    return j;
}

std::string describe(const TestResult& r) {
    std::ostringstream os;
    if (std::isnan(r.df2))
        os << "t(" << r.df1 << ") = " << fmt(r.statistic);
    else
        os << "F(" << r.df1 << "," << r.df2 << ") = " << fmt(r.statistic);
    os << ", P = " << fmt(r.p_value, 3) << (r.significant ? " *" : "");
    return os.str();
}

}  // namespace

const ReportEntry* StudyReport::find(const std::string& family, const std::string& label) const {
    for (const auto& e : entries)
        if (e.family == family && e.label == label) return &e;
    return nullptr;
}

StudyReport analyze_study(std::span<const MetricRow> rows) {
    std::map<std::string, SubjectData> subjects;
    for (const auto& r : rows) {
        auto [it, inserted] = subjects.try_emplace(r.subject);
        if (inserted)
            it->second.group = r.group;
        else if (it->second.group != r.group)
            throw ValidationError("subject " + r.subject + " appears in more than one group");
        it->second.cells[{r.task, r.phase, r.session}] = r.error;
    }

    std::vector<std::string> missing;
    for (const auto& [id, data] : subjects)
        for (const auto& cell : required_cells())
            if (!data.cells.count(cell))
                missing.push_back(id + ": " + to_string(std::get<0>(cell)) + "/" + to_string(std::get<1>(cell)) + "/" +
                                  std::to_string(std::get<2>(cell)));

    std::map<FeedbackMode, std::vector<std::string>> members;
    for (const auto& [id, data] : subjects) members[data.group].push_back(id);
    if (members.size() < 2) missing.push_back("study needs at least two feedback groups");
    for (const auto& [group, ids] : members)
        if (ids.size() < 2) missing.push_back("group " + to_string(group) + " needs at least two subjects");
    if (!missing.empty()) throw MissingDataError("incomplete study (" + std::to_string(missing.size()) + " missing)", missing);

    StudyReport report;
    std::vector<std::string> group_names;
    for (const auto& [group, ids] : members) {
        report.groups.push_back(group);
        group_names.push_back(to_string(group));
    }

    auto per_group = [&](auto&& value_of) {
        std::vector<Eigen::VectorXd> samples;
        for (const auto& [group, ids] : members) {
            std::vector<double> v;
            for (const auto& id : ids) v.push_back(value_of(subjects.at(id)));
            samples.push_back(to_vector(v));
        }
        return samples;
    };

    // Within-group learning effect: baseline vs evaluation.
    for (const auto& [group, ids] : members)
        for (auto task : {Task::PathFollowing, Task::Waypoint}) {
            std::vector<double> base, eval;
            for (const auto& id : ids) {
                base.push_back(subjects.at(id).phase_mean(task, Phase::Baseline));
                eval.push_back(subjects.at(id).phase_mean(task, Phase::Evaluation));
            }
            const auto b = to_vector(base), e = to_vector(eval);
            report.entries.push_back(run_entry("within_group_paired_t",
                                               to_string(group) + " " + to_string(task) + " baseline vs evaluation",
                                               [&] { return paired_t(b, e); }));
            PercentChangeEntry pc{group, task, b.mean(), e.mean(), 0.0};
            try {
                pc.percent = percent_change(pc.baseline_mean, pc.evaluation_mean);
            } catch (const Error&) {
                pc.percent = std::numeric_limits<double>::quiet_NaN();
            }
            report.percent_changes.push_back(pc);
        }

    // Between-group comparisons at baseline and evaluation.
    for (auto task : {Task::PathFollowing, Task::Waypoint})
        for (auto phase : {Phase::Baseline, Phase::Evaluation}) {
            const auto samples = per_group([&](const SubjectData& s) { return s.phase_mean(task, phase); });
            auto entry = run_entry("between_group_anova", to_string(task) + " " + to_string(phase),
                                   [&] { return one_way_anova(samples); });
            add_post_hoc(entry, group_names, samples, [](const auto& a, const auto& b) { return independent_t(a, b); });
            report.entries.push_back(std::move(entry));
        }

    // Training sets, between groups.
    for (auto grouping : {Grouping::Amplitude, Grouping::Wavelength}) {
        const auto& values = grouping == Grouping::Amplitude ? kTrainingAmplitudes : kTrainingWavelengths;
        const std::string name = grouping == Grouping::Amplitude ? "amplitude" : "wavelength";
        for (std::size_t set = 0; set < 3; ++set) {
            const auto samples =
                per_group([&](const SubjectData& s) { return set_mean(s.training(), grouping)[set]; });
            auto entry = run_entry("training_set_anova", name + " " + fmt(values[set]),
                                   [&] { return one_way_anova(samples); });
            add_post_hoc(entry, group_names, samples, [](const auto& a, const auto& b) { return independent_t(a, b); });
            report.entries.push_back(std::move(entry));
        }
    }

    // Training sets, within each group.
    for (const auto& [group, ids] : members)
        for (auto grouping : {Grouping::Amplitude, Grouping::Wavelength}) {
            const auto& values = grouping == Grouping::Amplitude ? kTrainingAmplitudes : kTrainingWavelengths;
            const std::string name = grouping == Grouping::Amplitude ? "amplitude" : "wavelength";
            Eigen::MatrixXd table(static_cast<Eigen::Index>(ids.size()), 3);
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const auto means = set_mean(subjects.at(ids[i]).training(), grouping);
                for (int c = 0; c < 3; ++c) table(static_cast<Eigen::Index>(i), c) = means[c];
            }
            auto entry =
                run_entry("training_rm_anova", to_string(group) + " across " + name, [&] { return rm_anova(table); });
            std::vector<Eigen::VectorXd> cols;
            std::vector<std::string> names;
            for (int c = 0; c < 3; ++c) {
                cols.emplace_back(table.col(c));
                names.push_back(name + " " + fmt(values[c]));
            }
            add_post_hoc(entry, names, cols, [](const auto& a, const auto& b) { return paired_t(a, b); });
            report.entries.push_back(std::move(entry));
        }
    return report;
}

nlohmann::json to_json(const StudyReport& report) {
    nlohmann::json doc;
    doc["version"] = 1;
    doc["significance"] = kSignificance;
    auto& groups = doc["groups"] = nlohmann::json::array();
    for (auto g : report.groups) groups.push_back(to_string(g));
    auto& entries = doc["comparisons"] = nlohmann::json::array();
    for (const auto& e : report.entries) {
        nlohmann::json j = {{"family", e.family}, {"label", e.label}};
        if (e.result) j["result"] = to_json(*e.result);
        if (!e.note.empty()) j["note"] = e.note;
        auto& ph = j["post_hoc"] = nlohmann::json::array();
        for (const auto& p : e.post_hoc)
            ph.push_back({{"a", p.a}, {"b", p.b}, {"raw", to_json(p.raw)}, {"adjusted_p", p.adjusted_p},
                          {"significant", p.significant}});
        entries.push_back(std::move(j));
    }
    auto& pcs = doc["percent_change"] = nlohmann::json::array();
    for (const auto& pc : report.percent_changes)
        pcs.push_back({{"group", to_string(pc.group)}, {"task", to_string(pc.task)},
                       {"baseline_mean", pc.baseline_mean}, {"evaluation_mean", pc.evaluation_mean},
                       {"percent", std::isnan(pc.percent) ? nlohmann::json(nullptr) : nlohmann::json(pc.percent)}});
    return doc;
}

std::string to_text(const StudyReport& report) {
    std::ostringstream os;
    std::string family;
    for (const auto& e : report.entries) {
        if (e.family != family) {
            family = e.family;
            os << "\n== " << family << " ==\n";
        }
        os << std::left << std::setw(44) << e.label << ' ' << (e.result ? describe(*e.result) : "n/a");
        if (!e.note.empty()) os << "  [" << e.note << "]";
        os << '\n';
        for (const auto& p : e.post_hoc)
            os << "    " << std::setw(40) << (p.a + " vs " + p.b) << ' ' << describe(p.raw)
               << ", adj P = " << fmt(p.adjusted_p, 3) << (p.significant ? " *" : "") << '\n';
    }
    os << "\n== percent_change (positive = fewer errors) ==\n";
    for (const auto& pc : report.percent_changes)
        os << std::left << std::setw(8) << to_string(pc.group) << std::setw(16) << to_string(pc.task) << " baseline "
           << fmt(pc.baseline_mean) << " m, evaluation " << fmt(pc.evaluation_mean) << " m, change "
           << fmt(pc.percent) << " %\n";
    return os.str();
}

}  // namespace haptrain
