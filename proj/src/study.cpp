#include "haptrain/study.hpp"

#include "haptrain/error.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace haptrain {

namespace fs = std::filesystem;

namespace {

nlohmann::json manifest_json(const StudyManifest& m) {
    nlohmann::json j;
    j["version"] = m.version;
    j["master_seed"] = m.master_seed;
    auto& groups = j["groups"] = nlohmann::json::array();
    for (auto g : m.groups) groups.push_back(to_string(g));
    auto& subjects = j["subjects"] = nlohmann::json::array();
    for (const auto& s : m.subjects) subjects.push_back({{"id", s.id}, {"group", to_string(s.group)}});
    j["config_hash"] = m.config_hash;
    j["created_at"] = m.created_at;
    return j;
}

StudyManifest manifest_from_json(const nlohmann::json& j) {
    StudyManifest m;
    m.version = j.at("version");
    m.master_seed = j.at("master_seed");
    for (const auto& g : j.at("groups")) m.groups.push_back(feedback_mode_from_string(g));
    for (const auto& s : j.at("subjects")) m.subjects.push_back({s.at("id"), feedback_mode_from_string(s.at("group"))});
    m.config_hash = j.at("config_hash");
    m.created_at = j.value("created_at", std::string{});
    return m;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw ValidationError("cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw Error("cannot write " + p.string());
        out << text;
    }
    fs::rename(tmp, p);
}

}  // namespace

std::vector<FeedbackMode> parse_groups(const std::string& csv) {
    std::vector<FeedbackMode> groups;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto g = feedback_mode_from_string(item);
        if (std::find(groups.begin(), groups.end(), g) != groups.end())
            throw ValidationError("group '" + item + "' listed twice");
        groups.push_back(g);
    }
    if (groups.empty()) throw ValidationError("no feedback groups given");
    return groups;
}

Study::Study(fs::path dir, StudyManifest manifest, StudyConfig cfg)
    : dir_(std::move(dir)), manifest_(std::move(manifest)), config_(std::move(cfg)) {}

Study::Study(Study&& other) noexcept
    : dir_(std::move(other.dir_)), manifest_(std::move(other.manifest_)), config_(std::move(other.config_)) {}

Study Study::create(const fs::path& dir, const std::vector<FeedbackMode>& groups, int subjects,
                    std::uint64_t master_seed, const StudyConfig& cfg) {
    if (groups.empty()) throw ValidationError("a study needs at least one group");
    if (subjects < 1) throw ValidationError("a study needs at least one subject");
    cfg.validate();
    if (fs::exists(dir / "manifest.json")) throw ValidationError("study already exists at " + dir.string());
    fs::create_directories(dir / "subjects");
    fs::create_directories(dir / "trials");

    StudyManifest m;
    m.master_seed = master_seed;
    m.groups = groups;
    m.config_hash = config_hash(cfg);
    m.created_at = iso_timestamp_now();
    const int width = subjects >= 100 ? 3 : 2;
    for (int i = 0; i < subjects; ++i) {
        std::ostringstream id;
        id << 'S' << std::setw(width) << std::setfill('0') << (i + 1);
        m.subjects.push_back({id.str(), groups[static_cast<std::size_t>(i) % groups.size()]});
    }
    write_file(dir / "config.txt", to_text(cfg));
    write_file(dir / "manifest.json", manifest_json(m).dump(2) + "\n");
    DeviceLedger{}.save(dir / "device.json");
    Study study(dir, std::move(m), cfg);
    study.write_metrics_csv();
    return study;
}

Study Study::open(const fs::path& dir) {
    if (!fs::exists(dir / "manifest.json")) throw ValidationError("no study at " + dir.string());
    auto manifest = manifest_from_json(nlohmann::json::parse(read_file(dir / "manifest.json")));
    auto cfg = parse_config(read_file(dir / "config.txt"));
    if (config_hash(cfg) != manifest.config_hash)
        throw ValidationError("config.txt does not match the hash recorded in the manifest");
    return Study(dir, std::move(manifest), std::move(cfg));
}

const SubjectInfo& Study::subject(const std::string& id) const {
    for (const auto& s : manifest_.subjects)
        if (s.id == id) return s;
    throw ValidationError("unknown subject '" + id + "'");
}

SessionPlan Study::plan_for(const std::string& id) const {
    return build_plan(id, subject(id).group, manifest_.master_seed);
}

std::vector<nlohmann::json> Study::subject_log(const std::string& id) const {
    std::lock_guard lock(mutex_);
    std::vector<nlohmann::json> out;
    std::ifstream in(dir_ / "subjects" / (id + ".jsonl"));
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(nlohmann::json::parse(line));
    return out;
}

void Study::append_subject_log(const std::string& id, const nlohmann::json& rec) const {
    std::lock_guard lock(mutex_);
    std::ofstream out(dir_ / "subjects" / (id + ".jsonl"), std::ios::app);
    if (!out) throw Error("cannot append to subject log " + id);
    out << rec.dump() << '\n';
}

std::vector<int> Study::completed(const std::string& id) const {
    std::set<int> done;
    for (const auto& r : subject_log(id))
        if (r.at("type") == "trial" && r.at("valid").get<bool>()) done.insert(r.at("order").get<int>());
    return {done.begin(), done.end()};
}

std::optional<PlanEntry> Study::next_entry(const std::string& id) const {
    const auto done = completed(id);
    for (const auto& e : plan_for(id).entries)
        if (!std::binary_search(done.begin(), done.end(), e.order)) return e;
    return std::nullopt;
}

void Study::set_calibration(const std::string& id, const Calibration& cal) {
    subject(id);
    const auto checked = calibrate(cal.angle_min, cal.angle_max, cal.alt_min, cal.alt_max, cal.polarity);
    append_subject_log(id, {{"type", "calibration"},
                            {"angle_min", checked.angle_min},
                            {"angle_max", checked.angle_max},
                            {"alt_min", checked.alt_min},
                            {"alt_max", checked.alt_max},
                            {"polarity", to_string(checked.polarity)},
                            {"at", iso_timestamp_now()}});
}

std::optional<Calibration> Study::calibration(const std::string& id) const {
    std::optional<Calibration> cal;
    for (const auto& r : subject_log(id))
        if (r.at("type") == "calibration")
            cal = calibrate(r.at("angle_min"), r.at("angle_max"), r.at("alt_min"), r.at("alt_max"),
                            polarity_from_string(r.at("polarity")));
    return cal;
}

void Study::begin_subject_if_needed(const std::string& id) {
    for (const auto& r : subject_log(id))
        if (r.at("type") == "device") return;
    auto ledger = DeviceLedger::load(dir_ / "device.json");
    const bool reversed = ledger.begin_subject();
    ledger.save(dir_ / "device.json");
    append_subject_log(id, {{"type", "device"},
                            {"polarity_reversed", reversed},
                            {"springs_due", ledger.springs_due()},
                            {"at", iso_timestamp_now()}});
}

TrialRecord Study::run(const std::string& id, InputSource& source, std::optional<int> order, bool allow_out_of_order,
                       ClutchLink* clutch) {
    std::lock_guard lock(mutex_);
    const auto plan = plan_for(id);
    const auto next = next_entry(id);
    if (!next && !order) throw PhaseError("subject " + id + " has completed every session");
    const int want = order.value_or(next ? next->order : 0);
    if (want < 1 || want > kPlanLength) throw ValidationError("session order outside 1..21");
    if (!allow_out_of_order && (!next || want != next->order))
        throw PhaseError("session " + std::to_string(want) + " is out of plan order (next is " +
                         (next ? std::to_string(next->order) : std::string("none")) + ")");
    const auto& entry = plan.entries[static_cast<std::size_t>(want - 1)];

    begin_subject_if_needed(id);
    auto rec = run_session(id, subject(id).group, entry, source, config_, RunOptions{calibration(id), clutch});
    store_trial(rec);
    return rec;
}

fs::path Study::trial_path(const std::string& id, int order) const {
    std::ostringstream name;
    name << id << '_' << std::setw(2) << std::setfill('0') << order << ".jsonl";
    return dir_ / "trials" / name.str();
}

void Study::store_trial(const TrialRecord& rec) {
    std::lock_guard lock(mutex_);
    subject(rec.subject_id);
    if (rec.config_hash != manifest_.config_hash) throw ValidationError("trial was run with a different config");
    TrialRecord copy = rec;
    for (const auto& r : subject_log(rec.subject_id))
        if (r.at("type") == "device") copy.polarity_reversed = r.at("polarity_reversed");
    const auto path = trial_path(rec.subject_id, rec.entry.order);
    std::ostringstream body;
    write_trial_jsonl(body, copy);
    write_file(path, body.str());
    append_subject_log(rec.subject_id, {{"type", "trial"},
                                        {"order", rec.entry.order},
                                        {"task", to_string(rec.entry.task)},
                                        {"phase", to_string(rec.entry.phase)},
                                        {"session", rec.entry.session_index},
                                        {"valid", rec.valid},
                                        {"error", rec.error.error},
                                        {"collisions", rec.error.collisions},
                                        {"file", path.filename().string()},
                                        {"config_hash", rec.config_hash},
                                        {"at", iso_timestamp_now()}});
    write_metrics_csv();
}

std::optional<std::string> Study::trial_jsonl(const std::string& id, int order) const {
    const auto path = trial_path(id, order);
    if (!fs::exists(path)) return std::nullopt;
    return read_file(path);
}

QuestionnaireResponse Study::capture_questionnaire(const std::string& id, const QuestionnaireResponse& r) {
    std::lock_guard lock(mutex_);
    const auto& info = subject(id);
    const auto checked = validate_questionnaire(r, info.group);
    const auto done = completed(id);
    for (const auto& e : plan_for(id).entries)
        if (e.task == Task::PathFollowing && e.phase == r.phase && !std::binary_search(done.begin(), done.end(), e.order))
            throw PhaseError("the " + to_string(r.phase) + " phase of path following is not complete yet");
    auto j = to_json(checked);
    j["type"] = "questionnaire";
    j["at"] = iso_timestamp_now();
    append_subject_log(id, j);
    return checked;
}

std::vector<QuestionnaireResponse> Study::questionnaires(const std::string& id) const {
    std::vector<QuestionnaireResponse> out;
    for (const auto& r : subject_log(id))
        if (r.at("type") == "questionnaire") out.push_back(questionnaire_from_json(r));
    return out;
}

std::vector<MetricRow> Study::metric_rows() const {
    std::vector<MetricRow> rows;
    for (const auto& s : manifest_.subjects) {
        std::map<int, MetricRow> latest;
        for (const auto& r : subject_log(s.id)) {
            if (r.at("type") != "trial" || !r.at("valid").get<bool>()) continue;
            MetricRow m;
            m.subject = s.id;
            m.group = s.group;
            m.task = task_from_string(r.at("task"));
            m.phase = phase_from_string(r.at("phase"));
            m.session = r.at("session");
            m.error = r.at("error");
            m.collisions = r.at("collisions");
            latest[r.at("order").get<int>()] = m;
        }
        for (auto& [order, m] : latest) rows.push_back(m);
    }
    return rows;
}

void Study::write_metrics_csv() const {
    std::lock_guard lock(mutex_);
    std::ostringstream os;
    const auto rows = metric_rows();
    haptrain::write_metrics_csv(os, rows);
    write_file(dir_ / "metrics.csv", os.str());
}

DeviceLedger Study::device_ledger() const {
    return DeviceLedger::load(dir_ / "device.json");
}

nlohmann::json Study::status() const {
    nlohmann::json j = manifest_json(manifest_);
    auto& subjects = j["progress"] = nlohmann::json::array();
    for (const auto& s : manifest_.subjects) {
        const auto next = next_entry(s.id);
        nlohmann::json row = {{"id", s.id}, {"group", to_string(s.group)}, {"completed", completed(s.id).size()}};
        row["next"] = next ? to_json(*next) : nlohmann::json(nullptr);
        row["questionnaires"] = questionnaires(s.id).size();
        subjects.push_back(std::move(row));
    }
    const auto ledger = device_ledger();
    j["device"] = {{"polarity_reversed", ledger.polarity_reversed},
                   {"subjects_on_springs", ledger.subjects_on_springs},
                   {"springs_due", ledger.springs_due()}};
    return j;
}

}  // namespace haptrain
