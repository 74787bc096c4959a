// study: command-line front end for running and analysing a training study.

#include "haptrain/analysis.hpp"
#include "haptrain/error.hpp"
#include "haptrain/pilot.hpp"
#include "haptrain/rtserver.hpp"
#include "haptrain/study.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

using namespace haptrain;

namespace {

struct Input {
    std::unique_ptr<InputSource> source;
    std::unique_ptr<LineStreamReader> reader;
    bool live = false;  // needs interactive pacing
};

Input make_input(const std::string& spec, const Calibration& cal, const StudyConfig& cfg) {
    Input in;
    if (spec.starts_with("script:")) {
        in.source = std::make_unique<ScriptFileSource>(ScriptFileSource::from_file(spec.substr(7)));
    } else if (spec == "pilot" || spec.starts_with("pilot:")) {
        const auto params = PilotParams::parse(spec.size() > 6 ? spec.substr(6) : "");
        in.source = std::make_unique<ScriptedPilot>(params, cal, cfg.sim.dt);
    } else if (spec.starts_with("serial:")) {
        auto box = std::make_shared<LatestValueMailbox>();
        in.reader = std::make_unique<LineStreamReader>(spec.substr(7), box);
        in.source = std::make_unique<MailboxSource>(box, spec);
        in.live = true;
    } else {
        throw ValidationError("unknown input '" + spec + "'");
    }
    return in;
}

void print_trial(const TrialRecord& rec) {
    std::cout << rec.subject_id << ' ' << rec.entry.label() << ' ';
    if (rec.valid)
        std::cout << "error=" << rec.error.error << " collisions=" << rec.error.collisions;
    else
        std::cout << "INVALID (" << rec.invalid_reason << ")";
    std::cout << '\n';
    for (const auto& w : rec.warnings) std::cout << "  warning: " << w << '\n';
}

// Blocks until SIGINT/SIGTERM.
void wait_for_signal() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    int sig = 0;
    sigwait(&set, &sig);
}

void block_signals() {
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Drone teleoperation training study harness"};
    app.require_subcommand(1);

    // new
    auto* cmd_new = app.add_subcommand("new", "Create a study directory");
    std::string groups = "fpv,arrows,haptic";
    int subjects = 30;
    std::uint64_t seed = 1;
    std::string dir = "study";
    std::string config_file;
    cmd_new->add_option("--groups", groups, "Comma separated feedback groups")->capture_default_str();
    cmd_new->add_option("--subjects", subjects, "Total number of subjects")->capture_default_str();
    cmd_new->add_option("--seed", seed, "Master seed")->capture_default_str();
    cmd_new->add_option("--dir,--study", dir, "Study directory")->capture_default_str();
    cmd_new->add_option("--config", config_file, "key = value configuration file")->check(CLI::ExistingFile);

    // run
    auto* cmd_run = app.add_subcommand("run", "Run sessions for one subject");
    std::string subject;
    std::string input = "keyboard";
    bool all = false;
    int session = 0;
    bool out_of_order = false;
    std::string bind = "127.0.0.1";
    unsigned short port = 8080;
    std::string static_dir;
    cmd_run->add_option("--study", dir, "Study directory")->capture_default_str();
    cmd_run->add_option("--subject", subject, "Subject id")->required();
    cmd_run->add_option("--input", input, "keyboard | gamepad | serial:<port> | script:<file> | pilot[:k=v,...]")
        ->capture_default_str();
    cmd_run->add_flag("--all", all, "Run every remaining session");
    cmd_run->add_option("--session", session, "Plan order (1..21) to run");
    cmd_run->add_flag("--out-of-order", out_of_order, "Allow running a session out of plan order");
    cmd_run->add_option("--bind", bind, "Address for the cockpit server (keyboard/gamepad)")->capture_default_str();
    cmd_run->add_option("--port", port, "Port for the cockpit server")->capture_default_str();
    cmd_run->add_option("--static", static_dir, "Directory with the cockpit build");

    // calibrate
    auto* cmd_cal = app.add_subcommand("calibrate", "Store a subject's elbow calibration");
    double angle_min = 30.0, angle_max = 150.0;
    std::string polarity = "flexion_up";
    cmd_cal->add_option("--study", dir, "Study directory")->capture_default_str();
    cmd_cal->add_option("--subject", subject, "Subject id")->required();
    cmd_cal->add_option("--angle-min", angle_min, "Full extension angle [deg]")->capture_default_str();
    cmd_cal->add_option("--angle-max", angle_max, "Full flexion angle [deg]")->capture_default_str();
    cmd_cal->add_option("--polarity", polarity, "flexion_up | flexion_down")->capture_default_str();

    // questionnaire
    auto* cmd_q = app.add_subcommand("questionnaire", "Record a questionnaire response (JSON)");
    std::string response;
    cmd_q->add_option("--study", dir, "Study directory")->capture_default_str();
    cmd_q->add_option("--subject", subject, "Subject id")->required();
    cmd_q->add_option("--response", response, R"(e.g. {"phase":"training","likert":[4,5],"improved":true,"helpfulness":5})")
        ->required();

    // analyze
    auto* cmd_an = app.add_subcommand("analyze", "Statistical report over a study or a metrics CSV");
    std::string csv;
    std::string json_out;
    cmd_an->add_option("--study", dir, "Study directory");
    cmd_an->add_option("--csv", csv, "metrics.csv instead of a study directory")->check(CLI::ExistingFile);
    cmd_an->add_option("--json", json_out, "Also write the report as JSON here");

    // replay
    auto* cmd_rep = app.add_subcommand("replay", "Re-run a stored trial and compare traces");
    std::string trial_file;
    cmd_rep->add_option("--trial", trial_file, "Trial JSONL file")->required()->check(CLI::ExistingFile);

    // serve
    auto* cmd_srv = app.add_subcommand("serve", "WebSocket/HTTP gateway for the cockpit");
    bool headless = false;
    cmd_srv->add_option("--study", dir, "Study directory")->capture_default_str();
    cmd_srv->add_option("--bind", bind, "Bind address")->capture_default_str();
    cmd_srv->add_option("--port", port, "Port")->capture_default_str();
    cmd_srv->add_option("--static", static_dir, "Directory with the cockpit build");
    cmd_srv->add_flag("--headless", headless, "Run sessions as fast as possible");

    // status
    auto* cmd_status = app.add_subcommand("status", "Print study progress as JSON");
    cmd_status->add_option("--study", dir, "Study directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cmd_new) {
            StudyConfig cfg;
            if (!config_file.empty()) cfg = load_config(config_file);
            auto study = Study::create(dir, parse_groups(groups), subjects, seed, cfg);
            std::cout << "created " << dir << " with " << study.manifest().subjects.size() << " subjects\n";
            for (const auto& s : study.manifest().subjects) std::cout << "  " << s.id << ' ' << to_string(s.group) << '\n';
            return 0;
        }
        if (*cmd_status) {
            std::cout << Study::open(dir).status().dump(2) << '\n';
            return 0;
        }
        if (*cmd_cal) {
            auto study = Study::open(dir);
            const auto& base = study.config().calibration;
            study.set_calibration(subject, calibrate(angle_min, angle_max, base.alt_min, base.alt_max,
                                                     polarity_from_string(polarity)));
            std::cout << "calibration stored for " << subject << '\n';
            return 0;
        }
        if (*cmd_q) {
            auto study = Study::open(dir);
            const auto r = study.capture_questionnaire(subject, questionnaire_from_json(nlohmann::json::parse(response)));
            std::cout << "recorded " << to_string(r.phase) << " questionnaire for " << subject << '\n';
            return 0;
        }
        if (*cmd_an) {
            std::vector<MetricRow> rows;
            if (!csv.empty()) {
                std::ifstream in(csv);
                rows = read_metrics_csv(in);
            } else {
                rows = Study::open(dir).metric_rows();
            }
            const auto report = analyze_study(rows);
            std::cout << to_text(report);
            if (!json_out.empty()) std::ofstream(json_out) << to_json(report).dump(2) << '\n';
            return 0;
        }
        if (*cmd_rep) {
            const auto rec = load_trial(trial_file);
            const auto result = replay_trial(rec);
            if (result.identical) {
                std::cout << "identical: " << rec.trace.size() << " rows\n";
                return 0;
            }
            std::cout << "MISMATCH at row " << result.first_mismatch << '\n';
            return 1;
        }
        if (*cmd_srv) {
            block_signals();
            auto study = Study::open(dir);
            Server server(study, ServerOptions{bind, port, headless ? Pacing::Headless : Pacing::Interactive, 64,
                                               static_dir, nullptr});
            const auto bound = server.start();
            std::cout << "serving " << dir << " on ws://" << bind << ':' << bound << "/ws\n" << std::flush;
            wait_for_signal();
            server.stop();
            return 0;
        }
        if (*cmd_run) {
            block_signals();
            auto study = Study::open(dir);
            study.subject(subject);
            const auto cal = study.calibration(subject).value_or(study.config().calibration);
            std::vector<std::optional<int>> orders;
            if (session > 0) {
                orders.push_back(session);
            } else if (all) {
                for (const auto& e : study.plan_for(subject).entries) {
                    const auto done = study.completed(subject);
                    if (!std::binary_search(done.begin(), done.end(), e.order)) orders.push_back(e.order);
                }
            } else {
                orders.push_back(std::nullopt);
            }

            if (input == "keyboard" || input == "gamepad") {
                Server server(study, ServerOptions{bind, port, Pacing::Interactive, 64, static_dir, nullptr});
                const auto bound = server.start();
                std::cout << "cockpit: http://" << bind << ':' << bound << "/ (ws /ws); waiting for a client\n"
                          << std::flush;
                while (server.clients() == 0) std::this_thread::sleep_for(std::chrono::milliseconds(100));
                for (const auto& o : orders) {
                    nlohmann::json cmd = {{"subject", subject}, {"input", "ws"}, {"allow_out_of_order", out_of_order}};
                    if (o) cmd["order"] = *o;
                    const auto before = server.sessions_completed();
                    server.request_session(cmd);
                    while (server.session_running()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
                    if (server.sessions_completed() == before) {
                        std::cerr << "session aborted\n";
                        return 1;
                    }
                    const auto last = study.completed(subject);
                    std::cout << subject << " session " << (o ? *o : (last.empty() ? 0 : last.back())) << " stored\n";
                }
                server.stop();
                return 0;
            }

            for (const auto& o : orders) {
                auto in = make_input(input, cal, study.config());
                TrialRecord rec;
                if (in.live) {
                    const auto next = study.next_entry(subject);
                    const int order = o.value_or(next ? next->order : 0);
                    if (!out_of_order && (!next || order != next->order))
                        throw PhaseError("session " + std::to_string(order) + " is out of plan order");
                    study.begin_subject_if_needed(subject);
                    SessionRunner runner(subject, study.subject(subject).group,
                                         study.plan_for(subject).entries.at(static_cast<std::size_t>(order - 1)),
                                         *in.source, study.config(), study.calibration(subject));
                    TickLoop loop(runner, {Pacing::Interactive, study.config().telemetry_hz,
                                           study.config().overrun_warn_fraction, {}});
                    rec = loop.run();
                    rec.input_source = in.source->describe();
                    study.store_trial(rec);
                } else {
                    rec = study.run(subject, *in.source, o, out_of_order);
                }
                print_trial(rec);
            }
            return 0;
        }
    } catch (const MissingDataError& e) {
        std::cerr << "error: " << e.what() << '\n';
        for (const auto& m : e.missing()) std::cerr << "  missing: " << m << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
