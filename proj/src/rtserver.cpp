#include "haptrain/rtserver.hpp"

#include "haptrain/error.hpp"
#include "haptrain/pilot.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <cstring>
#include <fstream>
#include <future>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace haptrain {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using Clock = std::chrono::steady_clock;

// ---------------------------------------------------------------- frames

nlohmann::json to_json(const TelemetryFrame& f) {
    nlohmann::json j = to_json(f.row);
    j["v"] = kProtocolVersion;
    j["type"] = "telemetry";
    j["tick"] = f.tick;
    j["error"] = f.error;
    j["subject"] = f.subject;
    j["group"] = to_string(f.group);
    j["order"] = f.order;
    j["task"] = to_string(f.task);
    j["phase"] = to_string(f.phase);
    j["session"] = f.session_index;
    j["course"] = to_string(f.course);
    j["tube_radius"] = f.tube_radius;
    j["course_length"] = f.course_length;
    auto& w = j["window"] = nlohmann::json::array();
    for (const auto& p : f.window) w.push_back({p[0], p[1]});
    return j;
}

TelemetryFrame telemetry_frame_from_json(const nlohmann::json& j) {
    if (j.value("v", 0) != kProtocolVersion) throw ValidationError("telemetry frame has the wrong protocol version");
    TelemetryFrame f;
    f.tick = j.at("tick");
    f.row = trace_row_from_json(j);
    f.error = j.at("error");
    f.subject = j.at("subject");
    f.group = feedback_mode_from_string(j.at("group"));
    f.order = j.at("order");
    f.task = task_from_string(j.at("task"));
    f.phase = phase_from_string(j.at("phase"));
    f.session_index = j.at("session");
    f.course = course_kind_from_string(j.at("course"));
    f.tube_radius = j.at("tube_radius");
    f.course_length = j.at("course_length");
    for (const auto& p : j.at("window")) f.window.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return f;
}

TelemetryFrame make_frame(const SessionRunner& runner) {
    const auto& course = runner.course();
    const auto& e = runner.entry();
    TelemetryFrame f;
    f.tick = runner.ticks();
    f.row = runner.last_row();
    f.error = f.row.z - f.row.centerline_z;
    f.subject = runner.subject_id();
    f.group = runner.group();
    f.order = e.order;
    f.task = e.task;
    f.phase = e.phase;
    f.session_index = e.session_index;
    f.course = course.kind();
    f.tube_radius = course.tube_radius();
    f.course_length = course.length();

    const double from = std::max(0.0, f.row.x);
    const double to = f.row.x + kTelemetryWindow;
    if (course.is_tube()) {
        if (from <= course.length()) {
            const double end = std::min(to, course.length());
            for (double x = std::ceil(from / kWindowStep) * kWindowStep; x <= end; x += kWindowStep)
                f.window.push_back({x, course.centerline(x)});
        }
    } else {
        for (const auto& r : std::get<RingCourse>(course.spec()).rings)
            if (r.x >= f.row.x && r.x <= to) f.window.push_back({r.x, r.center_z});
    }
    return f;
}

TelemetryDecimator::TelemetryDecimator(double hz, double dt)
    : hz_(std::llround(hz)), ticks_per_second_(std::llround(1.0 / dt)) {
    if (hz_ <= 0 || ticks_per_second_ <= 0) throw ValidationError("telemetry rate and dt must be positive");
}

bool TelemetryDecimator::due(std::uint64_t tick) const {
    if (tick == 0 || hz_ >= ticks_per_second_) return true;
    const auto k = static_cast<std::int64_t>(tick);
    return (k * hz_) / ticks_per_second_ != ((k - 1) * hz_) / ticks_per_second_;
}

// ---------------------------------------------------------------- tick loop

TickLoop::TickLoop(SessionRunner& runner, TickLoopOptions opts) : runner_(runner), opts_(std::move(opts)) {}

TrialRecord TickLoop::run(const FrameSink& sink, const std::atomic<bool>* abort) {
    const double dt = runner_.config().sim.dt;
    const auto period = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(dt));
    const TelemetryDecimator decimator(opts_.telemetry_hz, dt);
    std::vector<double> durations;
    durations.reserve(static_cast<std::size_t>(runner_.course().length() / (runner_.config().sim.forward_speed * dt)) + 1024);

    if (sink) {
        sink(make_frame(runner_));
        ++frames_;
    }
    auto deadline = Clock::now() + period;
    bool aborted = false;
    while (!runner_.done()) {
        if (abort && abort->load()) {
            runner_.abort("aborted by operator");
            aborted = true;
            break;
        }
        const auto start = Clock::now();
        if (opts_.before_tick) opts_.before_tick(runner_.ticks());
        runner_.tick();
        if (sink && decimator.due(runner_.ticks())) {
            sink(make_frame(runner_));
            ++frames_;
        }
        const double ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        durations.push_back(ms);
        if (ms > dt * 1000.0) ++stats_.overruns;
        if (opts_.pacing == Pacing::Interactive) {
            std::this_thread::sleep_until(deadline);
            deadline += period;
        }
    }

    stats_.ticks = durations.size();
    if (!durations.empty()) {
        std::sort(durations.begin(), durations.end());
        const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(durations.size()))) - 1;
        stats_.p99_tick_ms = durations[std::min(idx, durations.size() - 1)];
        stats_.max_tick_ms = durations.back();
    }

    auto rec = runner_.finish();
    rec.run_stats = stats_;
    if (stats_.ticks > 0 &&
        static_cast<double>(stats_.overruns) > opts_.overrun_warn_fraction * static_cast<double>(stats_.ticks)) {
        std::ostringstream w;
        w << "sustained overrun: " << stats_.overruns << " of " << stats_.ticks << " ticks exceeded " << dt * 1000.0
          << " ms";
        rec.warnings.push_back(w.str());
    }
    if (aborted) rec.invalid_reason = "aborted by operator";
    return rec;
}

// ---------------------------------------------------------------- server

namespace {

std::shared_ptr<const std::string> message(const nlohmann::json& j) {
    return std::make_shared<const std::string>(j.dump());
}

nlohmann::json error_message(const std::string& code, const std::string& text) {
    return {{"v", kProtocolVersion}, {"type", "error"}, {"code", code}, {"message", text}};
}

std::string content_type_for(const std::string& path) {
    auto ends = [&](const char* s) { return path.size() >= std::strlen(s) && path.ends_with(s); };
    if (ends(".html")) return "text/html";
    if (ends(".js") || ends(".mjs")) return "text/javascript";
    if (ends(".css")) return "text/css";
    if (ends(".json")) return "application/json";
    if (ends(".svg")) return "image/svg+xml";
    return "application/octet-stream";
}

}  // namespace

class WsSession;

class Server::Impl {
public:
    Impl(Study& study, ServerOptions opts) : study_(study), opts_(std::move(opts)), acceptor_(ioc_) {}

    unsigned short start();
    void stop();
    void wait();

    // io thread
    void do_accept();
    http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
    void handle_message(const std::shared_ptr<WsSession>& from, const std::string& text);
    void remove(const std::shared_ptr<WsSession>& s);
    void broadcast(std::shared_ptr<const std::string> msg, bool droppable);

    // any thread
    // Frames may be dropped for slow clients; session events are not.
    void publish(const nlohmann::json& j, bool droppable) {
        auto msg = message(j);
        net::post(ioc_, [this, msg, droppable] { broadcast(msg, droppable); });
    }
    void publish_reliable(const nlohmann::json& j) { publish(j, false); }

    nlohmann::json session_json() const;
    nlohmann::json start_session(const nlohmann::json& cmd);
    void sim_thread();
    void run_session(const nlohmann::json& cmd);

    Study& study_;
    ServerOptions opts_;
    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::thread io_thread_;
    std::thread sim_thread_;
    std::set<std::shared_ptr<WsSession>> sessions_;  // io thread only
    std::atomic<std::size_t> client_count_{0};
    std::atomic<std::uint64_t> dropped_{0};
    std::atomic<std::uint64_t> completed_{0};

    // Control queue to the sim thread.
    std::mutex control_mutex_;
    std::condition_variable control_cv_;
    std::deque<nlohmann::json> control_;
    bool stopping_ = false;
    std::atomic<bool> running_{false};
    std::atomic<bool> abort_{false};

    // Live input of the running session.
    mutable std::mutex live_mutex_;
    std::shared_ptr<LatestValueMailbox> mailbox_;
    Clock::time_point session_start_;
    std::optional<Calibration> live_cal_;
    nlohmann::json live_;

    std::mutex stop_mutex_;
    std::condition_variable stop_cv_;
    bool stopped_ = false;
    bool started_ = false;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
public:
    WsSession(tcp::socket&& socket, Server::Impl& server) : ws_(std::move(socket)), server_(server) {}

    void start(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
    }

    void send(std::shared_ptr<const std::string> msg, bool droppable) {
        if (closing_) return;
        if (droppable && queue_.size() >= server_.opts_.client_queue_limit) {
            ++server_.dropped_;
            return;
        }
        queue_.push_back(std::move(msg));
        if (!writing_) do_write();
    }

    void close_after_flush() {
        closing_ = true;
        if (!writing_) do_close();
    }

    void shutdown() {
        closing_ = true;
        beast::error_code ec;
        beast::get_lowest_layer(ws_).socket().close(ec);
    }

    bool welcomed = false;

private:
    void on_accept(beast::error_code ec) {
        if (ec) {
            server_.remove(shared_from_this());
            return;
        }
        do_read();
    }

    void do_read() { ws_.async_read(buffer_, beast::bind_front_handler(&WsSession::on_read, shared_from_this())); }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec) {
            server_.remove(shared_from_this());
            return;
        }
        std::string text = beast::buffers_to_string(buffer_.data());
        buffer_.consume(buffer_.size());
        server_.handle_message(shared_from_this(), text);
        if (!closing_) do_read();
    }

    void do_write() {
        writing_ = true;
        ws_.text(true);
        ws_.async_write(net::buffer(*queue_.front()),
                        beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
    }

    void on_write(beast::error_code ec, std::size_t) {
        queue_.pop_front();
        if (ec) {
            writing_ = false;
            server_.remove(shared_from_this());
            return;
        }
        if (!queue_.empty()) {
            do_write();
            return;
        }
        writing_ = false;
        if (closing_) do_close();
    }

    void do_close() {
        ws_.async_close(websocket::close_reason(websocket::close_code::policy_error, "protocol version mismatch"),
                        [self = shared_from_this()](beast::error_code) { self->server_.remove(self); });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    bool writing_ = false;
    bool closing_ = false;
    Server::Impl& server_;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
public:
    HttpConnection(tcp::socket&& socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

    void start() { do_read(); }

private:
    void do_read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
    }

    void on_read(beast::error_code ec, std::size_t) {
        if (ec == http::error::end_of_stream) {
            stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
            return;
        }
        if (ec) return;
        if (websocket::is_upgrade(req_)) {
            const std::string target(req_.target());
            if (target == "/ws" || target.starts_with("/ws?")) {
                stream_.expires_never();
                auto ws = std::make_shared<WsSession>(stream_.release_socket(), server_);
                ws->start(std::move(req_));
                return;
            }
        }
        auto res = std::make_shared<http::response<http::string_body>>(server_.handle_http(req_));
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code wec, std::size_t) {
            if (wec) return;
            if (res->need_eof()) {
                beast::error_code sec;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, sec);
                return;
            }
            self->do_read();
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    Server::Impl& server_;
};

unsigned short Server::Impl::start() {
    beast::error_code ec;
    const auto addr = net::ip::make_address(opts_.address, ec);
    if (ec) throw ValidationError("bad bind address '" + opts_.address + "'");
    const tcp::endpoint ep(addr, opts_.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw Error("cannot bind " + opts_.address + ":" + std::to_string(opts_.port) + ": " + ec.message());
    const auto port = acceptor_.local_endpoint().port();
    do_accept();
    started_ = true;
    io_thread_ = std::thread([this] { ioc_.run(); });
    sim_thread_ = std::thread([this] { sim_thread(); });
    return port;
}

void Server::Impl::stop() {
    if (!started_) return;
    {
        std::lock_guard lock(control_mutex_);
        if (stopping_) return;
        stopping_ = true;
    }
    abort_ = true;
    control_cv_.notify_all();
    if (sim_thread_.joinable()) sim_thread_.join();
    std::promise<void> closed;
    net::post(ioc_, [this, &closed] {
        beast::error_code ec;
        acceptor_.close(ec);
        for (const auto& s : sessions_) s->shutdown();
        sessions_.clear();
        client_count_ = 0;
        closed.set_value();
    });
    closed.get_future().wait();
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
    {
        std::lock_guard lock(stop_mutex_);
        stopped_ = true;
    }
    stop_cv_.notify_all();
}

void Server::Impl::wait() {
    std::unique_lock lock(stop_mutex_);
    stop_cv_.wait(lock, [this] { return stopped_; });
}

void Server::Impl::do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_), [this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;
        std::make_shared<HttpConnection>(std::move(socket), *this)->start();
        do_accept();
    });
}

void Server::Impl::remove(const std::shared_ptr<WsSession>& s) {
    sessions_.erase(s);
    client_count_ = sessions_.size();
}

void Server::Impl::broadcast(std::shared_ptr<const std::string> msg, bool droppable) {
    for (const auto& s : sessions_)
        if (s->welcomed) s->send(msg, droppable);
}

nlohmann::json Server::Impl::session_json() const {
    std::lock_guard lock(live_mutex_);
    nlohmann::json j = live_.is_null() ? nlohmann::json::object() : live_;
    j["running"] = running_.load();
    return j;
}

void Server::Impl::handle_message(const std::shared_ptr<WsSession>& from, const std::string& text) {
    auto reply = [&](const nlohmann::json& j) { from->send(message(j), false); };
    nlohmann::json msg;
    try {
        msg = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        reply(error_message("malformed", "message is not valid JSON"));
        return;
    }
    if (!msg.is_object()) {
        reply(error_message("malformed", "message must be a JSON object"));
        return;
    }
    if (!msg.contains("v") || !msg["v"].is_number_integer() || msg["v"].get<int>() != kProtocolVersion) {
        auto err = error_message("version_mismatch", "client protocol version is not supported");
        err["server_version"] = kProtocolVersion;
        if (msg.contains("v")) err["client_version"] = msg["v"];
        reply(err);
        from->close_after_flush();
        return;
    }

    const std::string type = msg.contains("cmd") ? "control" : msg.value("type", std::string());
    if (type == "hello") {
        from->welcomed = true;
        sessions_.insert(from);
        client_count_ = sessions_.size();
        reply({{"v", kProtocolVersion},
               {"type", "welcome"},
               {"server_version", kProtocolVersion},
               {"status", study_.status()},
               {"session", session_json()}});
        return;
    }
    if (!from->welcomed) {
        reply(error_message("no_hello", "send a hello message first"));
        return;
    }

    try {
        if (type == "angle" || type == "axis") {
            std::shared_ptr<LatestValueMailbox> box;
            Clock::time_point start;
            std::optional<Calibration> cal;
            {
                std::lock_guard lock(live_mutex_);
                box = mailbox_;
                start = session_start_;
                cal = live_cal_;
            }
            if (!box) return;  // no session; inputs are dropped
            double deg = 0.0;
            SourceKind kind = SourceKind::Keyboard;
            if (type == "angle") {
                deg = msg.at("deg").get<double>();
            } else {
                deg = axis_to_angle(cal.value_or(Calibration{}), std::clamp(msg.at("value").get<double>(), 0.0, 1.0));
                kind = SourceKind::Gamepad;
            }
            if (!std::isfinite(deg)) throw ValidationError("angle must be finite");
            const double now = std::chrono::duration<double>(Clock::now() - start).count();
            box->push({deg, now, kind});
        } else if (type == "control") {
            const std::string cmd = msg.at("cmd");
            if (cmd == "start_session") {
                reply(start_session(msg));
            } else if (cmd == "abort_session") {
                abort_ = true;
                reply({{"v", kProtocolVersion}, {"type", "ack"}, {"cmd", cmd}, {"running", running_.load()}});
            } else if (cmd == "calibrate") {
                const std::string id = msg.at("subject");
                const auto base = study_.config().calibration;
                const auto cal = calibrate(msg.at("angle_min"), msg.at("angle_max"), base.alt_min, base.alt_max,
                                           polarity_from_string(msg.value("polarity", to_string(base.polarity))));
                study_.set_calibration(id, cal);
                reply({{"v", kProtocolVersion}, {"type", "ack"}, {"cmd", cmd}, {"subject", id}});
            } else if (cmd == "status") {
                reply({{"v", kProtocolVersion}, {"type", "status"}, {"status", study_.status()}, {"session", session_json()}});
            } else {
                reply(error_message("unknown_command", "unknown command '" + cmd + "'"));
            }
        } else if (type == "questionnaire") {
            const std::string id = msg.at("subject");
            const auto r = study_.capture_questionnaire(id, questionnaire_from_json(msg));
            reply({{"v", kProtocolVersion}, {"type", "questionnaire_ok"}, {"subject", id}, {"phase", to_string(r.phase)}});
        } else {
            reply(error_message("unknown_type", "unknown message type '" + type + "'"));
        }
    } catch (const PhaseError& e) {
        reply(error_message("phase", e.what()));
    } catch (const Error& e) {
        reply(error_message("invalid", e.what()));
    } catch (const nlohmann::json::exception& e) {
        reply(error_message("malformed", e.what()));
    }
}

nlohmann::json Server::Impl::start_session(const nlohmann::json& cmd) {
    std::string subject = cmd.value("subject", std::string());
    if (subject.empty()) {
        for (const auto& s : study_.manifest().subjects)
            if (study_.next_entry(s.id)) {
                subject = s.id;
                break;
            }
        if (subject.empty()) throw PhaseError("every subject has completed the protocol");
    }
    const auto next = study_.next_entry(subject);
    int order = cmd.value("order", next ? next->order : 0);
    if (!cmd.value("allow_out_of_order", false) && (!next || order != next->order))
        throw PhaseError("session " + std::to_string(order) + " is out of plan order for " + subject);
    if (order < 1 || order > kPlanLength) throw ValidationError("session order outside 1..21");
    const std::string input = cmd.value("input", std::string("ws"));
    if (input != "ws" && !input.starts_with("pilot")) throw ValidationError("unknown input '" + input + "'");

    {
        std::lock_guard lock(control_mutex_);
        if (running_ || !control_.empty()) throw PhaseError("a session is already running");
        nlohmann::json job = {{"subject", subject}, {"order", order}, {"input", input}};
        control_.push_back(job);
        running_ = true;
    }
    control_cv_.notify_all();
    return {{"v", kProtocolVersion}, {"type", "ack"}, {"cmd", "start_session"}, {"subject", subject}, {"order", order}};
}

void Server::Impl::sim_thread() {
    for (;;) {
        nlohmann::json job;
        {
            std::unique_lock lock(control_mutex_);
            control_cv_.wait(lock, [this] { return stopping_ || !control_.empty(); });
            if (stopping_) return;
            job = control_.front();
            control_.pop_front();
        }
        try {
            run_session(job);
        } catch (const std::exception& e) {
            publish_reliable(error_message("session_failed", e.what()));
        }
        {
            std::lock_guard lock(live_mutex_);
            mailbox_.reset();
            live_cal_.reset();
            live_ = nlohmann::json();
        }
        running_ = false;
    }
}

void Server::Impl::run_session(const nlohmann::json& job) {
    abort_ = false;
    const std::string id = job.at("subject");
    const int order = job.at("order");
    const auto& info = study_.subject(id);
    const auto plan = study_.plan_for(id);
    const auto& entry = plan.entries.at(static_cast<std::size_t>(order - 1));
    const auto cal = study_.calibration(id);
    const auto& cfg = study_.config();
    const Calibration effective = cal.value_or(cfg.calibration);

    std::unique_ptr<InputSource> source;
    const std::string input = job.at("input");
    if (input == "ws") {
        auto box = std::make_shared<LatestValueMailbox>();
        const auto course = entry.make_course(cfg.knot_spacing);
        // Hold the spawn altitude until the first input arrives.
        box->push({angle_for_altitude(effective, course.centerline(0.0)), 0.0, SourceKind::Scripted});
        auto mailbox_source = std::make_unique<MailboxSource>(box, "ws");
        const auto start = Clock::now();
        mailbox_source->set_clock([start] { return std::chrono::duration<double>(Clock::now() - start).count(); });
        {
            std::lock_guard lock(live_mutex_);
            mailbox_ = box;
            session_start_ = start;
            live_cal_ = effective;
        }
        source = std::move(mailbox_source);
    } else {
        const auto colon = input.find(':');
        const auto params = PilotParams::parse(colon == std::string::npos ? "" : input.substr(colon + 1));
        source = std::make_unique<ScriptedPilot>(params, effective, cfg.sim.dt);
    }

    study_.begin_subject_if_needed(id);
    SessionRunner runner(id, info.group, entry, *source, cfg, cal);
    runner.attach_clutch(opts_.clutch);
    {
        std::lock_guard lock(live_mutex_);
        live_ = {{"subject", id}, {"order", order}, {"label", entry.label()}, {"group", to_string(info.group)}};
    }
    publish_reliable({{"v", kProtocolVersion},
                      {"type", "session"},
                      {"state", "running"},
                      {"subject", id},
                      {"order", order},
                      {"label", entry.label()},
                      {"plan_entry", to_json(entry)}});

    TickLoop loop(runner, TickLoopOptions{opts_.pacing, cfg.telemetry_hz, cfg.overrun_warn_fraction, {}});
    auto rec = loop.run([this](const TelemetryFrame& f) { publish(to_json(f), true); }, &abort_);
    rec.input_source = source->describe();
    if (opts_.clutch) opts_.clutch->flush();

    if (rec.invalid_reason == "aborted by operator") {
        publish_reliable({{"v", kProtocolVersion}, {"type", "session"}, {"state", "aborted"}, {"subject", id}, {"order", order}});
        return;
    }
    study_.store_trial(rec);
    ++completed_;
    publish_reliable({{"v", kProtocolVersion},
                      {"type", "session"},
                      {"state", "finished"},
                      {"subject", id},
                      {"order", order},
                      {"valid", rec.valid},
                      {"invalid_reason", rec.invalid_reason},
                      {"error", rec.error.error},
                      {"collisions", rec.error.collisions},
                      {"warnings", rec.warnings},
                      {"run_stats",
                       {{"ticks", rec.run_stats.ticks},
                        {"overruns", rec.run_stats.overruns},
                        {"p99_tick_ms", rec.run_stats.p99_tick_ms}}}});

    if (rec.valid && entry.task == Task::PathFollowing) {
        const auto done = study_.completed(id);
        bool phase_done = true;
        for (const auto& e : plan.entries)
            if (e.task == Task::PathFollowing && e.phase == entry.phase &&
                !std::binary_search(done.begin(), done.end(), e.order))
                phase_done = false;
        if (phase_done)
            publish_reliable({{"v", kProtocolVersion},
                              {"type", "questionnaire_due"},
                              {"subject", id},
                              {"phase", to_string(entry.phase)},
                              {"group", to_string(info.group)},
                              {"helpfulness", entry.phase == Phase::Training && info.group != FeedbackMode::FPV}});
    }
}

http::response<http::string_body> Server::Impl::handle_http(const http::request<http::string_body>& req) {
    auto respond = [&](http::status status, std::string body, std::string type) {
        http::response<http::string_body> res{status, req.version()};
        res.set(http::field::server, "haptrain");
        res.set(http::field::content_type, type);
        res.set(http::field::access_control_allow_origin, "*");
        res.keep_alive(req.keep_alive());
        res.body() = std::move(body);
        res.prepare_payload();
        return res;
    };
    auto json_reply = [&](http::status status, const nlohmann::json& j) {
        return respond(status, j.dump(), "application/json");
    };
    auto fail = [&](http::status status, const std::string& code, const std::string& text) {
        return json_reply(status, error_message(code, text));
    };

    std::string target(req.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);

    try {
        if (req.method() == http::verb::get && target == "/api/status") {
            auto j = study_.status();
            j["v"] = kProtocolVersion;
            j["session"] = session_json();
            return json_reply(http::status::ok, j);
        }
        if (req.method() == http::verb::get && target.starts_with("/api/plan/")) {
            const std::string id = target.substr(std::strlen("/api/plan/"));
            const auto plan = study_.plan_for(id);
            nlohmann::json entries = nlohmann::json::array();
            for (const auto& e : plan.entries) entries.push_back(to_json(e));
            return json_reply(http::status::ok, {{"v", kProtocolVersion}, {"subject", id}, {"entries", entries}});
        }
        if (req.method() == http::verb::get && target.starts_with("/api/trials/")) {
            const std::string rest = target.substr(std::strlen("/api/trials/"));
            const auto slash = rest.find('/');
            if (slash == std::string::npos) return fail(http::status::bad_request, "malformed", "use /api/trials/<subject>/<order>");
            const std::string id = rest.substr(0, slash);
            study_.subject(id);
            int order = 0;
            try {
                order = std::stoi(rest.substr(slash + 1));
            } catch (const std::exception&) {
                return fail(http::status::bad_request, "malformed", "session order must be a number");
            }
            auto body = study_.trial_jsonl(id, order);
            if (!body) return fail(http::status::not_found, "not_found", "no trial stored for that session");
            return respond(http::status::ok, std::move(*body), "application/x-ndjson");
        }
        if (req.method() == http::verb::post && target == "/api/questionnaire") {
            const auto j = nlohmann::json::parse(req.body());
            if (j.contains("v") && j["v"] != kProtocolVersion) {
                auto err = error_message("version_mismatch", "client protocol version is not supported");
                err["server_version"] = kProtocolVersion;
                return json_reply(http::status::bad_request, err);
            }
            const std::string id = j.at("subject");
            const auto r = study_.capture_questionnaire(id, questionnaire_from_json(j));
            auto out = to_json(r);
            out["subject"] = id;
            return json_reply(http::status::ok, {{"v", kProtocolVersion}, {"ok", true}, {"response", out}});
        }
        if (req.method() == http::verb::get && !opts_.static_dir.empty() && !target.starts_with("/api/")) {
            std::string rel = target == "/" ? "/index.html" : target;
            if (rel.find("..") != std::string::npos) return fail(http::status::bad_request, "malformed", "bad path");
            std::ifstream in(opts_.static_dir + rel, std::ios::binary);
            if (in) {
                std::ostringstream ss;
                ss << in.rdbuf();
                return respond(http::status::ok, ss.str(), content_type_for(rel));
            }
        }
        return fail(http::status::not_found, "not_found", "no route for " + target);
    } catch (const PhaseError& e) {
        return fail(http::status::conflict, "phase", e.what());
    } catch (const Error& e) {
        return fail(http::status::bad_request, "invalid", e.what());
    } catch (const nlohmann::json::exception& e) {
        return fail(http::status::bad_request, "malformed", e.what());
    }
}

Server::Server(Study& study, ServerOptions opts) : impl_(std::make_unique<Impl>(study, std::move(opts))) {}
Server::~Server() { impl_->stop(); }
unsigned short Server::start() { return impl_->start(); }
void Server::stop() { impl_->stop(); }
void Server::wait() { impl_->wait(); }
nlohmann::json Server::request_session(const nlohmann::json& cmd) { return impl_->start_session(cmd); }
bool Server::session_running() const { return impl_->running_.load(); }
std::size_t Server::clients() const { return impl_->client_count_.load(); }
std::uint64_t Server::frames_dropped() const { return impl_->dropped_.load(); }
std::uint64_t Server::sessions_completed() const { return impl_->completed_.load(); }

}  // namespace haptrain
