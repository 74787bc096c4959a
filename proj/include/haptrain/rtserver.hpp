#pragma once

#include "haptrain/session.hpp"
#include "haptrain/study.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace haptrain {

inline constexpr int kProtocolVersion = 1;
inline constexpr double kTelemetryWindow = 30.0;  // metres of course ahead of the drone
inline constexpr double kWindowStep = 1.0;        // centreline sample spacing in the window

// One telemetry message. Frames are taken from trace rows, never
// interpolated.
struct TelemetryFrame {
    std::uint64_t tick = 0;
    TraceRow row;
    double error = 0.0;  // z - centerline_z
    std::string subject;
    FeedbackMode group = FeedbackMode::FPV;
    int order = 1;
    Task task = Task::PathFollowing;
    Phase phase = Phase::Baseline;
    int session_index = 1;
    CourseKind course = CourseKind::SineTube;
    double tube_radius = 0.0;
    double course_length = 0.0;
    // (x, z) pairs: centreline samples for tubes, ring centres for rings.
    std::vector<std::array<double, 2>> window;
};

nlohmann::json to_json(const TelemetryFrame& f);
TelemetryFrame telemetry_frame_from_json(const nlohmann::json& j);

TelemetryFrame make_frame(const SessionRunner& runner);

// Picks the ticks that are sent at `hz` out of a 1/dt tick stream. The
// first tick is always sent; afterwards tick k goes out when floor(k hz dt)
// advances, so the long-run rate is exactly hz.
class TelemetryDecimator {
public:
    TelemetryDecimator(double hz, double dt);
    bool due(std::uint64_t tick) const;

private:
    std::int64_t hz_;
    std::int64_t ticks_per_second_;
};

enum class Pacing { Headless, Interactive };

struct TickLoopOptions {
    Pacing pacing = Pacing::Headless;
    double telemetry_hz = 30.0;
    double overrun_warn_fraction = 0.01;
    // Test hook, called at the start of every tick's timed section.
    std::function<void(std::uint64_t tick)> before_tick;
};

using FrameSink = std::function<void(const TelemetryFrame&)>;

// Drives a SessionRunner at the fixed timestep. Interactive pacing sleeps
// to the next dt boundary; headless runs flat out. Both produce the same
// trace for the same inputs.
class TickLoop {
public:
    TickLoop(SessionRunner& runner, TickLoopOptions opts = {});

    // Runs to completion (or until *abort becomes true) and returns the
    // finished record with run statistics and overrun warnings filled in.
    TrialRecord run(const FrameSink& sink = {}, const std::atomic<bool>* abort = nullptr);

    const RunStats& stats() const { return stats_; }
    std::uint64_t frames_emitted() const { return frames_; }

private:
    SessionRunner& runner_;
    TickLoopOptions opts_;
    RunStats stats_;
    std::uint64_t frames_ = 0;
};

struct ServerOptions {
    std::string address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    Pacing pacing = Pacing::Interactive;
    std::size_t client_queue_limit = 64;  // frames buffered per client before dropping
    std::string static_dir;               // served at / when set
    ClutchLink* clutch = nullptr;
};

// WebSocket (/ws) and HTTP (/api/...) gateway around one study. Network
// I/O runs on its own thread; sessions run on a separate sim thread. See
// docs/protocol.md for the message schemas.
class Server {
public:
    Server(Study& study, ServerOptions opts = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    // Binds and starts serving; returns the bound port. Throws Error when
    // the address cannot be bound.
    unsigned short start();
    void stop();
    // Blocks until stop() is called from another thread or a signal handler.
    void wait();

    // Same as a start_session control message: {"subject", "order",
    // "input": "ws" | "pilot[:opts]"}. Throws PhaseError when busy.
    nlohmann::json request_session(const nlohmann::json& cmd);

    bool session_running() const;
    std::size_t clients() const;
    std::uint64_t frames_dropped() const;
    std::uint64_t sessions_completed() const;

    class Impl;

private:
    std::unique_ptr<Impl> impl_;
};

}  // namespace haptrain
