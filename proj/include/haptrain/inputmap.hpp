#pragma once

#include "haptrain/dynamics.hpp"
#include "haptrain/trajectory.hpp"

#include <atomic>
#include <functional>
#include <cstdint>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace haptrain {

enum class Polarity { FlexionUp, FlexionDown };
enum class SourceKind { Device, Keyboard, Gamepad, Scripted };

std::string to_string(Polarity p);
Polarity polarity_from_string(const std::string& s);
std::string to_string(SourceKind k);

inline constexpr double kMinCalibrationSpan = 10.0;  // degrees
inline constexpr double kStaleAfter = 0.2;           // seconds

// Linear elbow-angle -> altitude map, anchored at the subject's extension
// (angle_min) and flexion (angle_max) limits.
struct Calibration {
    double angle_min = 30.0;   // deg, max extension
    double angle_max = 150.0;  // deg, max flexion
    double alt_min = 7.0;
    double alt_max = 13.0;
    Polarity polarity = Polarity::FlexionUp;

    friend bool operator==(const Calibration&, const Calibration&) = default;
};

// Throws ValidationError when the angle span is under 10 degrees or the
// altitude range is empty.
Calibration calibrate(double angle_min, double angle_max, double alt_min, double alt_max,
                      Polarity polarity = Polarity::FlexionUp);

// Extremes of a recorded flexion/extension sweep.
Calibration calibrate_from_sweep(const std::vector<double>& angles, double alt_min, double alt_max,
                                 Polarity polarity = Polarity::FlexionUp);

struct InputSample {
    double angle = 0.0;      // degrees
    double timestamp = 0.0;  // seconds, monotonic per source
    SourceKind source = SourceKind::Scripted;

    friend bool operator==(const InputSample&, const InputSample&) = default;
};

struct MappedAltitude {
    double z = 0.0;
    bool clamped = false;
};

MappedAltitude map_angle(const Calibration& cal, double angle);
MappedAltitude map_angle(const std::optional<Calibration>& cal, const InputSample& sample);

// Inverse of map_angle on the calibrated range (used by scripted pilots).
double angle_for_altitude(const Calibration& cal, double z);

// Keyboard / gamepad axes arrive normalized to [0, 1]; 1 is full flexion.
double axis_to_angle(const Calibration& cal, double axis);

struct PolledSample {
    InputSample sample;
    bool stale = false;
};

// Single-slot, latest-value-wins mailbox. Writers never block readers for
// longer than a copy; samples older than the held one are dropped.
class LatestValueMailbox {
public:
    // Returns false when the sample was dropped as out of order.
    bool push(const InputSample& sample);

    // Throws NoSignalError if nothing was ever pushed.
    PolledSample poll_latest(double now) const;

    bool has_value() const;
    std::uint64_t pushes() const { return pushes_.load(); }

private:
    mutable std::mutex mutex_;
    std::optional<InputSample> latest_;
    std::atomic<std::uint64_t> pushes_{0};
};

// What a source may look at when asked for the next sample.
struct SourceContext {
    double t = 0.0;
    const DroneState* state = nullptr;
    const Trajectory* course = nullptr;
    int arrow = 0;  // +1 arrow up shown, -1 arrow down shown, 0 none
};

class InputSource {
public:
    virtual ~InputSource() = default;

    // Sample to use for the tick at ctx.t.
    virtual PolledSample read(const SourceContext& ctx) = 0;
    virtual std::string describe() const = 0;
};

// Live source backed by a mailbox filled from another thread.
class MailboxSource final : public InputSource {
public:
    MailboxSource(std::shared_ptr<LatestValueMailbox> mailbox, std::string name)
        : mailbox_(std::move(mailbox)), name_(std::move(name)) {}

    PolledSample read(const SourceContext& ctx) override;
    std::string describe() const override { return name_; }

    // Mailbox timestamps are on the source's clock; the session supplies
    // the matching "now" through this hook (defaults to ctx.t).
    void set_clock(std::function<double()> clock) { clock_ = std::move(clock); }

private:
    std::shared_ptr<LatestValueMailbox> mailbox_;
    std::string name_;
    std::function<double()> clock_;
};

// Parses one "ANG <degrees> <monotonic-ms>" line. Throws ParseError.
InputSample parse_angle_line(std::string_view line, SourceKind source = SourceKind::Device);
std::string format_angle_line(const InputSample& sample);

// Replays a recorded "ANG" script in file order: at time t the latest line
// with timestamp <= t is in effect.
class ScriptFileSource final : public InputSource {
public:
    explicit ScriptFileSource(std::vector<InputSample> samples);
    static ScriptFileSource from_stream(std::istream& in);
    static ScriptFileSource from_file(const std::string& path);

    PolledSample read(const SourceContext& ctx) override;
    std::string describe() const override { return "script"; }

    const std::vector<InputSample>& samples() const { return samples_; }

private:
    std::vector<InputSample> samples_;
    std::size_t cursor_ = 0;
};

// One angle per tick, as stored in a trial record; drives replays.
class RecordedSource final : public InputSource {
public:
    explicit RecordedSource(std::vector<double> angles) : angles_(std::move(angles)) {}

    PolledSample read(const SourceContext& ctx) override;
    std::string describe() const override { return "recorded"; }

private:
    std::vector<double> angles_;
    std::size_t next_ = 0;
};

// Reads "ANG" lines from a byte stream (serial port, pipe, file) on its
// own thread and pushes them into a mailbox. Malformed lines are counted
// and skipped.
class LineStreamReader {
public:
    LineStreamReader(std::string path, std::shared_ptr<LatestValueMailbox> mailbox);
    ~LineStreamReader();

    LineStreamReader(const LineStreamReader&) = delete;
    LineStreamReader& operator=(const LineStreamReader&) = delete;

    std::uint64_t malformed() const { return malformed_.load(); }
    void stop();

private:
    void run();

    std::string path_;
    std::shared_ptr<LatestValueMailbox> mailbox_;
    std::atomic<bool> stop_{false};
    std::atomic<std::uint64_t> malformed_{0};
    int fd_ = -1;
    std::thread worker_;
};

}  // namespace haptrain
