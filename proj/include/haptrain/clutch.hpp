#pragma once

#include "haptrain/inputmap.hpp"

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <variant>

namespace haptrain {

inline constexpr double kMaxClutchVoltage = 400.0;
inline constexpr double kOperatingVoltage = 300.0;
inline constexpr double kDisengageTime = 0.040;  // 90 % force drop [s]
inline constexpr double kDefaultCompliance = 0.05;
inline constexpr int kSubjectsPerSpringSet = 5;

// Ventral blocks elbow extension (floor side), dorsal blocks flexion
// (ceiling side).
enum class ClutchSide { Ventral, Dorsal };

std::string to_string(ClutchSide side);

enum class ForceLaw { Linear, Quadratic };

std::string to_string(ForceLaw law);
ForceLaw force_law_from_string(const std::string& s);

struct ClutchModel {
    // Linear law: F = force_per_volt * V. The quadratic law F = k V^2 uses
    // k chosen so both laws agree at the operating voltage.
    double force_per_volt = 0.05;
    double disengage_time = kDisengageTime;
    ForceLaw law = ForceLaw::Linear;
    double reference_voltage = kOperatingVoltage;

    void validate() const;
};

// Maximum holding force at voltage V in [0, 400]; RangeError otherwise.
double holding_force(const ClutchModel& model, double voltage);

// Residual holding force `elapsed` seconds after the voltage is removed:
// linear from F(V) down to 0.1 F(V) at disengage_time, then linear to zero
// at twice that.
double disengage_force_at(const ClutchModel& model, double initial_voltage, double elapsed);

struct ClutchChannel {
    ClutchSide side = ClutchSide::Ventral;
    bool engaged = false;
    double voltage = 0.0;
    std::optional<double> engage_z = std::nullopt;
    double transient_start = 0.0;  // time of the last release
    double released_voltage = 0.0;

    friend bool operator==(const ClutchChannel&, const ClutchChannel&) = default;
};

// The pair of clutches on the sleeve.
struct ClutchBank {
    ClutchChannel ventral{.side = ClutchSide::Ventral};
    ClutchChannel dorsal{.side = ClutchSide::Dorsal};

    ClutchChannel& channel(ClutchSide side) { return side == ClutchSide::Ventral ? ventral : dorsal; }
    const ClutchChannel& channel(ClutchSide side) const { return side == ClutchSide::Ventral ? ventral : dorsal; }

    void engage(ClutchSide side, double voltage, double z_at_engage);
    void release(ClutchSide side, double t);

    // Modeled force available on a channel at time t, including the
    // disengagement transient.
    double force(const ClutchModel& model, ClutchSide side, double t) const;

    friend bool operator==(const ClutchBank&, const ClutchBank&) = default;
};

struct Restrained {
    double z = 0.0;
    bool limited = false;  // the command was cut back
    bool frozen = false;   // both channels engaged; motion held in a band
};

// Simulated motion blocking. A dorsal lock caps the altitude at
// engage_z + compliance, a ventral lock floors it at engage_z - compliance;
// the spring travel supplies the compliance. Bounds are kept inside the
// calibrated altitude range.
Restrained restrain(double commanded_z, const ClutchBank& bank, const Calibration& cal,
                    double compliance = kDefaultCompliance);

// Wire protocol: line-oriented ASCII.
struct EngageCmd {
    ClutchSide side;
    int volts;
    friend bool operator==(const EngageCmd&, const EngageCmd&) = default;
};
struct DisengageCmd {
    ClutchSide side;
    friend bool operator==(const DisengageCmd&, const DisengageCmd&) = default;
};
struct PingCmd {
    friend bool operator==(const PingCmd&, const PingCmd&) = default;
};
using ClutchCommand = std::variant<EngageCmd, DisengageCmd, PingCmd>;

struct OkReply {
    friend bool operator==(const OkReply&, const OkReply&) = default;
};
struct ErrReply {
    int code = 0;
    friend bool operator==(const ErrReply&, const ErrReply&) = default;
};
using ClutchReply = std::variant<OkReply, ErrReply>;

// Device error codes carried in "ERR <code>".
enum class DeviceError : int { Malformed = 1, VoltageRange = 2, Busy = 3 };

std::string encode_command(const ClutchCommand& cmd);
ClutchCommand parse_command(std::string_view line);  // throws ParseError / RangeError
std::string encode_reply(const ClutchReply& reply);
ClutchReply parse_reply(std::string_view line);

// In-process stand-in for the sleeve firmware: consumes command lines,
// tracks channel state and answers OK / ERR.
class ClutchEmulator {
public:
    std::string handle(std::string_view line, double t = 0.0);

    const ClutchBank& bank() const { return bank_; }
    std::uint64_t commands() const { return commands_; }

private:
    ClutchBank bank_;
    std::uint64_t commands_ = 0;
};

// Byte transport to the sleeve: send one line, receive one reply line.
class ClutchTransport {
public:
    virtual ~ClutchTransport() = default;
    virtual std::string transact(const std::string& line) = 0;
};

class LoopbackTransport final : public ClutchTransport {
public:
    std::string transact(const std::string& line) override;
    const ClutchEmulator& emulator() const { return emulator_; }

private:
    std::mutex mutex_;
    ClutchEmulator emulator_;
};

// Serial-style character device (e.g. an RFCOMM tty).
class SerialTransport final : public ClutchTransport {
public:
    explicit SerialTransport(const std::string& path);
    ~SerialTransport() override;
    SerialTransport(const SerialTransport&) = delete;
    SerialTransport& operator=(const SerialTransport&) = delete;

    std::string transact(const std::string& line) override;

private:
    int fd_ = -1;
};

// Asynchronous command queue in front of a transport. submit() never
// blocks the simulation tick; a worker thread does the I/O.
class ClutchLink {
public:
    explicit ClutchLink(std::shared_ptr<ClutchTransport> transport);
    ~ClutchLink();
    ClutchLink(const ClutchLink&) = delete;
    ClutchLink& operator=(const ClutchLink&) = delete;

    void submit(const ClutchCommand& cmd);
    // Blocks until every queued command has been answered.
    void flush();

    std::uint64_t sent() const;
    std::uint64_t errors() const;

private:
    void run();

    std::shared_ptr<ClutchTransport> transport_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    std::condition_variable idle_cv_;
    std::deque<ClutchCommand> queue_;
    bool stop_ = false;
    bool busy_ = false;
    std::uint64_t sent_ = 0;
    std::uint64_t errors_ = 0;
    std::thread worker_;
};

// Per-study hardware bookkeeping: plate polarity alternates between
// consecutive subjects and springs are due for replacement every five.
struct DeviceLedger {
    bool polarity_reversed = false;
    int subjects_on_springs = 0;
    int total_subjects = 0;
    std::uint64_t engagements = 0;

    // Register a new subject; returns the polarity flag to use.
    bool begin_subject();
    bool springs_due() const { return subjects_on_springs >= kSubjectsPerSpringSet; }
    void replace_springs() { subjects_on_springs = 0; }

    void save(const std::filesystem::path& file) const;
    static DeviceLedger load(const std::filesystem::path& file);
};

}  // namespace haptrain
