#include "haptrain/clutch.hpp"

#include "haptrain/error.hpp"

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace haptrain {

std::string to_string(ClutchSide side) {
    return side == ClutchSide::Ventral ? "ventral" : "dorsal";
}

std::string to_string(ForceLaw law) {
    return law == ForceLaw::Linear ? "linear" : "quadratic";
}

ForceLaw force_law_from_string(const std::string& s) {
    if (s == "linear") return ForceLaw::Linear;
    if (s == "quadratic") return ForceLaw::Quadratic;
    throw ValidationError("unknown force law '" + s + "'");
}

void ClutchModel::validate() const {
    if (!(force_per_volt > 0.0)) throw ValidationError("force_per_volt must be positive");
    if (!(disengage_time > 0.0)) throw ValidationError("disengage_time must be positive");
    if (!(reference_voltage > 0.0 && reference_voltage <= kMaxClutchVoltage))
        throw ValidationError("reference voltage must lie in (0, 400] V");
}

double holding_force(const ClutchModel& model, double voltage) {
    if (!(voltage >= 0.0 && voltage <= kMaxClutchVoltage))
        throw RangeError("clutch voltage " + std::to_string(voltage) + " V outside [0, 400]");
    if (model.law == ForceLaw::Linear) return model.force_per_volt * voltage;
    const double k = model.force_per_volt / model.reference_voltage;
    return k * voltage * voltage;
}

double disengage_force_at(const ClutchModel& model, double initial_voltage, double elapsed) {
    const double f0 = holding_force(model, initial_voltage);
    const double td = model.disengage_time;
    if (elapsed <= 0.0) return f0;
    if (elapsed <= td) return f0 * (0.1 + 0.9 * (1.0 - elapsed / td));
    if (elapsed < 2.0 * td) return 0.1 * f0 * (2.0 - elapsed / td);
    return 0.0;
}

void ClutchBank::engage(ClutchSide side, double voltage, double z_at_engage) {
    if (!(voltage > 0.0 && voltage <= kMaxClutchVoltage)) throw RangeError("engage voltage outside (0, 400] V");
    auto& ch = channel(side);
    ch.engaged = true;
    ch.voltage = voltage;
    ch.engage_z = z_at_engage;
}

void ClutchBank::release(ClutchSide side, double t) {
    auto& ch = channel(side);
    if (!ch.engaged) return;
    ch.released_voltage = ch.voltage;
    ch.engaged = false;
    ch.voltage = 0.0;
    ch.engage_z.reset();
    ch.transient_start = t;
}

double ClutchBank::force(const ClutchModel& model, ClutchSide side, double t) const {
    const auto& ch = channel(side);
    if (ch.engaged) return holding_force(model, ch.voltage);
    if (ch.released_voltage <= 0.0) return 0.0;
    return disengage_force_at(model, ch.released_voltage, t - ch.transient_start);
}

Restrained restrain(double commanded_z, const ClutchBank& bank, const Calibration& cal, double compliance) {
    Restrained out{commanded_z, false, false};
    double lo = -INFINITY;
    double hi = INFINITY;
    if (bank.dorsal.engaged && bank.dorsal.engage_z)
        hi = std::clamp(*bank.dorsal.engage_z + compliance, cal.alt_min, cal.alt_max);
    if (bank.ventral.engaged && bank.ventral.engage_z)
        lo = std::clamp(*bank.ventral.engage_z - compliance, cal.alt_min, cal.alt_max);
    if (std::isfinite(lo) && std::isfinite(hi)) {
        out.frozen = true;
        if (lo > hi) std::swap(lo, hi);
    }
    const double z = std::clamp(commanded_z, lo, hi);
    out.limited = z != commanded_z;
    out.z = z;
    return out;
}

namespace {

char side_letter(ClutchSide s) {
    return s == ClutchSide::Dorsal ? 'D' : 'V';
}

ClutchSide side_from(std::string_view tok, const std::string& raw) {
    if (tok == "D") return ClutchSide::Dorsal;
    if (tok == "V") return ClutchSide::Ventral;
    throw ParseError("unknown clutch side", raw);
}

std::vector<std::string_view> split_line(std::string_view line, const std::string& raw) {
    if (line.empty() || line.back() != '\n') throw ParseError("command must end with a newline", raw);
    line.remove_suffix(1);
    std::vector<std::string_view> toks;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        const auto sp = line.find(' ', pos);
        const auto tok = line.substr(pos, sp == std::string_view::npos ? std::string_view::npos : sp - pos);
        if (tok.empty()) throw ParseError("empty field", raw);
        toks.push_back(tok);
        if (sp == std::string_view::npos) break;
        pos = sp + 1;
    }
    return toks;
}

int parse_int(std::string_view tok, const std::string& raw) {
    int v = 0;
    const auto r = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (r.ec != std::errc{} || r.ptr != tok.data() + tok.size()) throw ParseError("bad integer field", raw);
    return v;
}

}  // namespace

std::string encode_command(const ClutchCommand& cmd) {
    return std::visit(
        [](const auto& c) -> std::string {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, EngageCmd>) {
                if (c.volts <= 0 || c.volts > kMaxClutchVoltage) throw RangeError("engage voltage outside (0, 400] V");
                return std::string("ENG ") + side_letter(c.side) + ' ' + std::to_string(c.volts) + '\n';
            } else if constexpr (std::is_same_v<T, DisengageCmd>) {
                return std::string("DIS ") + side_letter(c.side) + '\n';
            } else {
                return "PING\n";
            }
        },
        cmd);
}

ClutchCommand parse_command(std::string_view line) {
    const std::string raw(line);
    const auto toks = split_line(line, raw);
    if (toks[0] == "PING" && toks.size() == 1) return PingCmd{};
    if (toks[0] == "DIS" && toks.size() == 2) return DisengageCmd{side_from(toks[1], raw)};
    if (toks[0] == "ENG" && toks.size() == 3) {
        const auto side = side_from(toks[1], raw);
        const int volts = parse_int(toks[2], raw);
        if (volts <= 0 || volts > kMaxClutchVoltage)
            throw RangeError("voltage " + std::to_string(volts) + " V out of range (0, 400]");
        return EngageCmd{side, volts};
    }
    throw ParseError("unrecognised clutch command", raw);
}

std::string encode_reply(const ClutchReply& reply) {
    if (const auto* err = std::get_if<ErrReply>(&reply)) return "ERR " + std::to_string(err->code) + '\n';
    return "OK\n";
}

ClutchReply parse_reply(std::string_view line) {
    const std::string raw(line);
    const auto toks = split_line(line, raw);
    if (toks[0] == "OK" && toks.size() == 1) return OkReply{};
    if (toks[0] == "ERR" && toks.size() == 2) return ErrReply{parse_int(toks[1], raw)};
    throw ParseError("unrecognised device reply", raw);
}

std::string ClutchEmulator::handle(std::string_view line, double t) {
    ++commands_;
    try {
        const auto cmd = parse_command(line);
        if (const auto* eng = std::get_if<EngageCmd>(&cmd)) {
            bank_.engage(eng->side, eng->volts, 0.0);
        } else if (const auto* dis = std::get_if<DisengageCmd>(&cmd)) {
            bank_.release(dis->side, t);
        }
        return encode_reply(OkReply{});
    } catch (const RangeError&) {
        return encode_reply(ErrReply{static_cast<int>(DeviceError::VoltageRange)});
    } catch (const ParseError&) {
        return encode_reply(ErrReply{static_cast<int>(DeviceError::Malformed)});
    }
}

std::string LoopbackTransport::transact(const std::string& line) {
    std::lock_guard lock(mutex_);
    return emulator_.handle(line);
}

SerialTransport::SerialTransport(const std::string& path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_NOCTTY);
    if (fd_ < 0) throw ValidationError("cannot open clutch device " + path);
    if (::isatty(fd_)) {
        termios tio{};
        if (::tcgetattr(fd_, &tio) == 0) {
            ::cfmakeraw(&tio);
            ::cfsetspeed(&tio, B115200);
            ::tcsetattr(fd_, TCSANOW, &tio);
        }
    }
}

SerialTransport::~SerialTransport() {
    if (fd_ >= 0) ::close(fd_);
}

std::string SerialTransport::transact(const std::string& line) {
    if (::write(fd_, line.data(), line.size()) != static_cast<ssize_t>(line.size()))
        throw Error("short write to clutch device");
    std::string reply;
    char c = 0;
    while (reply.empty() || reply.back() != '\n') {
        pollfd pfd{fd_, POLLIN, 0};
        if (::poll(&pfd, 1, 500) <= 0) throw Error("clutch device reply timeout");
        if (::read(fd_, &c, 1) != 1) throw Error("clutch device closed");
        reply.push_back(c);
    }
    return reply;
}

ClutchLink::ClutchLink(std::shared_ptr<ClutchTransport> transport) : transport_(std::move(transport)) {
    worker_ = std::thread([this] { run(); });
}

ClutchLink::~ClutchLink() {
    {
        std::lock_guard lock(mutex_);
        stop_ = true;
    }
    cv_.notify_all();
    worker_.join();
}

void ClutchLink::submit(const ClutchCommand& cmd) {
    {
        std::lock_guard lock(mutex_);
        queue_.push_back(cmd);
    }
    cv_.notify_one();
}

void ClutchLink::flush() {
    std::unique_lock lock(mutex_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

std::uint64_t ClutchLink::sent() const {
    std::lock_guard lock(mutex_);
    return sent_;
}

std::uint64_t ClutchLink::errors() const {
    std::lock_guard lock(mutex_);
    return errors_;
}

void ClutchLink::run() {
    std::unique_lock lock(mutex_);
    for (;;) {
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        if (queue_.empty() && stop_) return;
        const auto cmd = queue_.front();
        queue_.pop_front();
        busy_ = true;
        lock.unlock();
        bool failed = false;
        try {
            failed = std::holds_alternative<ErrReply>(parse_reply(transport_->transact(encode_command(cmd))));
        } catch (const std::exception&) {
            failed = true;
        }
        lock.lock();
        ++sent_;
        if (failed) ++errors_;
        busy_ = false;
        if (queue_.empty()) idle_cv_.notify_all();
    }
}

bool DeviceLedger::begin_subject() {
    if (total_subjects > 0) polarity_reversed = !polarity_reversed;
    ++total_subjects;
    ++subjects_on_springs;
    return polarity_reversed;
}

void DeviceLedger::save(const std::filesystem::path& file) const {
    const nlohmann::json doc = {{"polarity_reversed", polarity_reversed},
                                {"subjects_on_springs", subjects_on_springs},
                                {"total_subjects", total_subjects},
                                {"engagements", engagements}};
    std::ofstream(file) << doc.dump(2) << '\n';
}

DeviceLedger DeviceLedger::load(const std::filesystem::path& file) {
    DeviceLedger led;
    std::ifstream in(file);
    if (!in) return led;
    const auto doc = nlohmann::json::parse(in);
    led.polarity_reversed = doc.value("polarity_reversed", false);
    led.subjects_on_springs = doc.value("subjects_on_springs", 0);
    led.total_subjects = doc.value("total_subjects", 0);
    led.engagements = doc.value("engagements", std::uint64_t{0});
    return led;
}

}  // namespace haptrain
