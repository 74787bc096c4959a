#include "haptrain/inputmap.hpp"

#include "haptrain/error.hpp"

#include <fcntl.h>
#include <poll.h>
#include <termios.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace haptrain {

std::string to_string(Polarity p) {
    return p == Polarity::FlexionUp ? "flexion_up" : "flexion_down";
}

Polarity polarity_from_string(const std::string& s) {
    if (s == "flexion_up") return Polarity::FlexionUp;
    if (s == "flexion_down") return Polarity::FlexionDown;
    throw ValidationError("unknown polarity '" + s + "'");
}

std::string to_string(SourceKind k) {
    switch (k) {
        case SourceKind::Device: return "device";
        case SourceKind::Keyboard: return "keyboard";
        case SourceKind::Gamepad: return "gamepad";
        case SourceKind::Scripted: return "scripted";
    }
    return "unknown";
}

Calibration calibrate(double angle_min, double angle_max, double alt_min, double alt_max, Polarity polarity) {
    if (!std::isfinite(angle_min) || !std::isfinite(angle_max)) throw ValidationError("non-finite calibration angle");
    if (angle_max - angle_min < kMinCalibrationSpan)
        throw ValidationError("calibration too narrow: flexion/extension span under 10 degrees");
    if (!(alt_min < alt_max)) throw ValidationError("calibration altitude range must satisfy min < max");
    return Calibration{angle_min, angle_max, alt_min, alt_max, polarity};
}

Calibration calibrate_from_sweep(const std::vector<double>& angles, double alt_min, double alt_max,
                                 Polarity polarity) {
    if (angles.empty()) throw ValidationError("empty calibration sweep");
    const auto [lo, hi] = std::minmax_element(angles.begin(), angles.end());
    return calibrate(*lo, *hi, alt_min, alt_max, polarity);
}

MappedAltitude map_angle(const Calibration& cal, double angle) {
    MappedAltitude out;
    double a = angle;
    if (a < cal.angle_min || a > cal.angle_max) {
        a = std::clamp(a, cal.angle_min, cal.angle_max);
        out.clamped = true;
    }
    double u = (a - cal.angle_min) / (cal.angle_max - cal.angle_min);
    if (cal.polarity == Polarity::FlexionDown) u = 1.0 - u;
    out.z = cal.alt_min + u * (cal.alt_max - cal.alt_min);
    return out;
}

MappedAltitude map_angle(const std::optional<Calibration>& cal, const InputSample& sample) {
    if (!cal) throw ValidationError("no calibration for this subject");
    return map_angle(*cal, sample.angle);
}

double angle_for_altitude(const Calibration& cal, double z) {
    double u = (z - cal.alt_min) / (cal.alt_max - cal.alt_min);
    if (cal.polarity == Polarity::FlexionDown) u = 1.0 - u;
    return cal.angle_min + u * (cal.angle_max - cal.angle_min);
}

double axis_to_angle(const Calibration& cal, double axis) {
    return cal.angle_min + std::clamp(axis, 0.0, 1.0) * (cal.angle_max - cal.angle_min);
}

bool LatestValueMailbox::push(const InputSample& sample) {
    std::lock_guard lock(mutex_);
    if (latest_ && sample.timestamp < latest_->timestamp) return false;
    latest_ = sample;
    pushes_.fetch_add(1);
    return true;
}

PolledSample LatestValueMailbox::poll_latest(double now) const {
    std::lock_guard lock(mutex_);
    if (!latest_) throw NoSignalError("no input sample received yet");
    return {*latest_, now - latest_->timestamp > kStaleAfter};
}

bool LatestValueMailbox::has_value() const {
    std::lock_guard lock(mutex_);
    return latest_.has_value();
}

PolledSample MailboxSource::read(const SourceContext& ctx) {
    return mailbox_->poll_latest(clock_ ? clock_() : ctx.t);
}

InputSample parse_angle_line(std::string_view line, SourceKind source) {
    std::string_view body = line;
    while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.remove_suffix(1);
    const std::string raw(line);
    if (body.substr(0, 4) != "ANG ") throw ParseError("expected 'ANG <degrees> <ms>'", raw);
    body.remove_prefix(4);
    const auto space = body.find(' ');
    if (space == std::string_view::npos) throw ParseError("missing timestamp field", raw);

    InputSample s;
    s.source = source;
    const auto deg = body.substr(0, space);
    const auto ms = body.substr(space + 1);
    auto r1 = std::from_chars(deg.data(), deg.data() + deg.size(), s.angle);
    if (r1.ec != std::errc{} || r1.ptr != deg.data() + deg.size() || !std::isfinite(s.angle))
        throw ParseError("bad angle field", raw);
    double millis = 0.0;
    auto r2 = std::from_chars(ms.data(), ms.data() + ms.size(), millis);
    if (r2.ec != std::errc{} || r2.ptr != ms.data() + ms.size() || !(millis >= 0.0))
        throw ParseError("bad timestamp field", raw);
    s.timestamp = millis / 1000.0;
    return s;
}

std::string format_angle_line(const InputSample& sample) {
    std::ostringstream os;
    os.precision(17);
    os << "ANG " << sample.angle << ' ' << static_cast<long long>(std::llround(sample.timestamp * 1000.0)) << '\n';
    return os.str();
}

ScriptFileSource::ScriptFileSource(std::vector<InputSample> samples) : samples_(std::move(samples)) {
    for (std::size_t i = 1; i < samples_.size(); ++i)
        if (samples_[i].timestamp < samples_[i - 1].timestamp)
            throw ValidationError("script timestamps must be non-decreasing (line " + std::to_string(i + 1) + ")");
}

ScriptFileSource ScriptFileSource::from_stream(std::istream& in) {
    std::vector<InputSample> samples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        samples.push_back(parse_angle_line(line, SourceKind::Scripted));
    }
    return ScriptFileSource(std::move(samples));
}

ScriptFileSource ScriptFileSource::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open input script " + path);
    return from_stream(in);
}

PolledSample ScriptFileSource::read(const SourceContext& ctx) {
    if (samples_.empty() || samples_.front().timestamp > ctx.t + 1e-9) throw NoSignalError("script has no sample yet");
    while (cursor_ + 1 < samples_.size() && samples_[cursor_ + 1].timestamp <= ctx.t + 1e-9) ++cursor_;
    return {samples_[cursor_], ctx.t - samples_[cursor_].timestamp > kStaleAfter};
}

PolledSample RecordedSource::read(const SourceContext& ctx) {
    if (next_ >= angles_.size()) throw NoSignalError("recorded input exhausted");
    return {InputSample{angles_[next_++], ctx.t, SourceKind::Scripted}, false};
}

LineStreamReader::LineStreamReader(std::string path, std::shared_ptr<LatestValueMailbox> mailbox)
    : path_(std::move(path)), mailbox_(std::move(mailbox)) {
    // Non-blocking so a FIFO without a writer yet does not stall the caller.
    fd_ = ::open(path_.c_str(), O_RDONLY | O_NOCTTY | O_NONBLOCK);
    if (fd_ < 0) throw ValidationError("cannot open input stream " + path_);
    if (::isatty(fd_)) {
        termios tio{};
        if (::tcgetattr(fd_, &tio) == 0) {
            ::cfmakeraw(&tio);
            ::tcsetattr(fd_, TCSANOW, &tio);
        }
    }
    worker_ = std::thread([this] { run(); });
}

LineStreamReader::~LineStreamReader() {
    stop();
}

void LineStreamReader::stop() {
    stop_ = true;
    if (worker_.joinable()) worker_.join();
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void LineStreamReader::run() {
    std::string pending;
    char buf[256];
    while (!stop_) {
        pollfd pfd{fd_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, 50);
        if (ready <= 0) continue;
        const auto n = ::read(fd_, buf, sizeof buf);
        if (n <= 0) {
            if (n == 0 && !::isatty(fd_)) break;  // end of a pipe / file
            continue;
        }
        pending.append(buf, static_cast<std::size_t>(n));
        std::size_t nl;
        while ((nl = pending.find('\n')) != std::string::npos) {
            const auto line = pending.substr(0, nl + 1);
            pending.erase(0, nl + 1);
            try {
                mailbox_->push(parse_angle_line(line, SourceKind::Device));
            } catch (const ParseError&) {
                malformed_.fetch_add(1);
            }
        }
    }
}

}  // namespace haptrain
