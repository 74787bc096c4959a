#include "haptrain/pilot.hpp"

#include "haptrain/error.hpp"

#include <cmath>
#include <sstream>

namespace haptrain {

PilotParams PilotParams::parse(const std::string& spec) {
    PilotParams p;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("pilot option '" + item + "' is not key=value");
        const auto key = item.substr(0, eq);
        const auto val = item.substr(eq + 1);
        try {
            if (key == "gain")
                p.gain = std::stod(val);
            else if (key == "delay")
                p.delay_ticks = std::stoi(val);
            else if (key == "lookahead")
                p.lookahead = std::stod(val);
            else if (key == "noise")
                p.noise_sd = std::stod(val);
            else if (key == "tau")
                p.noise_tau = std::stod(val);
            else if (key == "arrow")
                p.arrow_gain = std::stod(val);
            else if (key == "seed")
                p.seed = std::stoull(val);
            else
                throw ValidationError("unknown pilot option '" + key + "'");
        } catch (const std::logic_error&) {
            throw ValidationError("bad value for pilot option '" + key + "'");
        }
    }
    if (p.delay_ticks < 0 || !(p.noise_tau > 0.0) || !(p.noise_sd >= 0.0))
        throw ValidationError("pilot delay, tau and noise must be non-negative (tau > 0)");
    return p;
}

std::string PilotParams::to_string() const {
    std::ostringstream os;
    os.precision(17);
    os << "gain=" << gain << ",delay=" << delay_ticks << ",lookahead=" << lookahead << ",noise=" << noise_sd
       << ",tau=" << noise_tau << ",arrow=" << arrow_gain << ",seed=" << seed;
    return os.str();
}

ScriptedPilot::ScriptedPilot(PilotParams params, Calibration cal, double dt)
    : params_(params), cal_(cal), dt_(dt), rng_(params.seed) {}

PolledSample ScriptedPilot::read(const SourceContext& ctx) {
    if (!ctx.state || !ctx.course) throw NoSignalError("scripted pilot needs the drone state and course");
    history_.push_back({ctx.state->x, ctx.state->z});
    while (history_.size() > static_cast<std::size_t>(params_.delay_ticks) + 1) history_.pop_front();
    const Seen seen = history_.front();

    if (params_.noise_sd > 0.0) {
        const double a = std::exp(-dt_ / params_.noise_tau);
        drift_ = a * drift_ + params_.noise_sd * std::sqrt(1.0 - a * a) * rng_.normal();
    }
    const double target = ctx.course->centerline_clamped(seen.x + params_.lookahead);
    double z = seen.z + params_.gain * (target - seen.z) + drift_;
    z += params_.arrow_gain * static_cast<double>(ctx.arrow);
    return {InputSample{angle_for_altitude(cal_, z), ctx.t, SourceKind::Scripted}, false};
}

}  // namespace haptrain
