#pragma once

#include "haptrain/inputmap.hpp"
#include "haptrain/rng.hpp"

#include <cstdint>
#include <deque>
#include <string>

namespace haptrain {

struct PilotParams {
    double gain = 1.0;           // fraction of the observed error corrected per command
    int delay_ticks = 0;         // reaction delay
    double lookahead = 0.05;     // metres ahead of the (delayed) position the pilot aims at
    double noise_sd = 0.0;       // stationary sd of the pilot's altitude drift [m]
    double noise_tau = 0.5;      // drift correlation time [s]
    double arrow_gain = 0.0;     // extra correction [m] while an arrow is shown
    std::uint64_t seed = 1;

    // Parses "gain=0.3,delay=10,noise=0.3,tau=0.8,lookahead=1,arrow=0.2,seed=7".
    static PilotParams parse(const std::string& spec);
    std::string to_string() const;
};

// Deterministic tracking agent standing in for a trainee: proportional
// correction toward the reference seen through a reaction delay, plus an
// Ornstein-Uhlenbeck drift. Produces elbow angles through the inverse of
// the calibration so the whole input path is exercised.
class ScriptedPilot final : public InputSource {
public:
    ScriptedPilot(PilotParams params, Calibration cal, double dt);

    PolledSample read(const SourceContext& ctx) override;
    std::string describe() const override { return "pilot(" + params_.to_string() + ")"; }

private:
    struct Seen {
        double x;
        double z;
    };

    PilotParams params_;
    Calibration cal_;
    double dt_;
    Rng rng_;
    double drift_ = 0.0;
    std::deque<Seen> history_;
};

// Holds one altitude for the whole session.
class ConstantAltitudeSource final : public InputSource {
public:
    ConstantAltitudeSource(double z, Calibration cal) : angle_(angle_for_altitude(cal, z)) {}

    PolledSample read(const SourceContext& ctx) override {
        return {InputSample{angle_, ctx.t, SourceKind::Scripted}, false};
    }
    std::string describe() const override { return "constant"; }

private:
    double angle_;
};

}  // namespace haptrain
