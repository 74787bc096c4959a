#pragma once

#include "haptrain/clutch.hpp"
#include "haptrain/dynamics.hpp"
#include "haptrain/inputmap.hpp"

#include <string>

namespace haptrain {

// Everything a study run depends on. Persisted as "key = value" lines,
// '#' starts a comment; unknown keys are rejected.
struct StudyConfig {
    SimConfig sim;
    Calibration calibration;  // default until a subject is calibrated
    ClutchModel clutch;

    double threshold = 0.4;
    double release_band = 0.05;
    double voltage = kOperatingVoltage;
    double compliance = kDefaultCompliance;
    bool haptic_restraint = true;  // block motion in simulation when the clutch engages

    double knot_spacing = 4.0;
    double telemetry_hz = 30.0;
    double overrun_warn_fraction = 0.01;

    void validate() const;
};

StudyConfig parse_config(const std::string& text);
StudyConfig load_config(const std::string& path);

// Canonical text: every key, fixed order, round-trippable numbers.
std::string to_text(const StudyConfig& cfg);

// Hex FNV-1a of the canonical text.
std::string config_hash(const StudyConfig& cfg);

}  // namespace haptrain
