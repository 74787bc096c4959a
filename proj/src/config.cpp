#include "haptrain/config.hpp"

#include "haptrain/error.hpp"
#include "haptrain/rng.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

namespace haptrain {

namespace {

struct Field {
    std::function<std::string(const StudyConfig&)> get;
    std::function<void(StudyConfig&, const std::string&)> set;
};

// shortest text that reads back to the same double
std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double to_double(const std::string& key, const std::string& v) {
    std::size_t used = 0;
    double d = 0.0;
    try {
        d = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != v.size()) throw ValidationError("config key '" + key + "' expects a number, got '" + v + "'");
    return d;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ValidationError("config key '" + key + "' expects true/false, got '" + v + "'");
}

#define HT_NUM(key, member)                                                                        \
    {                                                                                              \
        key, Field {                                                                               \
            [](const StudyConfig& c) { return num(c.member); },                                    \
                [](StudyConfig& c, const std::string& v) { c.member = to_double(key, v); }         \
        }                                                                                          \
    }
#define HT_BOOL(key, member)                                                                       \
    {                                                                                              \
        key, Field {                                                                               \
            [](const StudyConfig& c) { return std::string(c.member ? "true" : "false"); },         \
                [](StudyConfig& c, const std::string& v) { c.member = to_bool(key, v); }           \
        }                                                                                          \
    }

const std::vector<std::pair<std::string, Field>>& fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        HT_NUM("forward_speed", sim.forward_speed),
        HT_NUM("dt", sim.dt),
        HT_NUM("spawn_offset", sim.spawn_offset),
        HT_NUM("max_slew", sim.max_slew),
        HT_NUM("altitude_min", sim.altitude_min),
        HT_NUM("altitude_max", sim.altitude_max),
        HT_BOOL("clamp_to_walls", sim.clamp_to_walls),
        HT_NUM("angle_min", calibration.angle_min),
        HT_NUM("angle_max", calibration.angle_max),
        HT_NUM("calibration_alt_min", calibration.alt_min),
        HT_NUM("calibration_alt_max", calibration.alt_max),
        {"polarity", Field{[](const StudyConfig& c) { return to_string(c.calibration.polarity); },
                           [](StudyConfig& c, const std::string& v) { c.calibration.polarity = polarity_from_string(v); }}},
        HT_NUM("threshold", threshold),
        HT_NUM("release_band", release_band),
        HT_NUM("voltage", voltage),
        HT_NUM("compliance", compliance),
        HT_BOOL("haptic_restraint", haptic_restraint),
        HT_NUM("force_per_volt", clutch.force_per_volt),
        HT_NUM("disengage_time", clutch.disengage_time),
        {"force_law", Field{[](const StudyConfig& c) { return to_string(c.clutch.law); },
                            [](StudyConfig& c, const std::string& v) { c.clutch.law = force_law_from_string(v); }}},
        HT_NUM("knot_spacing", knot_spacing),
        HT_NUM("telemetry_hz", telemetry_hz),
        HT_NUM("overrun_warn_fraction", overrun_warn_fraction),
    };
    return table;
}

#undef HT_NUM
#undef HT_BOOL

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

void StudyConfig::validate() const {
    sim.validate();
    clutch.validate();
    calibrate(calibration.angle_min, calibration.angle_max, calibration.alt_min, calibration.alt_max,
              calibration.polarity);
    if (!(threshold > 0.0)) throw ValidationError("threshold must be positive");
    if (!(release_band >= 0.0 && release_band < threshold))
        throw ValidationError("release_band must satisfy 0 <= release_band < threshold");
    if (!(voltage > 0.0 && voltage <= kMaxClutchVoltage)) throw ValidationError("voltage must lie in (0, 400] V");
    if (!(compliance >= 0.0)) throw ValidationError("compliance must be non-negative");
    if (!(telemetry_hz > 0.0 && telemetry_hz <= 1.0 / sim.dt))
        throw ValidationError("telemetry_hz must be positive and not exceed the tick rate");
    if (!(overrun_warn_fraction >= 0.0)) throw ValidationError("overrun_warn_fraction must be non-negative");
}

StudyConfig parse_config(const std::string& text) {
    StudyConfig cfg;
    std::map<std::string, const Field*> index;
    for (const auto& [k, f] : fields()) index[k] = &f;

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ParseError("config line " + std::to_string(lineno) + ": expected 'key = value'", line);
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        const auto it = index.find(key);
        if (it == index.end()) throw ValidationError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        it->second->set(cfg, value);
    }
    cfg.validate();
    return cfg;
}

StudyConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_text(const StudyConfig& cfg) {
    std::ostringstream os;
    for (const auto& [k, f] : fields()) os << k << " = " << f.get(cfg) << '\n';
    return os.str();
}

std::string config_hash(const StudyConfig& cfg) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(to_text(cfg));
    return os.str();
}

}  // namespace haptrain
