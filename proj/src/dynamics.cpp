#include "haptrain/dynamics.hpp"

#include "haptrain/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace haptrain {

void SimConfig::validate() const {
    if (!(forward_speed > 0.0)) throw ValidationError("forward_speed must be positive");
    if (!(dt > 0.0)) throw ValidationError("dt must be positive");
    if (!(spawn_offset >= 0.0)) throw ValidationError("spawn_offset must be non-negative");
    if (!(max_slew > 0.0)) throw ValidationError("max_slew must be positive");
    if (!(altitude_min < altitude_max)) throw ValidationError("altitude range must satisfy min < max");
}

DroneState spawn(const Trajectory& traj, const SimConfig& cfg) {
    DroneState s;
    s.origin_x = -cfg.spawn_offset;
    s.x = s.origin_x;
    s.z = traj.centerline(0.0);
    return s;
}

CollisionReport check_collision(const DroneState& state, const Trajectory& traj, double tube_radius) {
    if (!traj.is_tube()) throw NotApplicableError("ring courses have no walls");
    const double c = traj.centerline(state.x);
    const double dev = state.z - c;
    CollisionReport r;
    r.clamped_z = state.z;
    if (std::abs(dev) >= tube_radius) {
        r.colliding = true;
        r.clamped_z = dev > 0.0 ? c + tube_radius : c - tube_radius;
    }
    return r;
}

DroneState step(const DroneState& state, double commanded_z, const SimConfig& cfg, const Trajectory& traj) {
    if (!std::isfinite(commanded_z)) throw ValidationError("non-finite altitude command");
    if (!std::isfinite(state.z) || !std::isfinite(state.x)) throw ValidationError("non-finite drone state");

    DroneState next = state;
    next.tick = state.tick + 1;
    next.t = static_cast<double>(next.tick) * cfg.dt;
    next.x = state.origin_x + static_cast<double>(next.tick) * (cfg.forward_speed * cfg.dt);

    const double target = std::clamp(commanded_z, cfg.altitude_min, cfg.altitude_max);
    const double max_dz = cfg.max_slew * cfg.dt;
    next.z = state.z + std::clamp(target - state.z, -max_dz, max_dz);

    next.colliding = false;
    next.clamped = false;
    if (traj.is_tube() && next.x >= 0.0 && next.x <= traj.length()) {
        const auto report = check_collision(next, traj, traj.tube_radius());
        next.colliding = report.colliding;
        if (report.colliding && cfg.clamp_to_walls) {
            next.clamped = next.z != report.clamped_z;
            next.z = report.clamped_z;
        }
    }
    return next;
}

std::vector<RingCrossing> ring_crossings(std::span<const DroneState> trace, const RingCourse& course) {
    std::vector<RingCrossing> out;
    std::vector<std::string> missing;
    std::size_t j = 0;
    for (std::size_t i = 0; i < course.rings.size(); ++i) {
        const double rx = course.rings[i].x;
        while (j + 1 < trace.size() && trace[j + 1].x < rx) ++j;
        if (j + 1 >= trace.size() || trace[j].x > rx) {
            missing.push_back(std::to_string(i + 1));
            continue;
        }
        const auto& a = trace[j];
        const auto& b = trace[j + 1];
        const double w = b.x == a.x ? 0.0 : (rx - a.x) / (b.x - a.x);
        out.push_back({static_cast<int>(i), a.z + w * (b.z - a.z)});
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& m : missing) list += (list.empty() ? "" : ",") + m;
        throw MissingDataError("trace does not reach ring(s) " + list, missing);
    }
    return out;
}

}  // namespace haptrain
