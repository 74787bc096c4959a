#pragma once

#include "haptrain/trajectory.hpp"

#include <cstdint>
#include <limits>
#include <span>
#include <utility>
#include <vector>

namespace haptrain {

struct SimConfig {
    double forward_speed = 5.0;  // v [m/s]
    double dt = 0.01;            // 100 Hz
    double spawn_offset = 4.0;   // drone starts this far before the entrance
    double max_slew = 8.0;       // vertical speed limit toward the command [m/s]
    double altitude_min = 7.0;
    double altitude_max = 13.0;
    // Clamp the drone onto the tube wall on contact. Disabling it turns the
    // walls into pure bookkeeping (contact is still flagged).
    bool clamp_to_walls = true;

    void validate() const;
};

struct DroneState {
    double x = 0.0;
    double z = 0.0;
    double t = 0.0;
    std::uint64_t tick = 0;
    double origin_x = 0.0;  // x at tick 0; x = origin_x + tick * v * dt
    bool colliding = false;
    bool clamped = false;

    friend bool operator==(const DroneState&, const DroneState&) = default;
};

// Drone placed spawn_offset before the entrance, level with the entrance.
DroneState spawn(const Trajectory& traj, const SimConfig& cfg);

struct CollisionReport {
    bool colliding = false;
    double clamped_z = 0.0;
};

// Point drone against the tube walls at centreline(x) +/- tube_radius.
// Contact is a closed boundary: |z - c| >= radius counts as colliding.
// Throws NotApplicableError for ring courses, RangeError outside the course.
CollisionReport check_collision(const DroneState& state, const Trajectory& traj, double tube_radius);

// One fixed tick: constant forward speed, slew-limited altitude tracking,
// then wall clamp when inside a tube. Non-finite commands throw
// ValidationError and leave the caller's state untouched.
DroneState step(const DroneState& state, double commanded_z, const SimConfig& cfg, const Trajectory& traj);

struct RingCrossing {
    int ring_index = 0;  // 0-based
    double z = 0.0;
};

// Altitude at each ring x, linearly interpolated between the bracketing
// samples of the trace. Throws MissingDataError naming uncovered rings
// (1-based) when the trace stops short.
std::vector<RingCrossing> ring_crossings(std::span<const DroneState> trace, const RingCourse& course);

}  // namespace haptrain
