#pragma once

#include "haptrain/hermite.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

namespace haptrain {

inline constexpr double kCourseLength = 76.0;       // tube horizontal length [m]
inline constexpr double kTubeRadius = 0.5;          // 1 m diameter tubes
inline constexpr double kCourseZLow = 9.0;          // trough of random courses
inline constexpr double kCourseZHigh = 11.0;        // peak of random courses
inline constexpr double kRingDiameter = 1.0;
inline constexpr double kRingSpacing = 4.0;
inline constexpr int kRingCount = 20;
inline constexpr double kDefaultKnotSpacing = 4.0;
inline constexpr double kTrainingMidline = 10.0;

inline constexpr std::array<double, 3> kTrainingAmplitudes{0.5, 1.0, 1.5};
inline constexpr std::array<double, 3> kTrainingWavelengths{8.0, 10.0, 12.0};

enum class CourseKind { SineTube, SplineTube, RingCourse };

std::string to_string(CourseKind kind);
CourseKind course_kind_from_string(const std::string& s);

struct SineTubeSpec {
    double amplitude = 0.5;   // alpha [m]
    double wavelength = 8.0;  // lambda [m]
    double midline_z = kTrainingMidline;
    double length = kCourseLength;
    double tube_radius = kTubeRadius;

    friend bool operator==(const SineTubeSpec&, const SineTubeSpec&) = default;
};

struct Knot {
    double x = 0.0;
    double z = 0.0;

    friend bool operator==(const Knot&, const Knot&) = default;
};

struct SplineTubeSpec {
    std::vector<Knot> knots;
    double length = kCourseLength;
    double tube_radius = kTubeRadius;
    std::uint64_t seed = 0;

    friend bool operator==(const SplineTubeSpec&, const SplineTubeSpec&) = default;
};

struct Ring {
    double x = 0.0;
    double center_z = 0.0;

    friend bool operator==(const Ring&, const Ring&) = default;
};

struct RingCourse {
    std::vector<Ring> rings;
    double ring_diameter = kRingDiameter;
    std::uint64_t seed = 0;

    friend bool operator==(const RingCourse&, const RingCourse&) = default;
};

// Reference course: the centreline z(x) for x in [0, length()] plus the
// geometry it was generated from. Immutable once built.
class Trajectory {
public:
    using Spec = std::variant<SineTubeSpec, SplineTubeSpec, RingCourse>;

    explicit Trajectory(SineTubeSpec spec);
    explicit Trajectory(SplineTubeSpec spec);
    explicit Trajectory(RingCourse course);

    CourseKind kind() const;
    const Spec& spec() const { return spec_; }
    bool is_tube() const { return kind() != CourseKind::RingCourse; }

    double length() const { return length_; }
    // Wall half-height for tubes; zero for ring courses.
    double tube_radius() const;

    // Throws RangeError when x is outside [0, length()].
    double centerline(double x) const;
    double slope(double x) const;

    // Same as centerline() with x clamped into the course.
    double centerline_clamped(double x) const;

    // Hermite interpolant for spline kinds (empty for sine tubes).
    const ZeroTangentHermite<double>& spline() const { return spline_; }

    // Raw bytes of the evaluation coefficients; used for determinism checks.
    std::string coefficient_bytes() const;

    friend bool operator==(const Trajectory& a, const Trajectory& b) { return a.spec_ == b.spec_; }

private:
    Spec spec_;
    double length_ = 0.0;
    ZeroTangentHermite<double> spline_;
};

SineTubeSpec validate(const SineTubeSpec& spec);

// Sine training tube; rejects alpha/lambda outside the training grid.
Trajectory gen_training_tube(const SineTubeSpec& spec);

// Random spline tube over [0, 76]. Knots every knot_spacing metres with z
// drawn from U[9, 11]; two distinct knots are forced to 9 and 11.
Trajectory gen_spline_tube(std::uint64_t seed, double knot_spacing = kDefaultKnotSpacing);

// 20 rings at x = 4, 8, ..., 80 with centres drawn from U[9, 11].
Trajectory gen_ring_course(std::uint64_t seed);

// The nine training tubes in session order (session 1 first).
std::vector<SineTubeSpec> training_schedule();

// Session numbers (1-based) sharing each amplitude / wavelength.
std::array<std::array<int, 3>, 3> amplitude_sets();   // indexed like kTrainingAmplitudes
std::array<std::array<int, 3>, 3> wavelength_sets();  // indexed like kTrainingWavelengths

inline double eval_centerline(const Trajectory& traj, double x) { return traj.centerline(x); }

// Versioned JSON document {"version", "kind", "spec", "knots"/"rings", "seed"}.
nlohmann::json to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& doc);

inline constexpr int kTrajectoryFormatVersion = 1;

}  // namespace haptrain
