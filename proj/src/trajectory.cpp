#include "haptrain/trajectory.hpp"

#include "haptrain/error.hpp"
#include "haptrain/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

namespace haptrain {

namespace {

constexpr double kGridTol = 1e-12;

bool on_grid(double v, const std::array<double, 3>& grid) {
    return std::any_of(grid.begin(), grid.end(), [v](double g) { return std::abs(v - g) < kGridTol; });
}

ZeroTangentHermite<double> build_spline(const std::vector<double>& xs, const std::vector<double>& zs) {
    const Eigen::Map<const Eigen::VectorXd> xv(xs.data(), static_cast<Eigen::Index>(xs.size()));
    const Eigen::Map<const Eigen::VectorXd> zv(zs.data(), static_cast<Eigen::Index>(zs.size()));
    return ZeroTangentHermite<double>(xv, zv);
}

void check_knots(const std::vector<Knot>& knots, double length) {
    if (knots.size() < 2) throw ValidationError("spline tube needs at least two knots");
    if (knots.front().x != 0.0 || knots.back().x != length)
        throw ValidationError("spline knots must span [0, length]");
    for (std::size_t i = 1; i < knots.size(); ++i)
        if (!(knots[i].x > knots[i - 1].x)) throw ValidationError("spline knot x must be strictly increasing");
}

}  // namespace

std::string to_string(CourseKind kind) {
    switch (kind) {
        case CourseKind::SineTube: return "sine_tube";
        case CourseKind::SplineTube: return "spline_tube";
        case CourseKind::RingCourse: return "ring_course";
    }
    return "unknown";
}

CourseKind course_kind_from_string(const std::string& s) {
    if (s == "sine_tube") return CourseKind::SineTube;
    if (s == "spline_tube") return CourseKind::SplineTube;
    if (s == "ring_course") return CourseKind::RingCourse;
    throw ValidationError("unknown course kind '" + s + "'");
}

SineTubeSpec validate(const SineTubeSpec& spec) {
    if (!on_grid(spec.amplitude, kTrainingAmplitudes))
        throw ValidationError("training amplitude " + std::to_string(spec.amplitude) + " m is not in {0.5, 1, 1.5}");
    if (!on_grid(spec.wavelength, kTrainingWavelengths))
        throw ValidationError("training wavelength " + std::to_string(spec.wavelength) + " m is not in {8, 10, 12}");
    if (spec.length != kCourseLength) throw ValidationError("training tube length must be 76 m");
    if (spec.tube_radius != kTubeRadius) throw ValidationError("training tube radius must be 0.5 m");
    if (!(spec.midline_z > spec.amplitude)) throw ValidationError("training tube midline must exceed its amplitude");
    return spec;
}

Trajectory::Trajectory(SineTubeSpec spec) : spec_(validate(spec)), length_(spec.length) {}

Trajectory::Trajectory(SplineTubeSpec spec) : spec_(std::move(spec)) {
    const auto& s = std::get<SplineTubeSpec>(spec_);
    check_knots(s.knots, s.length);
    length_ = s.length;
    std::vector<double> xs, zs;
    for (const auto& k : s.knots) {
        xs.push_back(k.x);
        zs.push_back(k.z);
    }
    spline_ = build_spline(xs, zs);
}

Trajectory::Trajectory(RingCourse course) : spec_(std::move(course)) {
    const auto& c = std::get<RingCourse>(spec_);
    if (c.rings.empty()) throw ValidationError("ring course without rings");
    // The entrance at x = 0 holds the first ring's height so that the
    // approach is level; every ring centre is a zero-slope knot.
    std::vector<double> xs{0.0}, zs{c.rings.front().center_z};
    for (const auto& r : c.rings) {
        if (!(r.x > xs.back())) throw ValidationError("ring x positions must be strictly increasing and positive");
        xs.push_back(r.x);
        zs.push_back(r.center_z);
    }
    length_ = xs.back();
    spline_ = build_spline(xs, zs);
}

CourseKind Trajectory::kind() const {
    return static_cast<CourseKind>(spec_.index());
}

double Trajectory::tube_radius() const {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, RingCourse>)
                return 0.0;
            else
                return s.tube_radius;
        },
        spec_);
}

double Trajectory::centerline(double x) const {
    if (!(x >= 0.0 && x <= length_))
        throw RangeError("x = " + std::to_string(x) + " m is outside the course [0, " + std::to_string(length_) + "]");
    if (const auto* sine = std::get_if<SineTubeSpec>(&spec_))
        return sine->midline_z + sine->amplitude * std::sin(2.0 * std::numbers::pi * x / sine->wavelength);
    return spline_(x);
}

double Trajectory::slope(double x) const {
    if (!(x >= 0.0 && x <= length_)) throw RangeError("x outside the course");
    if (const auto* sine = std::get_if<SineTubeSpec>(&spec_)) {
        const double k = 2.0 * std::numbers::pi / sine->wavelength;
        return sine->amplitude * k * std::cos(k * x);
    }
    return spline_.derivative(x);
}

double Trajectory::centerline_clamped(double x) const {
    return centerline(std::clamp(x, 0.0, length_));
}

std::string Trajectory::coefficient_bytes() const {
    std::string out;
    auto append = [&out](const double* p, std::size_t n) {
        out.append(reinterpret_cast<const char*>(p), n * sizeof(double));
    };
    if (const auto* sine = std::get_if<SineTubeSpec>(&spec_)) {
        const double v[] = {sine->amplitude, sine->wavelength, sine->midline_z, sine->length, sine->tube_radius};
        append(v, 5);
        return out;
    }
    append(spline_.knots_x().data(), static_cast<std::size_t>(spline_.knots_x().size()));
    append(spline_.coefficients().data(), static_cast<std::size_t>(spline_.coefficients().size()));
    return out;
}

Trajectory gen_training_tube(const SineTubeSpec& spec) {
    return Trajectory(spec);
}

Trajectory gen_spline_tube(std::uint64_t seed, double knot_spacing) {
    if (!(knot_spacing > 0.0) || knot_spacing > kCourseLength)
        throw ValidationError("knot spacing must lie in (0, 76] m");
    const double intervals = kCourseLength / knot_spacing;
    const double rounded = std::round(intervals);
    if (std::abs(intervals - rounded) > 1e-9) throw ValidationError("knot spacing must divide the 76 m course length");
    const auto n_knots = static_cast<std::size_t>(rounded) + 1;

    Rng rng(seed);
    SplineTubeSpec spec;
    spec.seed = seed;
    spec.knots.resize(n_knots);
    for (std::size_t i = 0; i < n_knots; ++i) {
        spec.knots[i].x = i + 1 == n_knots ? kCourseLength : static_cast<double>(i) * knot_spacing;
        spec.knots[i].z = rng.uniform(kCourseZLow, kCourseZHigh);
    }
    const auto trough = rng.index(n_knots);
    auto peak = rng.index(n_knots - 1);
    if (peak >= trough) ++peak;
    spec.knots[trough].z = kCourseZLow;
    spec.knots[peak].z = kCourseZHigh;
    return Trajectory(std::move(spec));
}

Trajectory gen_ring_course(std::uint64_t seed) {
    Rng rng(seed);
    RingCourse course;
    course.seed = seed;
    course.rings.resize(kRingCount);
    for (int i = 0; i < kRingCount; ++i) {
        course.rings[i].x = kRingSpacing * (i + 1);
        course.rings[i].center_z = rng.uniform(kCourseZLow, kCourseZHigh);
    }
    return Trajectory(std::move(course));
}

std::array<std::array<int, 3>, 3> amplitude_sets() {
    return {{{1, 3, 9}, {2, 4, 7}, {5, 6, 8}}};
}

std::array<std::array<int, 3>, 3> wavelength_sets() {
    return {{{2, 5, 9}, {3, 4, 6}, {1, 7, 8}}};
}

std::vector<SineTubeSpec> training_schedule() {
    std::vector<SineTubeSpec> out(9);
    const auto amp = amplitude_sets();
    const auto wav = wavelength_sets();
    for (std::size_t a = 0; a < 3; ++a)
        for (int session : amp[a]) out[session - 1].amplitude = kTrainingAmplitudes[a];
    for (std::size_t w = 0; w < 3; ++w)
        for (int session : wav[w]) out[session - 1].wavelength = kTrainingWavelengths[w];
    return out;
}

nlohmann::json to_json(const Trajectory& traj) {
    nlohmann::json doc;
    doc["version"] = kTrajectoryFormatVersion;
    doc["kind"] = to_string(traj.kind());
    std::visit(
        [&doc](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SineTubeSpec>) {
                doc["spec"] = {{"amplitude", s.amplitude},
                               {"wavelength", s.wavelength},
                               {"midline_z", s.midline_z},
                               {"length", s.length},
                               {"tube_radius", s.tube_radius}};
            } else if constexpr (std::is_same_v<T, SplineTubeSpec>) {
                doc["spec"] = {{"length", s.length}, {"tube_radius", s.tube_radius}};
                auto& knots = doc["knots"] = nlohmann::json::array();
                for (const auto& k : s.knots) knots.push_back({k.x, k.z});
                doc["seed"] = s.seed;
            } else {
                doc["spec"] = {{"ring_diameter", s.ring_diameter}};
                auto& rings = doc["rings"] = nlohmann::json::array();
                for (const auto& r : s.rings) rings.push_back({r.x, r.center_z});
                doc["seed"] = s.seed;
            }
        },
        traj.spec());
    return doc;
}

Trajectory trajectory_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("version").get<int>() != kTrajectoryFormatVersion)
            throw ValidationError("unsupported trajectory document version");
        const auto& spec = doc.at("spec");
        switch (course_kind_from_string(doc.at("kind").get<std::string>())) {
            case CourseKind::SineTube: {
                SineTubeSpec s;
                s.amplitude = spec.at("amplitude");
                s.wavelength = spec.at("wavelength");
                s.midline_z = spec.at("midline_z");
                s.length = spec.at("length");
                s.tube_radius = spec.at("tube_radius");
                return Trajectory(s);
            }
            case CourseKind::SplineTube: {
                SplineTubeSpec s;
                s.length = spec.at("length");
                s.tube_radius = spec.at("tube_radius");
                s.seed = doc.at("seed");
                for (const auto& k : doc.at("knots")) s.knots.push_back({k.at(0), k.at(1)});
                return Trajectory(std::move(s));
            }
            case CourseKind::RingCourse: {
                RingCourse c;
                c.ring_diameter = spec.at("ring_diameter");
                c.seed = doc.at("seed");
                for (const auto& r : doc.at("rings")) c.rings.push_back({r.at(0), r.at(1)});
                return Trajectory(std::move(c));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed trajectory document: ") + e.what());
    }
    throw ValidationError("malformed trajectory document");
}

}  // namespace haptrain
