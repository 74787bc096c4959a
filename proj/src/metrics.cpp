#include "haptrain/metrics.hpp"

#include "haptrain/error.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace haptrain {

std::string to_string(Task t) {
    return t == Task::PathFollowing ? "path_following" : "waypoint";
}

Task task_from_string(const std::string& s) {
    if (s == "path_following") return Task::PathFollowing;
    if (s == "waypoint") return Task::Waypoint;
    throw ValidationError("unknown task '" + s + "'");
}

double pf_error(const Eigen::Ref<const Eigen::VectorXd>& xs, const Eigen::Ref<const Eigen::VectorXd>& zs,
                const Trajectory& traj) {
    if (xs.size() != zs.size()) throw ValidationError("x and z columns differ in length");
    constexpr double tol = 1e-9;
    const double length = traj.length();
    if (xs.size() < 2 || xs.minCoeff() > tol || xs.maxCoeff() < length - tol)
        throw MissingDataError("trace does not cover the full course", {"partial coverage"});

    double area = 0.0;
    double prev_x = 0.0, prev_e = 0.0, first_x = 0.0;
    bool have_prev = false;
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
        const double x = xs(i);
        if (x < -tol || x > length + tol) continue;
        const double xc = std::clamp(x, 0.0, length);
        const double e = std::abs(zs(i) - traj.centerline(xc));
        if (have_prev) {
            area += 0.5 * (e + prev_e) * (xc - prev_x);
        } else {
            first_x = xc;
            have_prev = true;
        }
        prev_x = xc;
        prev_e = e;
    }
    const double span = prev_x - first_x;
    if (!(span > 0.0)) throw MissingDataError("trace has fewer than two samples inside the course", {"coverage"});
    return area / span;
}

double pf_error(std::span<const TraceRow> trace, const Trajectory& traj) {
    Eigen::VectorXd xs(static_cast<Eigen::Index>(trace.size())), zs(xs.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        xs(static_cast<Eigen::Index>(i)) = trace[i].x;
        zs(static_cast<Eigen::Index>(i)) = trace[i].z;
    }
    return pf_error(xs, zs, traj);
}

double pf_error(std::span<const DroneState> trace, const Trajectory& traj) {
    Eigen::VectorXd xs(static_cast<Eigen::Index>(trace.size())), zs(xs.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        xs(static_cast<Eigen::Index>(i)) = trace[i].x;
        zs(static_cast<Eigen::Index>(i)) = trace[i].z;
    }
    return pf_error(xs, zs, traj);
}

double wp_error(std::span<const RingCrossing> crossings, const RingCourse& course) {
    std::vector<bool> seen(course.rings.size(), false);
    double sum = 0.0;
    for (const auto& c : crossings) {
        if (c.ring_index < 0 || static_cast<std::size_t>(c.ring_index) >= course.rings.size())
            throw ValidationError("crossing refers to a ring outside the course");
        if (seen[c.ring_index]) throw ValidationError("ring crossed twice");
        seen[c.ring_index] = true;
        sum += std::abs(c.z - course.rings[c.ring_index].center_z);
    }
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < seen.size(); ++i)
        if (!seen[i]) missing.push_back(std::to_string(i + 1));
    if (!missing.empty()) throw MissingDataError("missing ring crossings", missing);
    return sum / static_cast<double>(course.rings.size());
}

int count_collisions(std::span<const TraceRow> trace) {
    int n = 0;
    bool prev = false;
    for (const auto& r : trace) {
        if (r.colliding && !prev) ++n;
        prev = r.colliding;
    }
    return n;
}

std::array<double, 3> set_mean(std::span<const SessionError> training, Grouping grouping) {
    std::array<std::optional<double>, 9> by_session;
    for (const auto& e : training) {
        if (e.phase != Phase::Training) continue;
        if (e.session_index < 1 || e.session_index > 9) throw ValidationError("training session index outside 1..9");
        by_session[e.session_index - 1] = e.error;
    }
    std::vector<std::string> missing;
    for (int i = 0; i < 9; ++i)
        if (!by_session[i]) missing.push_back(std::to_string(i + 1));
    if (!missing.empty()) throw MissingDataError("training sessions missing", missing);

    const auto sets = grouping == Grouping::Amplitude ? amplitude_sets() : wavelength_sets();
    std::array<double, 3> means{};
    for (std::size_t g = 0; g < 3; ++g) {
        double s = 0.0;
        for (int session : sets[g]) s += *by_session[session - 1];
        means[g] = s / 3.0;
    }
    return means;
}

double percent_change(double baseline_mean, double eval_mean) {
    if (!(baseline_mean > 0.0)) throw DegenerateInputError("percent change undefined for a zero baseline");
    return 100.0 * (baseline_mean - eval_mean) / baseline_mean;
}

void write_metrics_csv(std::ostream& os, std::span<const MetricRow> rows) {
    os << kMetricsCsvHeader << '\n';
    for (const auto& r : rows) {
        std::ostringstream err;
        err << std::setprecision(17) << r.error;
        os << r.subject << ',' << to_string(r.group) << ',' << to_string(r.task) << ',' << to_string(r.phase) << ','
           << r.session << ',' << err.str() << ',' << r.collisions << '\n';
    }
}

std::vector<MetricRow> read_metrics_csv(std::istream& is) {
    std::vector<MetricRow> rows;
    std::string line;
    if (!std::getline(is, line) || line != kMetricsCsvHeader)
        throw ParseError("metrics CSV must start with the header line", line);
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (f.size() != 7) throw ParseError("metrics CSV line " + std::to_string(lineno) + " needs 7 fields", line);
        MetricRow r;
        r.subject = f[0];
        r.group = feedback_mode_from_string(f[1]);
        r.task = task_from_string(f[2]);
        r.phase = phase_from_string(f[3]);
        try {
            r.session = std::stoi(f[4]);
            r.error = std::stod(f[5]);
            r.collisions = std::stoi(f[6]);
        } catch (const std::exception&) {
            throw ParseError("bad number on metrics CSV line " + std::to_string(lineno), line);
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace haptrain
