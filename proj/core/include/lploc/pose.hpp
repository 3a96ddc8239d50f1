#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lploc {

constexpr double kPi = 3.141592653589793238462643383279502884;

// Normalizes an angle to (-pi, pi]; -pi maps to +pi.
inline double wrap_angle(double theta) {
    if (!std::isfinite(theta)) {
        throw std::invalid_argument("wrap_angle: non-finite angle");
    }
    double w = std::remainder(theta, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

// SE(2) pose: position in metres, yaw in radians, yaw kept in (-pi, pi].
struct Pose2 {
    double x = 0.0;
    double y = 0.0;
    double yaw = 0.0;

    Pose2() = default;
    Pose2(double x_, double y_, double yaw_) : x(x_), y(y_), yaw(wrap_angle(yaw_)) {}
};

// 3-DoF correction candidate relative to a prior pose.
struct PoseOffset {
    double dx = 0.0;
    double dy = 0.0;
    double dyaw = 0.0;

    PoseOffset() = default;
    PoseOffset(double dx_, double dy_, double dyaw_)
        : dx(dx_), dy(dy_), dyaw(wrap_angle(dyaw_)) {}
};

// a then b: translation of b rotated into a's frame.
inline Pose2 compose(const Pose2& a, const Pose2& b) {
    const double c = std::cos(a.yaw);
    const double s = std::sin(a.yaw);
    return Pose2(a.x + b.x * c - b.y * s, a.y + b.x * s + b.y * c, a.yaw + b.yaw);
}

inline Pose2 inverse(const Pose2& p) {
    const double c = std::cos(p.yaw);
    const double s = std::sin(p.yaw);
    return Pose2(-p.x * c - p.y * s, p.x * s - p.y * c, -p.yaw);
}

// Pose of b expressed in a's frame: compose(a, between(a, b)) == b.
inline Pose2 between(const Pose2& a, const Pose2& b) {
    return compose(inverse(a), b);
}

// Applies the offset in the pose's own frame.
inline Pose2 compose_offset(const Pose2& p, const PoseOffset& off) {
    return compose(p, Pose2(off.dx, off.dy, off.dyaw));
}

// Rotates pt by p.yaw, then translates by (p.x, p.y).
inline Vec2 apply(const Pose2& p, const Vec2& pt) {
    const double c = std::cos(p.yaw);
    const double s = std::sin(p.yaw);
    return Vec2{p.x + pt.x * c - pt.y * s, p.y + pt.x * s + pt.y * c};
}

struct TimedPose {
    Pose2 pose;
    double t = 0.0;
};

// Waypoint sequence with strictly increasing timestamps.
struct Trajectory {
    std::vector<TimedPose> waypoints;

    Trajectory() = default;
    explicit Trajectory(std::vector<TimedPose> wps) : waypoints(std::move(wps)) {
        validate();
    }

    void validate() const {
        if (waypoints.empty()) {
            throw std::invalid_argument("Trajectory: needs at least one waypoint");
        }
        for (std::size_t i = 1; i < waypoints.size(); ++i) {
            if (!(waypoints[i].t > waypoints[i - 1].t)) {
                throw std::invalid_argument("Trajectory: timestamps must strictly increase");
            }
        }
    }

    std::size_t size() const { return waypoints.size(); }
    const TimedPose& front() const { return waypoints.front(); }
    const TimedPose& back() const { return waypoints.back(); }
};

// Executed trajectory under pose error: the single rigid motion mapping the
// believed initial pose onto the true one (true = believed (+) pose_error)
// is applied to every waypoint. Timestamps unchanged.
inline Trajectory rigid_align_trajectory(const Trajectory& planned,
                                         const PoseOffset& pose_error) {
    planned.validate();
    const Pose2 believed = planned.front().pose;
    const Pose2 truth = compose_offset(believed, pose_error);
    const Pose2 motion = compose(truth, inverse(believed));

    Trajectory out;
    out.waypoints.reserve(planned.size());
    for (const auto& wp : planned.waypoints) {
        out.waypoints.push_back({compose(motion, wp.pose), wp.t});
    }
    return out;
}

}  // namespace lploc
