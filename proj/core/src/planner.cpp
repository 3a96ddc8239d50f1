#include "lploc/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace lploc {

namespace {

constexpr double kTimeEps = 1e-9;

struct Corners {
    Vec2 p[4];
};

Corners box_corners(const Pose2& pose, double length, double width) {
    const double hl = 0.5 * length;
    const double hw = 0.5 * width;
    Corners c;
    c.p[0] = apply(pose, {hl, hw});
    c.p[1] = apply(pose, {hl, -hw});
    c.p[2] = apply(pose, {-hl, -hw});
    c.p[3] = apply(pose, {-hl, hw});
    return c;
}

bool separated_on_axis(const Corners& a, const Corners& b, double ax, double ay) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (int i = 0; i < 4; ++i) {
        const double pa = a.p[i].x * ax + a.p[i].y * ay;
        const double pb = b.p[i].x * ax + b.p[i].y * ay;
        amin = std::min(amin, pa);
        amax = std::max(amax, pa);
        bmin = std::min(bmin, pb);
        bmax = std::max(bmax, pb);
    }
    return amax < bmin || bmax < amin;
}

// speed/heading profile sampled from waypoint geometry
struct MotionProfile {
    std::vector<double> speed;    // per segment
    std::vector<double> lat_acc;  // per segment
    std::vector<double> accel;    // per segment pair
};

MotionProfile motion_profile(const Trajectory& tau) {
    MotionProfile mp;
    const auto& w = tau.waypoints;
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
        const double dt = w[i + 1].t - w[i].t;
        const double dx = w[i + 1].pose.x - w[i].pose.x;
        const double dy = w[i + 1].pose.y - w[i].pose.y;
        const double v = std::sqrt(dx * dx + dy * dy) / dt;
        mp.speed.push_back(v);
        const double dth = wrap_angle(w[i + 1].pose.yaw - w[i].pose.yaw);
        // v^2 * kappa with kappa = dtheta/ds reduces to v * dtheta / dt
        mp.lat_acc.push_back(std::abs(v * dth / dt));
    }
    for (std::size_t i = 0; i + 1 < mp.speed.size(); ++i) {
        const double dt = w[i + 1].t - w[i].t;
        mp.accel.push_back((mp.speed[i + 1] - mp.speed[i]) / dt);
    }
    return mp;
}

double candidate_curvature(const Trajectory& tau) {
    const auto& w = tau.waypoints;
    if (w.size() < 2) return 0.0;
    const double dx = w[1].pose.x - w[0].pose.x;
    const double dy = w[1].pose.y - w[0].pose.y;
    const double ds = std::sqrt(dx * dx + dy * dy);
    if (ds < 1e-12) return 0.0;
    return wrap_angle(w[1].pose.yaw - w[0].pose.yaw) / ds;
}

void check_shared_horizon(const Trajectory& tau, const Trajectory& other) {
    if (tau.size() != other.size()) {
        throw std::invalid_argument("cost: trajectories do not share the horizon");
    }
    for (std::size_t i = 0; i < tau.size(); ++i) {
        if (std::abs(tau.waypoints[i].t - other.waypoints[i].t) > kTimeEps) {
            throw std::invalid_argument("cost: timestamp mismatch");
        }
    }
}

}  // namespace

double max_lateral_acceleration(const Trajectory& traj) {
    const MotionProfile mp = motion_profile(traj);
    double m = 0.0;
    for (double v : mp.lat_acc) m = std::max(m, v);
    return m;
}

double max_jerk(const Trajectory& traj) {
    const MotionProfile mp = motion_profile(traj);
    double m = 0.0;
    for (std::size_t i = 0; i + 1 < mp.accel.size(); ++i) {
        const double dt = traj.waypoints[i + 1].t - traj.waypoints[i].t;
        m = std::max(m, std::abs((mp.accel[i + 1] - mp.accel[i]) / dt));
    }
    return m;
}

void PlannerConfig::validate() const {
    if (n_candidates < 1 || !(horizon > 0.0) || !(dt > 0.0) || !(speed > 0.0)) {
        throw std::invalid_argument("PlannerConfig: invalid kinematics");
    }
    if (w_collision < 0 || w_lat_acc < 0 || w_jerk < 0 || w_progress < 0 ||
        w_route < 0) {
        throw std::invalid_argument("PlannerConfig: negative weight");
    }
    const double others = w_lat_acc + w_jerk + w_progress + w_route;
    if (w_collision < 10.0 * others) {
        throw std::invalid_argument("PlannerConfig: w_collision must dominate (>= 10x)");
    }
}

bool obb_overlap(const Pose2& a, double len_a, double wid_a, const Pose2& b,
                 double len_b, double wid_b) {
    const Corners ca = box_corners(a, len_a, wid_a);
    const Corners cb = box_corners(b, len_b, wid_b);
    const double axes[4][2] = {
        {std::cos(a.yaw), std::sin(a.yaw)},
        {-std::sin(a.yaw), std::cos(a.yaw)},
        {std::cos(b.yaw), std::sin(b.yaw)},
        {-std::sin(b.yaw), std::cos(b.yaw)},
    };
    for (const auto& ax : axes) {
        if (separated_on_axis(ca, cb, ax[0], ax[1])) return false;
    }
    return true;
}

RouteProjection project_to_route(const std::vector<Vec2>& route, const Vec2& pt) {
    if (route.size() < 2) {
        throw std::invalid_argument("project_to_route: route needs >= 2 points");
    }
    RouteProjection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    double s_acc = 0.0;
    for (std::size_t i = 0; i + 1 < route.size(); ++i) {
        const double ex = route[i + 1].x - route[i].x;
        const double ey = route[i + 1].y - route[i].y;
        const double len2 = ex * ex + ey * ey;
        const double len = std::sqrt(len2);
        double t = 0.0;
        if (len2 > 0.0) {
            t = ((pt.x - route[i].x) * ex + (pt.y - route[i].y) * ey) / len2;
            t = std::clamp(t, 0.0, 1.0);
        }
        const double px = route[i].x + t * ex;
        const double py = route[i].y + t * ey;
        const double d2 = (pt.x - px) * (pt.x - px) + (pt.y - py) * (pt.y - py);
        if (d2 < best_d2) {
            best_d2 = d2;
            best.arc_length = s_acc + t * len;
            best.lateral = std::sqrt(d2);
        }
        s_acc += len;
    }
    return best;
}

Pose2 interpolate_pose(const Trajectory& traj, double t) {
    const auto& w = traj.waypoints;
    if (t <= w.front().t) return w.front().pose;
    if (t >= w.back().t) return w.back().pose;
    std::size_t i = 0;
    while (i + 1 < w.size() && w[i + 1].t < t) ++i;
    const double a = (t - w[i].t) / (w[i + 1].t - w[i].t);
    const Pose2& p0 = w[i].pose;
    const Pose2& p1 = w[i + 1].pose;
    return Pose2(p0.x + a * (p1.x - p0.x), p0.y + a * (p1.y - p0.y),
                 p0.yaw + a * wrap_angle(p1.yaw - p0.yaw));
}

JointForecast joint_sample(const ActorSet& actors, int sample_idx) {
    if (sample_idx < 0 || sample_idx >= actors.sample_count) {
        throw std::invalid_argument("joint_sample: sample index out of range");
    }
    JointForecast jf;
    jf.paths.reserve(actors.actors.size());
    jf.boxes.reserve(actors.actors.size());
    for (const auto& a : actors.actors) {
        jf.paths.push_back(&a.forecasts[sample_idx]);
        jf.boxes.push_back(a.box);
    }
    return jf;
}

std::vector<Trajectory> sample_trajectories(const Pose2& start,
                                            const std::vector<Vec2>& route,
                                            const PlannerConfig& cfg) {
    (void)route;  // candidates are route-agnostic; the cost handles routing
    cfg.validate();
    const int n = cfg.n_candidates;
    std::vector<Trajectory> out;
    out.reserve(n);
    const int steps = static_cast<int>(std::round(cfg.horizon / cfg.dt));
    for (int i = 0; i < n; ++i) {
        const double kappa =
            n == 1 ? 0.0
                   : -cfg.curvature_range + 2.0 * cfg.curvature_range * i / (n - 1);
        std::vector<TimedPose> wps;
        wps.reserve(steps + 1);
        for (int k = 0; k <= steps; ++k) {
            const double t = k * cfg.dt;
            const double s = cfg.speed * t;
            Pose2 p;
            if (std::abs(kappa) < 1e-12) {
                p = Pose2(start.x + s * std::cos(start.yaw),
                          start.y + s * std::sin(start.yaw), start.yaw);
            } else {
                const double th = start.yaw + kappa * s;
                p = Pose2(start.x + (std::sin(th) - std::sin(start.yaw)) / kappa,
                          start.y - (std::cos(th) - std::cos(start.yaw)) / kappa, th);
            }
            wps.push_back({p, t});
        }
        out.push_back(Trajectory(std::move(wps)));
    }
    return out;
}

CostBreakdown cost(const Trajectory& tau, const JointForecast& actor_sample,
                   const std::vector<Vec2>& route, const PlannerConfig& cfg) {
    tau.validate();
    CostBreakdown cb;

    for (std::size_t a = 0; a < actor_sample.paths.size(); ++a) {
        check_shared_horizon(tau, *actor_sample.paths[a]);
    }

    for (std::size_t k = 0; k < tau.size() && cb.collision == 0.0; ++k) {
        const Pose2& sdv = tau.waypoints[k].pose;
        for (std::size_t a = 0; a < actor_sample.paths.size(); ++a) {
            const Pose2& ap = actor_sample.paths[a]->waypoints[k].pose;
            if (obb_overlap(sdv, cfg.sdv_length, cfg.sdv_width, ap,
                            actor_sample.boxes[a].length, actor_sample.boxes[a].width)) {
                cb.collision = 1.0;
                break;
            }
        }
    }

    cb.lateral_acceleration = max_lateral_acceleration(tau);
    cb.jerk = max_jerk(tau);

    const Vec2 end{tau.back().pose.x, tau.back().pose.y};
    cb.progress = -project_to_route(route, end).arc_length;

    double lat_sum = 0.0;
    for (const auto& wp : tau.waypoints) {
        lat_sum += project_to_route(route, {wp.pose.x, wp.pose.y}).lateral;
    }
    cb.route_deviation = lat_sum / tau.size();

    cb.total = cfg.w_collision * cb.collision + cfg.w_lat_acc * cb.lateral_acceleration +
               cfg.w_jerk * cb.jerk + cfg.w_progress * cb.progress +
               cfg.w_route * cb.route_deviation;
    return cb;
}

Trajectory select_plan(const std::vector<Trajectory>& candidates,
                       const ActorSet& actors, const std::vector<Vec2>& route,
                       const PlannerConfig& cfg) {
    if (candidates.empty()) {
        throw std::invalid_argument("select_plan: no candidates");
    }
    const int S = actors.actors.empty() ? 1 : actors.sample_count;
    std::size_t best = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    double best_kappa = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        double sum = 0.0;
        for (int s = 0; s < S; ++s) {
            if (actors.actors.empty()) {
                sum += cost(candidates[i], JointForecast{}, route, cfg).total;
            } else {
                sum += cost(candidates[i], joint_sample(actors, s), route, cfg).total;
            }
        }
        const double kappa = std::abs(candidate_curvature(candidates[i]));
        if (sum < best_cost || (sum == best_cost && kappa < best_kappa)) {
            best_cost = sum;
            best_kappa = kappa;
            best = i;
        }
    }
    return candidates[best];
}

RolloutResult rollout_open_loop(const Trajectory& plan, const PoseOffset& pose_error,
                                const ActorSet& actors, double horizon,
                                const PlannerConfig& cfg) {
    RolloutResult rr;
    rr.executed = rigid_align_trajectory(plan, pose_error);
    for (const auto& wp : rr.executed.waypoints) {
        if (wp.t > horizon + kTimeEps) break;
        for (const auto& actor : actors.actors) {
            const Pose2 ap = interpolate_pose(actor.gt, wp.t);
            if (obb_overlap(wp.pose, cfg.sdv_length, cfg.sdv_width, ap,
                            actor.box.length, actor.box.width)) {
                rr.collided = true;
                rr.first_collision_t = wp.t;
                break;
            }
        }
        if (rr.collided) break;
    }
    return rr;
}

}  // namespace lploc
