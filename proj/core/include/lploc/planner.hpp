#pragma once

#include <optional>
#include <vector>

#include "lploc/pose.hpp"
#include "lploc/world.hpp"

namespace lploc {

struct PlannerConfig {
    int n_candidates = 9;
    double horizon = 5.0;
    double dt = 0.5;
    double speed = 10.0;
    double curvature_range = 0.003;  // candidates span [-range, +range]
    double w_collision = 1000.0;
    double w_lat_acc = 1.0;
    double w_jerk = 1.0;
    double w_progress = 1.0;
    double w_route = 5.0;
    double sdv_length = 4.8;
    double sdv_width = 2.0;

    void validate() const;
};

struct CostBreakdown {
    double collision = 0.0;
    double lateral_acceleration = 0.0;
    double jerk = 0.0;
    double progress = 0.0;  // negative arc length along the route
    double route_deviation = 0.0;
    double total = 0.0;
};

// One joint sample over all actors, aligned with an ActorSet.
struct JointForecast {
    std::vector<const Trajectory*> paths;
    std::vector<ActorBox> boxes;
};

JointForecast joint_sample(const ActorSet& actors, int sample_idx);

// Constant-curvature candidates spanning the curvature range evenly, rolled
// out at constant speed from the start pose.
std::vector<Trajectory> sample_trajectories(const Pose2& start,
                                            const std::vector<Vec2>& route,
                                            const PlannerConfig& cfg);

CostBreakdown cost(const Trajectory& tau, const JointForecast& actor_sample,
                   const std::vector<Vec2>& route, const PlannerConfig& cfg);

// argmin over candidates of the summed total cost across all S samples;
// ties go to the smallest-|curvature| candidate.
Trajectory select_plan(const std::vector<Trajectory>& candidates,
                       const ActorSet& actors, const std::vector<Vec2>& route,
                       const PlannerConfig& cfg);

struct RolloutResult {
    Trajectory executed;
    bool collided = false;
    std::optional<double> first_collision_t;
};

// Open-loop execution: the plan is rigidly re-anchored under the pose error
// and tested against the actors' ground-truth motion at every timestep.
RolloutResult rollout_open_loop(const Trajectory& plan, const PoseOffset& pose_error,
                                const ActorSet& actors, double horizon,
                                const PlannerConfig& cfg);

// Oriented-rectangle overlap via the separating axis test.
bool obb_overlap(const Pose2& a, double len_a, double wid_a, const Pose2& b,
                 double len_b, double wid_b);

// Arc-length position and lateral distance of a point relative to a polyline.
struct RouteProjection {
    double arc_length = 0.0;
    double lateral = 0.0;
};
RouteProjection project_to_route(const std::vector<Vec2>& route, const Vec2& pt);

// Pose on a trajectory at time t (linear interpolation, clamped ends).
Pose2 interpolate_pose(const Trajectory& traj, double t);

// Trajectory comfort measures from waypoint geometry (max |v^2 kappa| and
// max |da/dt|), shared by the cost and the evaluation metrics.
double max_lateral_acceleration(const Trajectory& traj);
double max_jerk(const Trajectory& traj);

}  // namespace lploc
