#include <doctest.h>

#include <cmath>

#include "lploc/planner.hpp"
#include "lploc/rng.hpp"

using namespace lploc;

namespace {

std::vector<Vec2> straight_route(double length) {
    std::vector<Vec2> r;
    for (double s = 0.0; s <= length; s += 1.0) r.push_back({s, 0.0});
    return r;
}

PlannerConfig test_cfg() {
    PlannerConfig cfg;
    cfg.n_candidates = 9;
    cfg.speed = 10.0;
    return cfg;
}

Actor parked_actor(double x, double y, double yaw, int steps, double dt, int S,
                   double len = 4.5, double wid = 1.9) {
    Actor a;
    a.box = {len, wid};
    std::vector<TimedPose> wps;
    for (int k = 0; k <= steps; ++k) wps.push_back({Pose2(x, y, yaw), k * dt});
    a.gt = Trajectory(wps);
    for (int s = 0; s < S; ++s) a.forecasts.push_back(a.gt);
    return a;
}

}  // namespace

TEST_CASE("planner config dominance invariant") {
    PlannerConfig cfg = test_cfg();
    CHECK_NOTHROW(cfg.validate());
    cfg.w_collision = 10.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("obb overlap basics") {
    CHECK(obb_overlap(Pose2(0, 0, 0), 4, 2, Pose2(3, 0, 0), 4, 2));
    CHECK_FALSE(obb_overlap(Pose2(0, 0, 0), 4, 2, Pose2(5, 0, 0), 4, 2));
    // rotated corner case: diagonal overlap
    CHECK(obb_overlap(Pose2(0, 0, deg_to_rad(45)), 4, 2, Pose2(2.4, 0, 0), 2, 2));
    CHECK_FALSE(obb_overlap(Pose2(0, 0, 0), 4, 2, Pose2(0, 2.1, 0), 4, 2));
}

TEST_CASE("sample_trajectories: single straight candidate") {
    PlannerConfig cfg = test_cfg();
    cfg.n_candidates = 1;
    const auto t = sample_trajectories(Pose2(2, 3, 0.5), straight_route(60), cfg);
    REQUIRE(t.size() == 1);
    const auto& wp = t[0].waypoints;
    CHECK(wp.size() == 11);
    const double len = std::hypot(wp.back().pose.x - wp.front().pose.x,
                                  wp.back().pose.y - wp.front().pose.y);
    CHECK(len == doctest::Approx(cfg.speed * cfg.horizon).epsilon(1e-9));
    for (const auto& w : wp) CHECK(w.pose.yaw == doctest::Approx(0.5));
}

TEST_CASE("sample_trajectories: all candidates start at the start pose, set is symmetric") {
    const PlannerConfig cfg = test_cfg();
    const Pose2 start(1, -2, 0.3);
    const auto ts = sample_trajectories(start, straight_route(60), cfg);
    REQUIRE(static_cast<int>(ts.size()) == cfg.n_candidates);
    for (const auto& t : ts) {
        CHECK(t.front().pose.x == doctest::Approx(start.x));
        CHECK(t.front().pose.y == doctest::Approx(start.y));
        CHECK(t.front().pose.yaw == doctest::Approx(start.yaw));
    }
    // mirror symmetry about the straight candidate
    for (int i = 0; i < cfg.n_candidates / 2; ++i) {
        const auto& a = ts[i].waypoints.back().pose;
        const auto& b = ts[cfg.n_candidates - 1 - i].waypoints.back().pose;
        const Pose2 ra = between(start, a);
        const Pose2 rb = between(start, b);
        CHECK(ra.x == doctest::Approx(rb.x).epsilon(1e-9));
        CHECK(ra.y == doctest::Approx(-rb.y).epsilon(1e-9));
    }
}

TEST_CASE("cost: straight path with no actors has no collision and no jerk") {
    const PlannerConfig cfg = test_cfg();
    const auto route = straight_route(60);
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    const CostBreakdown cb = cost(ts[cfg.n_candidates / 2], JointForecast{}, route, cfg);
    CHECK(cb.collision == 0.0);
    CHECK(cb.jerk == doctest::Approx(0.0));
    CHECK(cb.lateral_acceleration == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(cb.progress == doctest::Approx(-50.0).epsilon(1e-6));
    CHECK(cb.total == doctest::Approx(cfg.w_progress * cb.progress +
                                      cfg.w_route * cb.route_deviation)
                          .epsilon(1e-9));
}

TEST_CASE("cost: actor parked on the path collides") {
    const PlannerConfig cfg = test_cfg();
    const auto route = straight_route(60);
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    ActorSet actors;
    actors.sample_count = 3;
    actors.actors.push_back(parked_actor(20.0, 0.0, 0.0, 10, cfg.dt, 3));
    const CostBreakdown cb =
        cost(ts[cfg.n_candidates / 2], joint_sample(actors, 0), route, cfg);
    CHECK(cb.collision == 1.0);
}

TEST_CASE("cost: constant curvature gives v^2 * kappa laterally") {
    PlannerConfig cfg = test_cfg();
    cfg.curvature_range = 0.002;
    const auto route = straight_route(60);
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    const CostBreakdown cb = cost(ts.front(), JointForecast{}, route, cfg);
    // candidate 0 has kappa = -0.002 at 10 m/s: |v^2 k| = 0.2
    CHECK(cb.lateral_acceleration == doctest::Approx(0.2).epsilon(1e-3));
}

TEST_CASE("cost rejects a horizon mismatch") {
    const PlannerConfig cfg = test_cfg();
    const auto route = straight_route(60);
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    ActorSet actors;
    actors.sample_count = 1;
    actors.actors.push_back(parked_actor(20.0, 5.0, 0.0, 4, cfg.dt, 1));  // short horizon
    CHECK_THROWS_AS(cost(ts[0], joint_sample(actors, 0), route, cfg),
                    std::invalid_argument);
}

TEST_CASE("select_plan: single candidate returned; collision avoidance dominates") {
    const PlannerConfig cfg = test_cfg();
    const auto route = straight_route(60);
    ActorSet actors;
    actors.sample_count = 4;
    // a wall on the straight path forces a curved plan
    actors.actors.push_back(parked_actor(25.0, 0.0, 0.0, 10, cfg.dt, 4, 6.0, 2.5));

    PlannerConfig one = cfg;
    one.n_candidates = 1;
    const auto single = sample_trajectories(Pose2(0, 0, 0), route, one);
    const Trajectory only = select_plan(single, actors, route, one);
    CHECK(only.waypoints.back().pose.x ==
          doctest::Approx(single[0].waypoints.back().pose.x));

    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    const Trajectory plan = select_plan(ts, actors, route, cfg);
    const CostBreakdown cb = cost(plan, joint_sample(actors, 0), route, cfg);
    CHECK(cb.collision == 0.0);
}

TEST_CASE("select_plan tie-break picks the smallest curvature") {
    PlannerConfig cfg = test_cfg();
    cfg.w_collision = 1000.0;
    cfg.w_lat_acc = 0.0;
    cfg.w_jerk = 0.0;
    cfg.w_progress = 0.0;
    cfg.w_route = 0.0;
    const auto route = straight_route(60);
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    ActorSet none;
    none.sample_count = 1;
    const Trajectory plan = select_plan(ts, none, route, cfg);
    // every candidate has zero cost; the straight one wins
    CHECK(plan.waypoints.back().pose.y == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("rollout_open_loop: zero error reproduces the plan") {
    const PlannerConfig cfg = test_cfg();
    const auto route = straight_route(60);
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, cfg);
    ActorSet none;
    none.sample_count = 1;
    const RolloutResult rr =
        rollout_open_loop(ts[cfg.n_candidates / 2], PoseOffset{}, none, 5.0, cfg);
    CHECK_FALSE(rr.collided);
    for (std::size_t i = 0; i < rr.executed.size(); ++i) {
        CHECK(rr.executed.waypoints[i].pose.x ==
              doctest::Approx(ts[cfg.n_candidates / 2].waypoints[i].pose.x));
    }
}

TEST_CASE("rollout_open_loop: yaw error drives into an offset wall") {
    // 1.5 deg yaw error on a straight 10 m/s plan: lateral drift at 45 m is
    // 45 * sin(1.5 deg) = 1.18 m > the 1.0 m wall offset
    PlannerConfig cfg = test_cfg();
    cfg.horizon = 5.0;
    const auto route = straight_route(60);
    PlannerConfig one = cfg;
    one.n_candidates = 1;
    const auto plan = sample_trajectories(Pose2(0, 0, 0), route, one)[0];

    ActorSet actors;
    actors.sample_count = 1;
    // thin wall segment parallel to the road, 1.0 m laterally offset at x=45
    actors.actors.push_back(parked_actor(45.0, 1.0 + 0.95 + 0.05, 0.0, 10, cfg.dt, 1,
                                         1.0, 1.9));
    // actor half width 0.95 + SDV half width 1.0: collision needs ~1.0 m drift

    const RolloutResult hit =
        rollout_open_loop(plan, PoseOffset(0, 0, deg_to_rad(1.5)), actors, 5.0, cfg);
    CHECK(hit.collided);
    CHECK(hit.first_collision_t.has_value());

    const RolloutResult miss =
        rollout_open_loop(plan, PoseOffset(0, 0, deg_to_rad(0.5)), actors, 5.0, cfg);
    CHECK_FALSE(miss.collided);
}

TEST_CASE("collision time is non-increasing as yaw error grows") {
    PlannerConfig cfg = test_cfg();
    const auto route = straight_route(80);
    PlannerConfig one = cfg;
    one.n_candidates = 1;
    one.horizon = 5.0;
    const auto plan = sample_trajectories(Pose2(0, 0, 0), route, one)[0];

    ActorSet actors;
    actors.sample_count = 1;
    // long thin wall 1.2 m to the left from x=20 onward
    for (int i = 0; i < 6; ++i) {
        actors.actors.push_back(
            parked_actor(20.0 + 6.0 * i, 2.2, 0.0, 10, cfg.dt, 1, 6.0, 0.4));
    }

    double prev_t = 1e9;
    for (double deg : {1.5, 2.0, 2.5, 3.0}) {
        const RolloutResult rr =
            rollout_open_loop(plan, PoseOffset(0, 0, deg_to_rad(deg)), actors, 5.0, cfg);
        if (rr.collided) {
            CHECK(*rr.first_collision_t <= prev_t + 1e-9);
            prev_t = *rr.first_collision_t;
        }
    }
    // the largest error must collide
    CHECK(rollout_open_loop(plan, PoseOffset(0, 0, deg_to_rad(3.0)), actors, 5.0, cfg)
              .collided);
}

TEST_CASE("select_plan invariant to cost shifts and positive rescaling") {
    const auto route = straight_route(60);
    ActorSet actors;
    actors.sample_count = 2;
    actors.actors.push_back(parked_actor(30.0, 2.0, 0.0, 10, 0.5, 2));

    PlannerConfig base_cfg = test_cfg();
    const auto ts = sample_trajectories(Pose2(0, 0, 0), route, base_cfg);
    const Trajectory a = select_plan(ts, actors, route, base_cfg);

    PlannerConfig scaled = base_cfg;
    scaled.w_collision *= 7.0;
    scaled.w_lat_acc *= 7.0;
    scaled.w_jerk *= 7.0;
    scaled.w_progress *= 7.0;
    scaled.w_route *= 7.0;
    const Trajectory b = select_plan(ts, actors, route, scaled);
    CHECK(a.waypoints.back().pose.x == b.waypoints.back().pose.x);
    CHECK(a.waypoints.back().pose.y == b.waypoints.back().pose.y);
}
