#include <doctest.h>

#include <cmath>

#include "lploc/rng.hpp"
#include "lploc/world.hpp"

using namespace lploc;

TEST_CASE("gen_map is deterministic and bounded") {
    const IntensityMap a = gen_map(5, 20.0, 20.0);
    const IntensityMap b = gen_map(5, 20.0, 20.0);
    CHECK(a.grid.data() == b.grid.data());
    for (float v : a.grid.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
    const IntensityMap c = gen_map(6, 20.0, 20.0);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.grid.data().size(); ++i) {
        diff += std::abs(a.grid.data()[i] - c.grid.data()[i]);
    }
    CHECK(diff / a.grid.data().size() > 0.0);
}

TEST_CASE("age_map degrades but stays bounded") {
    const IntensityMap m = gen_map(5, 10.0, 10.0);
    const IntensityMap aged = age_map(m, 9, 0.05, 4);
    CHECK(aged.grid.data() != m.grid.data());
    for (float v : aged.grid.data()) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }
}

TEST_CASE("render_sweep: full dropout yields an empty cloud") {
    const IntensityMap m = gen_map(5, 20.0, 20.0);
    SensorModel s;
    s.n_rays = 64;
    s.max_range = 4.0;
    s.dropout_prob = 1.0;
    const auto pts = render_sweep(m, Pose2(10, 10, 0.3), s, 1);
    CHECK(pts.empty());
}

TEST_CASE("render_sweep rejects poses outside the map") {
    const IntensityMap m = gen_map(5, 20.0, 20.0);
    CHECK_THROWS_AS(render_sweep(m, Pose2(30, 10, 0), SensorModel{}, 1),
                    std::invalid_argument);
}

TEST_CASE("render_sweep: noise-free intensities equal the bilinear map value") {
    const IntensityMap m = gen_map(5, 20.0, 20.0);
    SensorModel s;
    s.n_rays = 90;
    s.max_range = 5.0;
    const Pose2 pose(9.0, 11.0, 0.7);
    const auto pts = render_sweep(m, pose, s, 3);
    REQUIRE(!pts.empty());
    for (const auto& p : pts) {
        const Vec2 q = apply(pose, Vec2{p.x, p.y});
        CHECK(static_cast<double>(p.intensity) ==
              doctest::Approx(m.grid.sample_metric(0, q.x, q.y)).epsilon(1e-6));
        CHECK(p.z == 0.0f);
    }
}

TEST_CASE("render_sweep: translating the pose keeps vehicle-frame geometry") {
    const IntensityMap m = gen_map(5, 30.0, 30.0);
    SensorModel s;
    s.n_rays = 64;
    s.max_range = 4.0;
    const auto a = render_sweep(m, Pose2(12, 15, 0.4), s, 9);
    const auto b = render_sweep(m, Pose2(13, 15, 0.4), s, 9);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
    }
}

TEST_CASE("render_sweep is reproducible and count matches dropout expectation") {
    const IntensityMap m = gen_map(5, 30.0, 30.0);
    SensorModel s;
    s.n_rays = 200;
    s.max_range = 5.0;
    s.dropout_prob = 0.4;
    s.intensity_noise_sigma = 0.05;
    const auto a = render_sweep(m, Pose2(15, 15, 0.0), s, 77);
    const auto b = render_sweep(m, Pose2(15, 15, 0.0), s, 77);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].intensity == b[i].intensity);
    }
    // expectation: n_rays * steps * (1 - dropout); loose statistical bound
    const double expected = 200 * 50 * 0.6;
    CHECK(std::abs(static_cast<double>(a.size()) - expected) < 4.0 * std::sqrt(expected));
}

TEST_CASE("gen_scenario is deterministic and respects the config") {
    WorldConfig cfg;
    cfg.map_width = 64.0;
    cfg.map_height = 64.0;
    cfg.route_length = 30.0;
    cfg.route_margin = 12.0;
    cfg.parked_along_max = 25.0;
    cfg.forecast_samples = 5;
    const Scenario a = gen_scenario(3, cfg);
    const Scenario b = gen_scenario(3, cfg);
    CHECK(scenario_digest(a) == scenario_digest(b));
    CHECK(scenario_digest(a) != scenario_digest(gen_scenario(4, cfg)));

    // forecasts share the horizon and anchor at the current pose
    for (const auto& actor : a.actors.actors) {
        CHECK(static_cast<int>(actor.forecasts.size()) == cfg.forecast_samples);
        for (const auto& f : actor.forecasts) {
            REQUIRE(f.size() == actor.gt.size());
            CHECK(f.front().pose.x == doctest::Approx(actor.gt.front().pose.x));
            CHECK(f.front().pose.y == doctest::Approx(actor.gt.front().pose.y));
        }
    }
    // SDV follows the route at the configured speed
    const auto& wp = a.sdv_gt.waypoints;
    for (std::size_t i = 0; i + 1 < wp.size(); ++i) {
        const double d = std::hypot(wp[i + 1].pose.x - wp[i].pose.x,
                                    wp[i + 1].pose.y - wp[i].pose.y);
        CHECK(d == doctest::Approx(cfg.speed * cfg.dt).epsilon(1e-6));
    }
}

TEST_CASE("gen_scenario with zero actors") {
    WorldConfig cfg;
    cfg.map_width = 64.0;
    cfg.map_height = 64.0;
    cfg.route_length = 30.0;
    cfg.route_margin = 12.0;
    cfg.n_actors_min = 0;
    cfg.n_actors_max = 0;
    const Scenario s = gen_scenario(3, cfg);
    CHECK(s.actors.actors.empty());
}

TEST_CASE("actors start away from the SDV path") {
    WorldConfig cfg;
    cfg.map_width = 96.0;
    cfg.map_height = 96.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Scenario s = gen_scenario(seed, cfg);
        for (const auto& actor : s.actors.actors) {
            double min_d = 1e9;
            for (const auto& wp : s.sdv_gt.waypoints) {
                min_d = std::min(min_d, std::hypot(actor.gt.front().pose.x - wp.pose.x,
                                                   actor.gt.front().pose.y - wp.pose.y));
            }
            CHECK(min_d > 2.0);
        }
    }
}
