#include "lploc/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lploc/digest.hpp"
#include "lploc/rng.hpp"

namespace lploc {

namespace {

constexpr double kRadialStep = 0.1;  // metres between samples along a ray

float clamp01(double v) {
    return static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
}

// Bilinear value noise on a coarse random lattice.
struct ValueNoise {
    int nx = 0, ny = 0;
    double cell = 2.0;
    std::vector<double> lattice;

    ValueNoise(Rng& rng, double width, double height, double cell_size)
        : nx(static_cast<int>(width / cell_size) + 2),
          ny(static_cast<int>(height / cell_size) + 2),
          cell(cell_size),
          lattice(static_cast<std::size_t>(nx) * ny) {
        for (auto& v : lattice) v = rng.uniform01();
    }

    double at(double x, double y) const {
        const double u = x / cell;
        const double v = y / cell;
        const int c0 = std::min(std::max(static_cast<int>(std::floor(u)), 0), nx - 2);
        const int r0 = std::min(std::max(static_cast<int>(std::floor(v)), 0), ny - 2);
        const double ax = u - c0;
        const double ay = v - r0;
        auto l = [&](int r, int c) { return lattice[static_cast<std::size_t>(r) * nx + c]; };
        return (1 - ay) * ((1 - ax) * l(r0, c0) + ax * l(r0, c0 + 1)) +
               ay * ((1 - ax) * l(r0 + 1, c0) + ax * l(r0 + 1, c0 + 1));
    }
};

struct RoadSpec {
    double px, py;     // a point on the centerline
    double dx, dy;     // unit direction
    double half_width;
};

// Arc-based route; kappa == 0 degenerates to a straight line.
struct RouteArc {
    Pose2 start;
    double kappa = 0.0;
    double length = 0.0;

    Pose2 at(double s) const {
        if (std::abs(kappa) < 1e-12) {
            return Pose2(start.x + s * std::cos(start.yaw),
                         start.y + s * std::sin(start.yaw), start.yaw);
        }
        const double th = start.yaw + kappa * s;
        return Pose2(start.x + (std::sin(th) - std::sin(start.yaw)) / kappa,
                     start.y - (std::cos(th) - std::cos(start.yaw)) / kappa, th);
    }
};

}  // namespace

void SensorModel::validate() const {
    if (n_rays < 1 || !(max_range > 0.0)) {
        throw std::invalid_argument("SensorModel: invalid geometry");
    }
    if (dropout_prob < 0.0 || dropout_prob > 1.0) {
        throw std::invalid_argument("SensorModel: dropout_prob outside [0,1]");
    }
    if (intensity_noise_sigma < 0.0 || range_noise_sigma < 0.0) {
        throw std::invalid_argument("SensorModel: negative noise sigma");
    }
}

void ActorSet::validate() const {
    if (actors.empty()) return;
    if (sample_count < 1) {
        throw std::invalid_argument("ActorSet: sample_count must be >= 1");
    }
    const std::size_t horizon = actors.front().gt.size();
    for (const auto& a : actors) {
        if (static_cast<int>(a.forecasts.size()) != sample_count) {
            throw std::invalid_argument("ActorSet: forecast count != sample_count");
        }
        for (const auto& f : a.forecasts) {
            if (f.size() != horizon) {
                throw std::invalid_argument("ActorSet: forecasts must share the horizon");
            }
        }
    }
}

IntensityMap gen_map(std::uint64_t seed, double width, double height,
                     double resolution) {
    if (!(width > 0.0) || !(height > 0.0)) {
        throw std::invalid_argument("gen_map: dimensions must be positive");
    }
    GridSpec spec;
    spec.resolution = resolution;
    spec.extent_x = width;
    spec.extent_y = height;
    spec.height_slices = 0;
    spec.center = Pose2(width / 2.0, height / 2.0, 0.0);
    BevGrid grid = BevGrid::from_spec(spec);

    Rng rng(split_seed(seed, 0x6d617001));
    // Background varies at a short scale so footprint-averaged brightness
    // gradients cancel; a coherent ramp would tilt the plain dot product.
    ValueNoise background(rng, width, height, 2.0);

    // Roads: straight corridors with a dark surface, bright edge lines and a
    // dashed center line.
    const int n_roads = 2 + static_cast<int>(rng.uniform_int(3));
    std::vector<RoadSpec> roads;
    roads.reserve(n_roads);
    for (int i = 0; i < n_roads; ++i) {
        const double ang = rng.uniform(0.0, kPi);
        RoadSpec r;
        r.px = rng.uniform(0.2 * width, 0.8 * width);
        r.py = rng.uniform(0.2 * height, 0.8 * height);
        r.dx = std::cos(ang);
        r.dy = std::sin(ang);
        r.half_width = rng.uniform(3.2, 4.0);
        roads.push_back(r);
    }

    const int rows = grid.rows();
    const int cols = grid.cols();
    for (int r = 0; r < rows; ++r) {
        const double y = grid.origin_y() + (r + 0.5) * resolution;
        for (int c = 0; c < cols; ++c) {
            const double x = grid.origin_x() + (c + 0.5) * resolution;
            double v = 0.15 + 0.25 * background.at(x - grid.origin_x(), y - grid.origin_y());
            for (const auto& road : roads) {
                const double rx = x - road.px;
                const double ry = y - road.py;
                const double lat = std::abs(rx * -road.dy + ry * road.dx);
                const double lon = rx * road.dx + ry * road.dy;
                if (lat < road.half_width) {
                    v = 0.18;  // asphalt
                    // edge lines
                    if (std::abs(lat - (road.half_width - 0.25)) < 0.08) v = 0.85;
                    // dashed center line, 3 m on / 3 m off
                    if (lat < 0.07 && std::fmod(std::abs(lon), 6.0) < 3.0) v = 0.9;
                }
            }
            grid.at(0, r, c) = clamp01(v);
        }
    }

    // Blobs: patches and covers that break up uniform areas.
    const int n_blobs = static_cast<int>(width * height / 40.0);
    for (int i = 0; i < n_blobs; ++i) {
        const double bx = rng.uniform(0.0, width) + grid.origin_x();
        const double by = rng.uniform(0.0, height) + grid.origin_y();
        const double rad = rng.uniform(0.3, 1.0);
        const double amp = rng.uniform(0.15, 0.35) * (rng.uniform01() < 0.5 ? -1.0 : 1.0);
        const int c0 = std::max(0, static_cast<int>((bx - rad - grid.origin_x()) / resolution));
        const int c1 = std::min(cols - 1, static_cast<int>((bx + rad - grid.origin_x()) / resolution));
        const int r0 = std::max(0, static_cast<int>((by - rad - grid.origin_y()) / resolution));
        const int r1 = std::min(rows - 1, static_cast<int>((by + rad - grid.origin_y()) / resolution));
        for (int rr = r0; rr <= r1; ++rr) {
            const double y = grid.origin_y() + (rr + 0.5) * resolution;
            for (int cc = c0; cc <= c1; ++cc) {
                const double x = grid.origin_x() + (cc + 0.5) * resolution;
                const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
                if (d2 < rad * rad) {
                    const double fall = 1.0 - d2 / (rad * rad);
                    grid.at(0, rr, cc) = clamp01(grid.at(0, rr, cc) + amp * fall);
                }
            }
        }
    }

    // Per-cell speckle sharpens the correlation peak at cell scale.
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            grid.at(0, r, c) = clamp01(grid.at(0, r, c) + rng.uniform(-0.1, 0.1));
        }
    }

    return IntensityMap{std::move(grid)};
}

IntensityMap age_map(const IntensityMap& map, std::uint64_t seed,
                     double noise_sigma, int n_patches) {
    IntensityMap aged{map.grid};
    Rng rng(split_seed(seed, 0x61676564));
    BevGrid& g = aged.grid;
    for (int r = 0; r < g.rows(); ++r) {
        for (int c = 0; c < g.cols(); ++c) {
            g.at(0, r, c) = clamp01(g.at(0, r, c) + rng.gaussian(noise_sigma));
        }
    }
    for (int i = 0; i < n_patches; ++i) {
        const double w = rng.uniform(1.0, 4.0);
        const double h = rng.uniform(1.0, 4.0);
        const double x0 = g.origin_x() + rng.uniform(0.0, g.extent_x() - w);
        const double y0 = g.origin_y() + rng.uniform(0.0, g.extent_y() - h);
        const float fill = clamp01(rng.uniform(0.1, 0.3));
        const int c0 = static_cast<int>((x0 - g.origin_x()) / g.resolution());
        const int r0 = static_cast<int>((y0 - g.origin_y()) / g.resolution());
        const int c1 = std::min(g.cols(), c0 + static_cast<int>(w / g.resolution()));
        const int r1 = std::min(g.rows(), r0 + static_cast<int>(h / g.resolution()));
        for (int rr = r0; rr < r1; ++rr) {
            for (int cc = c0; cc < c1; ++cc) {
                g.at(0, rr, cc) = fill;
            }
        }
    }
    return aged;
}

std::vector<LidarPoint> render_sweep(const IntensityMap& map, const Pose2& pose,
                                     const SensorModel& sensor, std::uint64_t seed) {
    sensor.validate();
    if (!map.contains(pose.x, pose.y)) {
        throw std::invalid_argument("render_sweep: pose outside map extent");
    }
    Rng rng(split_seed(seed, 0x73776565));
    std::vector<LidarPoint> points;
    const int steps = static_cast<int>(sensor.max_range / kRadialStep);
    points.reserve(static_cast<std::size_t>(sensor.n_rays) * steps);

    const double cy = std::cos(pose.yaw);
    const double sy = std::sin(pose.yaw);
    for (int i = 0; i < sensor.n_rays; ++i) {
        const double az = 2.0 * kPi * i / sensor.n_rays;
        const double ca = std::cos(az);
        const double sa = std::sin(az);
        for (int k = 1; k <= steps; ++k) {
            if (sensor.dropout_prob > 0.0 && rng.uniform01() < sensor.dropout_prob) {
                continue;
            }
            double r = k * kRadialStep;
            if (sensor.range_noise_sigma > 0.0) {
                r += rng.gaussian(sensor.range_noise_sigma);
                if (r <= 0.0) continue;
            }
            // store the vehicle-frame point first so the intensity is read at
            // exactly the location the point reports
            const float vx = static_cast<float>(r * ca);
            const float vy = static_cast<float>(r * sa);
            const double mx = pose.x + vx * cy - vy * sy;
            const double my = pose.y + vx * sy + vy * cy;
            if (!map.contains(mx, my)) continue;
            double intensity = map.grid.sample_metric(0, mx, my);
            if (sensor.intensity_noise_sigma > 0.0) {
                intensity += rng.gaussian(sensor.intensity_noise_sigma);
            }
            points.push_back({vx, vy, 0.0f, clamp01(intensity)});
        }
    }
    return points;
}

Scenario gen_scenario_on_map(std::uint64_t seed, const WorldConfig& cfg,
                             std::shared_ptr<const IntensityMap> map) {
    if (cfg.route_length < cfg.speed * cfg.horizon) {
        throw std::invalid_argument(
            "WorldConfig: route shorter than the driven horizon");
    }
    Rng rng(split_seed(seed, 0x7363656e));
    const BevGrid& g = map->grid;

    const double lo_x = g.origin_x() + cfg.route_margin;
    const double hi_x = g.origin_x() + g.extent_x() - cfg.route_margin;
    const double lo_y = g.origin_y() + cfg.route_margin;
    const double hi_y = g.origin_y() + g.extent_y() - cfg.route_margin;
    auto inside = [&](double x, double y) {
        return x >= lo_x && x <= hi_x && y >= lo_y && y <= hi_y;
    };

    // Pick an arc that stays in the keep-out box; fall back to a straight
    // route through the map center.
    RouteArc arc;
    bool ok = false;
    for (int attempt = 0; attempt < 32 && !ok; ++attempt) {
        const double heading = rng.uniform(0.0, 2.0 * kPi);
        const double off = rng.uniform(-8.0, 8.0);
        const double kappa = rng.uniform_sym(cfg.max_route_curvature);
        const double cx = g.center_x() - 0.5 * cfg.route_length * std::cos(heading) -
                          off * std::sin(heading);
        const double cyv = g.center_y() - 0.5 * cfg.route_length * std::sin(heading) +
                           off * std::cos(heading);
        arc = RouteArc{Pose2(cx, cyv, heading), kappa, cfg.route_length};
        ok = true;
        for (double s = 0.0; s <= cfg.route_length; s += 2.0) {
            const Pose2 p = arc.at(s);
            if (!inside(p.x, p.y)) {
                ok = false;
                break;
            }
        }
    }
    if (!ok) {
        const Pose2 start(g.center_x() - 0.5 * cfg.route_length, g.center_y(), 0.0);
        arc = RouteArc{start, 0.0, cfg.route_length};
    }

    Scenario sc;
    sc.map = std::move(map);
    sc.seed = seed;
    sc.speed = cfg.speed;

    for (double s = 0.0; s <= cfg.route_length + 1e-9; s += 1.0) {
        const Pose2 p = arc.at(s);
        sc.route.push_back({p.x, p.y});
    }

    const int n_steps = static_cast<int>(std::round(cfg.horizon / cfg.dt));
    {
        std::vector<TimedPose> wps;
        for (int k = 0; k <= n_steps; ++k) {
            const double t = k * cfg.dt;
            wps.push_back({arc.at(cfg.speed * t), t});
        }
        sc.sdv_gt = Trajectory(std::move(wps));
    }

    const int n_actors =
        cfg.n_actors_min +
        static_cast<int>(rng.uniform_int(cfg.n_actors_max - cfg.n_actors_min + 1));
    sc.actors.sample_count = cfg.forecast_samples;
    for (int a = 0; a < n_actors; ++a) {
        Actor actor;
        const bool moving = rng.uniform01() < cfg.moving_fraction;
        const double side = rng.uniform01() < 0.5 ? 1.0 : -1.0;

        std::vector<TimedPose> gt;
        if (!moving) {
            const double along = rng.uniform(cfg.parked_along_min, cfg.parked_along_max);
            const double gap = rng.uniform(cfg.parked_gap_min, cfg.parked_gap_max);
            const Pose2 rp = arc.at(along);
            const double nx = -std::sin(rp.yaw);
            const double ny = std::cos(rp.yaw);
            const Pose2 pose(rp.x + side * gap * nx, rp.y + side * gap * ny, rp.yaw);
            for (int k = 0; k <= n_steps; ++k) {
                gt.push_back({pose, k * cfg.dt});
            }
        } else {
            const double along0 = rng.uniform(cfg.parked_along_max - 5.0,
                                              cfg.route_length - 2.0);
            const double gap = rng.uniform(cfg.oncoming_gap_min, cfg.oncoming_gap_max);
            for (int k = 0; k <= n_steps; ++k) {
                const double t = k * cfg.dt;
                const double s = along0 - cfg.oncoming_speed * t;
                const Pose2 rp = arc.at(std::max(0.0, s));
                const double nx = -std::sin(rp.yaw);
                const double ny = std::cos(rp.yaw);
                gt.push_back({Pose2(rp.x + side * gap * nx, rp.y + side * gap * ny,
                                    wrap_angle(rp.yaw + kPi)),
                              t});
            }
        }
        actor.gt = Trajectory(std::move(gt));

        // Noisy rollouts anchored exactly at the current pose.
        actor.forecasts.reserve(cfg.forecast_samples);
        for (int s = 0; s < cfg.forecast_samples; ++s) {
            std::vector<TimedPose> f;
            double ex = 0.0, ey = 0.0;
            for (int k = 0; k <= n_steps; ++k) {
                const TimedPose& base = actor.gt.waypoints[k];
                if (k > 0) {
                    ex += rng.gaussian(cfg.forecast_noise_sigma);
                    ey += rng.gaussian(cfg.forecast_noise_sigma);
                }
                f.push_back({Pose2(base.pose.x + ex, base.pose.y + ey, base.pose.yaw),
                             base.t});
            }
            actor.forecasts.push_back(Trajectory(std::move(f)));
        }
        sc.actors.actors.push_back(std::move(actor));
    }
    sc.actors.validate();

    for (const auto& wp : sc.sdv_gt.waypoints) {
        if (!sc.map->contains(wp.pose.x, wp.pose.y)) {
            throw std::logic_error("gen_scenario: SDV trajectory left the map");
        }
    }
    return sc;
}

Scenario gen_scenario(std::uint64_t seed, const WorldConfig& cfg) {
    auto map = std::make_shared<IntensityMap>(
        gen_map(split_seed(seed, 0x6d6170), cfg.map_width, cfg.map_height,
                cfg.map_resolution));
    return gen_scenario_on_map(seed, cfg, std::move(map));
}

std::vector<Scenario> gen_world(std::uint64_t seed, const WorldConfig& cfg, int count) {
    if (count < 1) {
        throw std::invalid_argument("gen_world: count must be >= 1");
    }
    auto map = std::make_shared<IntensityMap>(
        gen_map(split_seed(seed, 0x6d6170), cfg.map_width, cfg.map_height,
                cfg.map_resolution));
    std::vector<Scenario> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        out.push_back(gen_scenario_on_map(split_seed(seed, 1000 + i), cfg, map));
    }
    return out;
}

std::uint64_t scenario_digest(const Scenario& s) {
    Digest d;
    d.update_value(s.seed);
    d.update_span(std::span<const float>(s.map->grid.data()));
    auto add_traj = [&](const Trajectory& t) {
        for (const auto& wp : t.waypoints) {
            d.update_value(wp.pose.x);
            d.update_value(wp.pose.y);
            d.update_value(wp.pose.yaw);
            d.update_value(wp.t);
        }
    };
    add_traj(s.sdv_gt);
    for (const auto& p : s.route) {
        d.update_value(p.x);
        d.update_value(p.y);
    }
    for (const auto& a : s.actors.actors) {
        d.update_value(a.box.length);
        d.update_value(a.box.width);
        add_traj(a.gt);
        for (const auto& f : a.forecasts) add_traj(f);
    }
    return d.value();
}

}  // namespace lploc
