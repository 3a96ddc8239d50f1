#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "lploc/grid.hpp"
#include "lploc/pose.hpp"

namespace lploc {

// Dense ground-intensity raster in the map frame, 5 cm cells, values in [0,1].
struct IntensityMap {
    BevGrid grid;

    bool contains(double x, double y) const { return grid.contains_metric(x, y); }
};

struct SensorModel {
    int n_rays = 900;
    double max_range = 9.0;
    double dropout_prob = 0.0;
    double intensity_noise_sigma = 0.0;
    double range_noise_sigma = 0.0;

    void validate() const;
};

struct ActorBox {
    double length = 4.5;
    double width = 1.9;
};

struct Actor {
    ActorBox box;
    Trajectory gt;                     // pre-recorded motion, map frame
    std::vector<Trajectory> forecasts; // S noisy samples anchored at gt[0]
};

struct ActorSet {
    std::vector<Actor> actors;
    int sample_count = 0;

    void validate() const;
};

struct Scenario {
    std::shared_ptr<const IntensityMap> map;
    Trajectory sdv_gt;
    std::vector<Vec2> route;
    ActorSet actors;
    std::uint64_t seed = 0;
    double speed = 0.0;
};

struct WorldConfig {
    double map_width = 112.0;
    double map_height = 112.0;
    double map_resolution = 0.05;
    double route_length = 60.0;
    double route_margin = 14.0;      // keep-out from map edges
    double max_route_curvature = 0.003;
    double speed = 10.0;
    double horizon = 5.0;
    double dt = 0.5;
    int n_actors_min = 8;
    int n_actors_max = 14;
    int forecast_samples = 50;       // S
    double forecast_noise_sigma = 0.12;  // per-step positional noise accumulation
    double moving_fraction = 0.25;
    // Parked rows flank the route; gaps are centerline-to-centerline laterally.
    double parked_gap_min = 2.6;
    double parked_gap_max = 4.2;
    double parked_along_min = 18.0;
    double parked_along_max = 50.0;
    double oncoming_gap_min = 3.0;
    double oncoming_gap_max = 3.6;
    double oncoming_speed = 8.0;
};

// Procedural ground-intensity texture: smooth background, road surfaces with
// lane markings, bright/dark blobs, and per-cell speckle. Deterministic in
// the seed; speckle makes the autocorrelation peak sharp at cell scale.
IntensityMap gen_map(std::uint64_t seed, double width, double height,
                     double resolution = 0.05);

// Degraded re-render of a map: extra noise plus rectangular occlusion
// patches, standing in for maps that have aged since capture.
IntensityMap age_map(const IntensityMap& map, std::uint64_t seed,
                     double noise_sigma, int n_patches);

// Casts n_rays evenly in azimuth, samples hits at a fixed radial spacing,
// reads intensity from the map bilinearly, applies dropout plus Gaussian
// range/intensity noise. Points come back in the vehicle frame (z = 0).
std::vector<LidarPoint> render_sweep(const IntensityMap& map, const Pose2& pose,
                                     const SensorModel& sensor, std::uint64_t seed);

// One scenario with its own map. Deterministic in (seed, cfg).
Scenario gen_scenario(std::uint64_t seed, const WorldConfig& cfg);

// A corpus of scenarios sharing a single map.
std::vector<Scenario> gen_world(std::uint64_t seed, const WorldConfig& cfg, int count);

// Route/actor layout on an existing map (used by gen_scenario and gen_world).
Scenario gen_scenario_on_map(std::uint64_t seed, const WorldConfig& cfg,
                             std::shared_ptr<const IntensityMap> map);

std::uint64_t scenario_digest(const Scenario& s);

}  // namespace lploc
