#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lploc/matcher.hpp"
#include "lploc/planner.hpp"
#include "lploc/world.hpp"

namespace lploc {

struct JitterSpec {
    double max_trans = 0.0;  // metres
    double max_rot = 0.0;    // radians
    std::uint64_t seed = 0;

    void validate() const;
};

// Ground-truth pose composed with independent uniform draws per axis.
Pose2 jitter(const Pose2& gt, const JitterSpec& spec);

struct RecallReport {
    double r1 = 0.0;
    double r2 = 0.0;
    int n_frames = 0;
};

// r@1: estimate and truth snap to the same grid cell. r@2: within one
// neighbouring offset per axis (the 15cm x 15cm x 1.5deg region at the
// default 5cm / 0.5deg grid).
RecallReport recall(std::span<const PoseOffset> estimates,
                    std::span<const PoseOffset> truths, const OffsetGrid& grid);

struct PlanningReport {
    double collision_rate = 0.0;      // percent
    double l2_human_at_5s = 0.0;      // metres
    double lateral_acceleration = 0.0;
    double jerk = 0.0;
    double progress_at_5s = 0.0;      // metres of route arc length
    int n = 0;
};

PlanningReport planning_metrics(std::span<const RolloutResult> rollouts,
                                std::span<const Trajectory> human_paths,
                                std::span<const std::vector<Vec2>> routes,
                                double at_time = 5.0);

// Shared experiment defaults: raster geometry, sensor, planner, search grid.
struct HarnessConfig {
    GridSpec fine_spec;
    GridSpec coarse_spec;
    SensorModel sensor;
    PlannerConfig planner;
    OffsetGrid grid;

    static HarnessConfig defaults();
};

struct LocEvalOptions {
    JitterSpec spec{0.5, 0.02617993877991494, 7};  // 0.5 m, 1.5 deg
    int max_frames = 500;
    // per-sweep intensity corruption (gain in [gain_min, gain_max], bias added)
    double gain_min = 1.0, gain_max = 1.0;
    double bias_min = 0.0, bias_max = 0.0;
};

struct LocEvalResult {
    RecallReport report;
    std::vector<PoseOffset> estimates;
    std::vector<PoseOffset> truths;
};

// Per frame: jitter the GT pose, localize from the jittered prior, record
// estimated vs true offset. Writes one CSV row per frame plus a trailing
// summary line when out_csv is non-empty.
LocEvalResult run_localizer_eval(std::span<const Scenario> corpus,
                                 const LocalizerPipeline& pipeline,
                                 const HarnessConfig& cfg, const LocEvalOptions& opt,
                                 const std::filesystem::path& out_csv);

enum class JitterAxis { kTranslation, kRotation };

struct SweepRow {
    double level = 0.0;  // metres (translation) or radians (rotation)
    PlanningReport executed;
    PlanningReport believed;
};

// Pose-error propagation study: per level and scenario, jitter the pose,
// plan from the jittered frame, roll out under the residual error. The same
// per-scenario seed is reused across levels so noise scales with the level.
std::vector<SweepRow> run_jitter_sweep(std::span<const Scenario> corpus,
                                       JitterAxis axis,
                                       std::span<const double> levels,
                                       const HarnessConfig& cfg, std::uint64_t seed,
                                       const std::filesystem::path& out_csv);

struct BenchRow {
    std::string config;
    std::string path;  // "direct" | "fft"
    int size = 0;
    double median_ms = 0.0;
    double p90_ms = 0.0;
};

// Wall-clock for online embedding + matching per config and size, both
// scoring paths. The map embedding is precomputed outside the timed region.
std::vector<BenchRow> bench_matcher(std::span<const std::string> config_names,
                                    std::span<const int> sizes, int reps,
                                    const HarnessConfig& cfg,
                                    const std::filesystem::path& out_csv);

// Deterministic formatting used for every CSV the harness writes.
std::string format_double(double v);

}  // namespace lploc
