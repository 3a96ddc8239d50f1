#pragma once

#include <optional>
#include <vector>

#include "lploc/grid.hpp"
#include "lploc/net.hpp"
#include "lploc/pose.hpp"
#include "lploc/world.hpp"

namespace lploc {

// Discretized 3-DoF search space. Each axis is uniformly spaced, symmetric
// about zero, and contains zero.
struct OffsetGrid {
    std::vector<double> x_offsets;
    std::vector<double> y_offsets;
    std::vector<double> yaw_offsets;

    void validate() const;
    std::size_t candidate_count() const {
        return x_offsets.size() * y_offsets.size() * yaw_offsets.size();
    }
    double x_step() const;
    double y_step() const;
    double yaw_step() const;
};

// +/-0.5 m at 5 cm in x and y, +/-1.5 deg at 0.5 deg in yaw.
OffsetGrid default_offset_grid();

// Correlation scores indexed (yaw, y, x), aligned to an OffsetGrid.
struct ScoreVolume {
    int n_yaw = 0;
    int n_y = 0;
    int n_x = 0;
    std::vector<double> scores;

    ScoreVolume() = default;
    ScoreVolume(int nyaw, int ny, int nx)
        : n_yaw(nyaw), n_y(ny), n_x(nx),
          scores(static_cast<std::size_t>(nyaw) * ny * nx, 0.0) {}

    double& at(int k, int iy, int ix) { return scores[index(k, iy, ix)]; }
    double at(int k, int iy, int ix) const { return scores[index(k, iy, ix)]; }
    std::size_t index(int k, int iy, int ix) const {
        return (static_cast<std::size_t>(k) * n_y + iy) * n_x + ix;
    }
};

struct ProbVolume {
    int n_yaw = 0;
    int n_y = 0;
    int n_x = 0;
    std::vector<double> p;

    std::size_t index(int k, int iy, int ix) const {
        return (static_cast<std::size_t>(k) * n_y + iy) * n_x + ix;
    }
};

struct PoseEstimate {
    PoseOffset offset;
    Pose2 corrected_pose;
    double score = 0.0;
    std::optional<ProbVolume> prob_volume;
};

// Correlation of the warped online embedding against the map embedding for
// every candidate. The sum always runs over the full online footprint (the
// map must cover it at every translation), so border candidates see no
// padding penalty. Reference implementation: per-candidate evaluation.
ScoreVolume score_direct(const BevGrid& online_emb, const BevGrid& map_emb,
                         const OffsetGrid& grid);

// Same scores computed as one 2-D FFT cross-correlation per yaw candidate.
// Requires the two lattices and all translation offsets to be integer
// multiples of the cell size. Agrees with score_direct to ~1e-12 relative.
ScoreVolume score_fft(const BevGrid& online_emb, const BevGrid& map_emb,
                      const OffsetGrid& grid);

ProbVolume softmax(const ScoreVolume& vol);

// Highest-scoring candidate; ties broken by the smallest offset norm
// (1 deg of yaw weighted as 0.5 m), then lexicographically (yaw, y, x).
PoseOffset argmax_pose(const ScoreVolume& vol, const OffsetGrid& grid);

// End-to-end localization setup: how sweeps are rasterized and embedded.
struct LocalizerPipeline {
    enum class Embed { kIdentity, kLearned };

    Embed mode = Embed::kIdentity;
    GridSpec fine_spec;            // vehicle-frame online raster
    const ConvStack* f = nullptr;  // map branch
    const ConvStack* g = nullptr;  // online branch
    // Multi-resolution sharing with the frozen coarse backbone (optional).
    const ConvStack* base = nullptr;
    GridSpec coarse_spec;
    const FusionParams* fusion = nullptr;
    bool keep_prob_volume = false;

    static LocalizerPipeline identity(const GridSpec& fine);
};

// Voxelizes the sweep, embeds the online branch (optionally fused with the
// coarse backbone), embeds a map crop resampled around the prior, scores via
// FFT correlation, and returns the best offset with the corrected pose
// (offset applied in the prior's frame).
PoseEstimate localize(std::span<const LidarPoint> sweep, const IntensityMap& map,
                      const Pose2& prior, const LocalizerPipeline& pipeline,
                      const OffsetGrid& grid);

// Prior-frame map crop sized for the search envelope: fine dims plus the
// translation padding on each side.
BevGrid make_map_crop(const IntensityMap& map, const Pose2& prior,
                      const GridSpec& fine_spec, const OffsetGrid& grid);

int translation_pad_cells(const GridSpec& fine_spec, const OffsetGrid& grid);

// Common support of the rotated online embedding across all yaw candidates.
// Both scoring paths and the trainer restrict the correlation to this mask so
// rotation zero padding never penalizes a candidate.
std::vector<std::uint8_t> yaw_support_mask(int rows, int cols,
                                           const std::vector<double>& yaw_offsets);

}  // namespace lploc
