#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lploc/pose.hpp"

namespace lploc {

struct LidarPoint {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
    float intensity = 0.0f;
};

// Layout of a BEV voxelization: metric extents, cell size, height slicing.
// The grid axes are those of the frame the input points live in; `center`
// anchors the grid (its translation is the metric center of the raster).
struct GridSpec {
    double resolution = 0.05;
    double extent_x = 12.8;
    double extent_y = 12.8;
    int height_slices = 0;
    double height_min = 0.0;
    double height_max = 0.0;
    Pose2 center{};

    int rows() const;
    int cols() const;
    int channels() const { return height_slices + 1; }
    void validate() const;
};

// Multi-channel 2D raster with metric georeferencing. Data is channel-major,
// row-major within a channel. Occupancy slices come first, the intensity
// channel is last. Cell (r, c) covers [origin + i*res, origin + (i+1)*res).
class BevGrid {
public:
    BevGrid() = default;
    BevGrid(int rows, int cols, int channels, double resolution,
            double origin_x, double origin_y);

    static BevGrid from_spec(const GridSpec& spec);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int channels() const { return channels_; }
    double resolution() const { return resolution_; }
    double origin_x() const { return origin_x_; }
    double origin_y() const { return origin_y_; }
    double extent_x() const { return cols_ * resolution_; }
    double extent_y() const { return rows_ * resolution_; }
    double center_x() const { return origin_x_ + 0.5 * extent_x(); }
    double center_y() const { return origin_y_ + 0.5 * extent_y(); }
    int intensity_channel() const { return channels_ - 1; }

    float& at(int ch, int r, int c) { return data_[index(ch, r, c)]; }
    float at(int ch, int r, int c) const { return data_[index(ch, r, c)]; }
    std::size_t index(int ch, int r, int c) const {
        return (static_cast<std::size_t>(ch) * rows_ + r) * cols_ + c;
    }

    std::span<float> channel(int ch) {
        return {data_.data() + static_cast<std::size_t>(ch) * rows_ * cols_,
                static_cast<std::size_t>(rows_) * cols_};
    }
    std::span<const float> channel(int ch) const {
        return {data_.data() + static_cast<std::size_t>(ch) * rows_ * cols_,
                static_cast<std::size_t>(rows_) * cols_};
    }
    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    bool contains_metric(double x, double y) const {
        return x >= origin_x_ && x < origin_x_ + extent_x() &&
               y >= origin_y_ && y < origin_y_ + extent_y();
    }

    // Bilinear sample at a metric point, zero outside the data extent.
    float sample_metric(int ch, double x, double y) const;
    // Bilinear sample in cell-center index space (u along columns).
    float sample_cells(int ch, double u, double v) const;

    void set_origin(double ox, double oy) { origin_x_ = ox; origin_y_ = oy; }

private:
    int rows_ = 0;
    int cols_ = 0;
    int channels_ = 0;
    double resolution_ = 0.0;
    double origin_x_ = 0.0;
    double origin_y_ = 0.0;
    std::vector<float> data_;
};

// Metric axis-aligned rectangle.
struct Rect {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;
};

// Bins points into occupancy slices plus a mean-intensity channel.
// Out-of-bounds points are ignored; non-finite coordinates and intensities
// outside [0, 1] are rejected.
BevGrid voxelize(std::span<const LidarPoint> points, const GridSpec& spec);

// Resamples the grid under the rigid motion: rotation about the grid's
// metric center by dyaw, then translation by (dx, dy). Bilinear, zero
// padding outside the source extent. Integer-cell translations are exact.
BevGrid warp(const BevGrid& grid, const PoseOffset& offset);

// Sub-grid covering `region`, which must lie within the grid extent and be
// aligned to cell boundaries. Georeferencing follows the region.
BevGrid crop(const BevGrid& grid, const Rect& region);

// Bilinear upsampling by an integer factor with edge clamping. Output cell
// centers sit at (i + 0.5) / factor - 0.5 in input cell-center coordinates.
BevGrid upsample_bilinear(const BevGrid& grid, int factor);

// Renders `src` onto a (rows x cols) lattice of cell size `resolution`
// centered on `frame`'s origin, axes aligned with `frame`. Sampling is
// bilinear with zero padding. Used to cut pose-centered crops out of a map.
BevGrid resample_centered(const BevGrid& src, const Pose2& frame, int rows,
                          int cols, double resolution);

}  // namespace lploc
