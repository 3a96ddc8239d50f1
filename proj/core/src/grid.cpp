#include "lploc/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lploc {

namespace {

int metric_to_cells(double extent, double resolution, const char* what) {
    const double cells = extent / resolution;
    const double rounded = std::round(cells);
    if (rounded < 1.0 || std::abs(cells - rounded) > 1e-6) {
        throw std::invalid_argument(std::string(what) +
                                    ": extent must be a positive multiple of resolution");
    }
    return static_cast<int>(rounded);
}

// Kills float residue so exact-lattice sample positions hit cells exactly.
double snap_near_integer(double u) {
    const double r = std::round(u);
    return std::abs(u - r) < 1e-6 ? r : u;
}

}  // namespace

int GridSpec::rows() const { return metric_to_cells(extent_y, resolution, "GridSpec"); }
int GridSpec::cols() const { return metric_to_cells(extent_x, resolution, "GridSpec"); }

void GridSpec::validate() const {
    if (!(resolution > 0.0)) {
        throw std::invalid_argument("GridSpec: resolution must be positive");
    }
    (void)rows();
    (void)cols();
    if (height_slices < 0) {
        throw std::invalid_argument("GridSpec: height_slices must be >= 0");
    }
    if (height_slices > 0 && !(height_max > height_min)) {
        throw std::invalid_argument("GridSpec: empty height range");
    }
}

BevGrid::BevGrid(int rows, int cols, int channels, double resolution,
                 double origin_x, double origin_y)
    : rows_(rows),
      cols_(cols),
      channels_(channels),
      resolution_(resolution),
      origin_x_(origin_x),
      origin_y_(origin_y),
      data_(static_cast<std::size_t>(rows) * cols * channels, 0.0f) {
    if (rows <= 0 || cols <= 0 || channels <= 0 || !(resolution > 0.0)) {
        throw std::invalid_argument("BevGrid: invalid shape");
    }
}

BevGrid BevGrid::from_spec(const GridSpec& spec) {
    spec.validate();
    return BevGrid(spec.rows(), spec.cols(), spec.channels(), spec.resolution,
                   spec.center.x - 0.5 * spec.extent_x,
                   spec.center.y - 0.5 * spec.extent_y);
}

float BevGrid::sample_cells(int ch, double u, double v) const {
    u = snap_near_integer(u);
    v = snap_near_integer(v);
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    const int c0 = static_cast<int>(fu);
    const int r0 = static_cast<int>(fv);
    const double ax = u - fu;
    const double ay = v - fv;

    auto read = [&](int r, int c) -> double {
        if (r < 0 || r >= rows_ || c < 0 || c >= cols_) return 0.0;
        return data_[index(ch, r, c)];
    };

    const double v00 = read(r0, c0);
    const double v01 = read(r0, c0 + 1);
    const double v10 = read(r0 + 1, c0);
    const double v11 = read(r0 + 1, c0 + 1);
    return static_cast<float>((1.0 - ay) * ((1.0 - ax) * v00 + ax * v01) +
                              ay * ((1.0 - ax) * v10 + ax * v11));
}

float BevGrid::sample_metric(int ch, double x, double y) const {
    const double u = (x - origin_x_) / resolution_ - 0.5;
    const double v = (y - origin_y_) / resolution_ - 0.5;
    return sample_cells(ch, u, v);
}

BevGrid voxelize(std::span<const LidarPoint> points, const GridSpec& spec) {
    spec.validate();
    BevGrid grid = BevGrid::from_spec(spec);
    const int rows = grid.rows();
    const int cols = grid.cols();
    const int slices = spec.height_slices;
    const double slice_h =
        slices > 0 ? (spec.height_max - spec.height_min) / slices : 0.0;

    std::vector<double> intensity_sum(static_cast<std::size_t>(rows) * cols, 0.0);
    std::vector<std::uint32_t> hits(static_cast<std::size_t>(rows) * cols, 0);

    for (std::size_t i = 0; i < points.size(); ++i) {
        const LidarPoint& p = points[i];
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
            !std::isfinite(p.intensity)) {
            throw std::invalid_argument("voxelize: non-finite point at index " +
                                        std::to_string(i));
        }
        if (p.intensity < 0.0f || p.intensity > 1.0f) {
            throw std::invalid_argument("voxelize: intensity outside [0,1] at index " +
                                        std::to_string(i));
        }
        const double cx = (p.x - grid.origin_x()) / spec.resolution;
        const double cy = (p.y - grid.origin_y()) / spec.resolution;
        if (cx < 0.0 || cy < 0.0) continue;
        const int c = static_cast<int>(cx);
        const int r = static_cast<int>(cy);
        if (c >= cols || r >= rows) continue;

        if (slices > 0) {
            const double sz = (p.z - spec.height_min) / slice_h;
            if (sz < 0.0) continue;
            const int s = static_cast<int>(sz);
            if (s >= slices) continue;
            grid.at(s, r, c) += 1.0f;
        }
        const std::size_t cell = static_cast<std::size_t>(r) * cols + c;
        intensity_sum[cell] += p.intensity;
        hits[cell] += 1;
    }

    const int ich = grid.intensity_channel();
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const std::size_t cell = static_cast<std::size_t>(r) * cols + c;
            if (hits[cell] > 0) {
                grid.at(ich, r, c) = static_cast<float>(intensity_sum[cell] / hits[cell]);
            }
        }
    }
    return grid;
}

BevGrid warp(const BevGrid& grid, const PoseOffset& offset) {
    BevGrid out(grid.rows(), grid.cols(), grid.channels(), grid.resolution(),
                grid.origin_x(), grid.origin_y());
    const double res = grid.resolution();
    const double uc = (grid.center_x() - grid.origin_x()) / res - 0.5;
    const double vc = (grid.center_y() - grid.origin_y()) / res - 0.5;
    const double c = std::cos(offset.dyaw);
    const double s = std::sin(offset.dyaw);
    const double tu = offset.dx / res;
    const double tv = offset.dy / res;

    for (int ch = 0; ch < grid.channels(); ++ch) {
        for (int r = 0; r < out.rows(); ++r) {
            const double dv = r - vc - tv;
            for (int cidx = 0; cidx < out.cols(); ++cidx) {
                const double du = cidx - uc - tu;
                // Inverse motion: rotate by -dyaw about the grid center.
                const double su = c * du + s * dv + uc;
                const double sv = -s * du + c * dv + vc;
                out.at(ch, r, cidx) = grid.sample_cells(ch, su, sv);
            }
        }
    }
    return out;
}

BevGrid crop(const BevGrid& grid, const Rect& region) {
    const double res = grid.resolution();
    const double eps = 1e-6 * res;
    if (region.min_x < grid.origin_x() - eps || region.min_y < grid.origin_y() - eps ||
        region.max_x > grid.origin_x() + grid.extent_x() + eps ||
        region.max_y > grid.origin_y() + grid.extent_y() + eps) {
        throw std::invalid_argument("crop: region outside grid extent");
    }
    auto to_cell = [&](double v, double origin) {
        const double cell = (v - origin) / res;
        const double rounded = std::round(cell);
        if (std::abs(cell - rounded) > 1e-6) {
            throw std::invalid_argument("crop: region not aligned to cell boundaries");
        }
        return static_cast<int>(rounded);
    };
    const int c0 = to_cell(region.min_x, grid.origin_x());
    const int r0 = to_cell(region.min_y, grid.origin_y());
    const int c1 = to_cell(region.max_x, grid.origin_x());
    const int r1 = to_cell(region.max_y, grid.origin_y());
    if (c1 <= c0 || r1 <= r0) {
        throw std::invalid_argument("crop: empty region");
    }

    BevGrid out(r1 - r0, c1 - c0, grid.channels(), res,
                grid.origin_x() + c0 * res, grid.origin_y() + r0 * res);
    for (int ch = 0; ch < grid.channels(); ++ch) {
        for (int r = r0; r < r1; ++r) {
            for (int c = c0; c < c1; ++c) {
                out.at(ch, r - r0, c - c0) = grid.at(ch, r, c);
            }
        }
    }
    return out;
}

BevGrid upsample_bilinear(const BevGrid& grid, int factor) {
    if (factor < 1) {
        throw std::invalid_argument("upsample_bilinear: factor must be >= 1");
    }
    if (factor == 1) return grid;

    BevGrid out(grid.rows() * factor, grid.cols() * factor, grid.channels(),
                grid.resolution() / factor, grid.origin_x(), grid.origin_y());
    auto clamp = [](double v, double lo, double hi) {
        return v < lo ? lo : (v > hi ? hi : v);
    };
    for (int ch = 0; ch < grid.channels(); ++ch) {
        for (int r = 0; r < out.rows(); ++r) {
            const double sv = clamp((r + 0.5) / factor - 0.5, 0.0, grid.rows() - 1.0);
            for (int c = 0; c < out.cols(); ++c) {
                const double su = clamp((c + 0.5) / factor - 0.5, 0.0, grid.cols() - 1.0);
                out.at(ch, r, c) = grid.sample_cells(ch, su, sv);
            }
        }
    }
    return out;
}

BevGrid resample_centered(const BevGrid& src, const Pose2& frame, int rows,
                          int cols, double resolution) {
    BevGrid out(rows, cols, src.channels(), resolution,
                -0.5 * cols * resolution, -0.5 * rows * resolution);
    for (int ch = 0; ch < src.channels(); ++ch) {
        for (int r = 0; r < rows; ++r) {
            const double py = out.origin_y() + (r + 0.5) * resolution;
            for (int c = 0; c < cols; ++c) {
                const double px = out.origin_x() + (c + 0.5) * resolution;
                const Vec2 q = apply(frame, Vec2{px, py});
                out.at(ch, r, c) = src.sample_metric(ch, q.x, q.y);
            }
        }
    }
    return out;
}

}  // namespace lploc
