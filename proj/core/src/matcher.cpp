#include "lploc/matcher.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <stdexcept>
#include <string>

namespace lploc {

namespace {

constexpr double kYawMetresPerDeg = 0.5;  // tie-break weighting: 1 deg == 0.5 m

std::mutex& fftw_mutex() {
    static std::mutex m;
    return m;
}

void check_uniform_symmetric(const std::vector<double>& v, const char* axis) {
    if (v.empty()) {
        throw std::invalid_argument(std::string("OffsetGrid: empty ") + axis);
    }
    if (v.size() == 1) {
        if (std::abs(v[0]) > 1e-12) {
            throw std::invalid_argument(std::string("OffsetGrid: ") + axis +
                                        " must contain 0");
        }
        return;
    }
    const double step = v[1] - v[0];
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (std::abs((v[i] - v[i - 1]) - step) > 1e-9) {
            throw std::invalid_argument(std::string("OffsetGrid: ") + axis +
                                        " not uniformly spaced");
        }
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (std::abs(v[i] + v[v.size() - 1 - i]) > 1e-9) {
            throw std::invalid_argument(std::string("OffsetGrid: ") + axis +
                                        " not symmetric about 0");
        }
    }
    if (v.size() % 2 == 0) {
        throw std::invalid_argument(std::string("OffsetGrid: ") + axis +
                                    " must contain 0 (odd count)");
    }
}

double axis_step(const std::vector<double>& v) {
    return v.size() > 1 ? v[1] - v[0] : 0.0;
}

}  // namespace

std::vector<std::uint8_t> yaw_support_mask(int rows, int cols,
                                           const std::vector<double>& yaws) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(rows) * cols, 1);
    const double uc = cols / 2.0 - 0.5;
    const double vc = rows / 2.0 - 0.5;
    for (double yaw : yaws) {
        if (yaw == 0.0) continue;
        const double c = std::cos(yaw);
        const double s = std::sin(yaw);
        for (int r = 0; r < rows; ++r) {
            const double dv = r - vc;
            for (int cc = 0; cc < cols; ++cc) {
                const double du = cc - uc;
                const double su = c * du + s * dv + uc;
                const double sv = -s * du + c * dv + vc;
                if (su < 0.0 || su > cols - 1.0 || sv < 0.0 || sv > rows - 1.0) {
                    mask[static_cast<std::size_t>(r) * cols + cc] = 0;
                }
            }
        }
    }
    return mask;
}

namespace {

// Rotation of the embedding about its grid center, restricted to the common
// yaw support; shared by both scoring paths so they see identical content.
BevGrid rotate_embedding(const BevGrid& emb, double yaw,
                         const std::vector<std::uint8_t>& mask) {
    BevGrid out = yaw == 0.0 ? emb : warp(emb, PoseOffset(0.0, 0.0, yaw));
    for (int ch = 0; ch < out.channels(); ++ch) {
        auto plane = out.channel(ch);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) plane[i] = 0.0f;
        }
    }
    return out;
}

struct LatticeAlignment {
    int base_u = 0;       // online origin offset inside map, in cells
    int base_v = 0;
    std::vector<int> sx;  // x offsets in cells
    std::vector<int> sy;  // y offsets in cells
};

// Integer-lattice relation between the two embeddings and the offset grid.
// Returns nullopt when any quantity is not an integer multiple of the cell.
std::optional<LatticeAlignment> lattice_alignment(const BevGrid& online,
                                                  const BevGrid& map,
                                                  const OffsetGrid& grid) {
    const double res = online.resolution();
    auto as_cells = [&](double metres) -> std::optional<int> {
        const double cells = metres / res;
        const double r = std::round(cells);
        if (std::abs(cells - r) > 1e-6) return std::nullopt;
        return static_cast<int>(r);
    };
    LatticeAlignment a;
    auto bu = as_cells(online.origin_x() - map.origin_x());
    auto bv = as_cells(online.origin_y() - map.origin_y());
    if (!bu || !bv) return std::nullopt;
    a.base_u = *bu;
    a.base_v = *bv;
    for (double dx : grid.x_offsets) {
        auto c = as_cells(dx);
        if (!c) return std::nullopt;
        a.sx.push_back(*c);
    }
    for (double dy : grid.y_offsets) {
        auto c = as_cells(dy);
        if (!c) return std::nullopt;
        a.sy.push_back(*c);
    }
    return a;
}

void check_inputs(const BevGrid& online, const BevGrid& map, const OffsetGrid& grid) {
    grid.validate();
    if (std::abs(online.resolution() - map.resolution()) > 1e-9) {
        throw std::invalid_argument("score: resolution mismatch");
    }
    if (online.channels() != map.channels()) {
        throw std::invalid_argument("score: channel mismatch");
    }
    const double max_dx = std::abs(grid.x_offsets.back());
    const double max_dy = std::abs(grid.y_offsets.back());
    const double eps = 1e-6;
    if (online.origin_x() - max_dx < map.origin_x() - eps ||
        online.origin_y() - max_dy < map.origin_y() - eps ||
        online.origin_x() + online.extent_x() + max_dx >
            map.origin_x() + map.extent_x() + eps ||
        online.origin_y() + online.extent_y() + max_dy >
            map.origin_y() + map.extent_y() + eps) {
        throw std::invalid_argument(
            "score: map extent must cover the online footprint padded by the "
            "max translation");
    }
}

int next_fast_size(int n) {
    for (;; ++n) {
        int m = n;
        while (m % 2 == 0) m /= 2;
        while (m % 3 == 0) m /= 3;
        while (m % 5 == 0) m /= 5;
        if (m == 1) return n;
    }
}

}  // namespace

void OffsetGrid::validate() const {
    check_uniform_symmetric(x_offsets, "x");
    check_uniform_symmetric(y_offsets, "y");
    check_uniform_symmetric(yaw_offsets, "yaw");
}

double OffsetGrid::x_step() const { return axis_step(x_offsets); }
double OffsetGrid::y_step() const { return axis_step(y_offsets); }
double OffsetGrid::yaw_step() const { return axis_step(yaw_offsets); }

OffsetGrid default_offset_grid() {
    OffsetGrid g;
    for (int i = -10; i <= 10; ++i) {
        g.x_offsets.push_back(i * 0.05);
        g.y_offsets.push_back(i * 0.05);
    }
    for (int i = -3; i <= 3; ++i) {
        g.yaw_offsets.push_back(deg_to_rad(i * 0.5));
    }
    return g;
}

ScoreVolume score_direct(const BevGrid& online_emb, const BevGrid& map_emb,
                         const OffsetGrid& grid) {
    check_inputs(online_emb, map_emb, grid);
    const int ny = static_cast<int>(grid.y_offsets.size());
    const int nx = static_cast<int>(grid.x_offsets.size());
    const int nyaw = static_cast<int>(grid.yaw_offsets.size());
    ScoreVolume vol(nyaw, ny, nx);

    const auto align = lattice_alignment(online_emb, map_emb, grid);
    const double res = online_emb.resolution();
    const auto mask =
        yaw_support_mask(online_emb.rows(), online_emb.cols(), grid.yaw_offsets);

    for (int k = 0; k < nyaw; ++k) {
        const BevGrid rotated = rotate_embedding(online_emb, grid.yaw_offsets[k], mask);
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                double acc = 0.0;
                if (align) {
                    const int u0 = align->base_u + align->sx[ix];
                    const int v0 = align->base_v + align->sy[iy];
                    for (int ch = 0; ch < rotated.channels(); ++ch) {
                        for (int r = 0; r < rotated.rows(); ++r) {
                            const float* a = rotated.channel(ch).data() +
                                             static_cast<std::size_t>(r) * rotated.cols();
                            const float* b = map_emb.channel(ch).data() +
                                             static_cast<std::size_t>(v0 + r) * map_emb.cols() +
                                             u0;
                            for (int c = 0; c < rotated.cols(); ++c) {
                                acc += static_cast<double>(a[c]) * b[c];
                            }
                        }
                    }
                } else {
                    const double dx = grid.x_offsets[ix];
                    const double dy = grid.y_offsets[iy];
                    for (int ch = 0; ch < rotated.channels(); ++ch) {
                        for (int r = 0; r < rotated.rows(); ++r) {
                            const double py =
                                rotated.origin_y() + (r + 0.5) * res + dy;
                            for (int c = 0; c < rotated.cols(); ++c) {
                                const double px =
                                    rotated.origin_x() + (c + 0.5) * res + dx;
                                acc += static_cast<double>(rotated.at(ch, r, c)) *
                                       map_emb.sample_metric(ch, px, py);
                            }
                        }
                    }
                }
                vol.at(k, iy, ix) = acc;
            }
        }
    }
    return vol;
}

ScoreVolume score_fft(const BevGrid& online_emb, const BevGrid& map_emb,
                      const OffsetGrid& grid) {
    check_inputs(online_emb, map_emb, grid);
    const auto align = lattice_alignment(online_emb, map_emb, grid);
    if (!align) {
        throw std::invalid_argument(
            "score_fft: lattices and offsets must be integer multiples of the cell "
            "size");
    }

    const int mr = map_emb.rows();
    const int mc = map_emb.cols();
    const int nr = next_fast_size(mr);
    const int nc = next_fast_size(mc);
    const int ncc = nc / 2 + 1;  // r2c packed width
    const std::size_t real_n = static_cast<std::size_t>(nr) * nc;
    const std::size_t cplx_n = static_cast<std::size_t>(nr) * ncc;

    double* real_buf = fftw_alloc_real(real_n);
    fftw_complex* cplx_buf = fftw_alloc_complex(cplx_n);
    std::vector<std::complex<double>> map_f(cplx_n * map_emb.channels());
    std::vector<std::complex<double>> spec(cplx_n);

    fftw_plan fwd, inv;
    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fwd = fftw_plan_dft_r2c_2d(nr, nc, real_buf, cplx_buf, FFTW_ESTIMATE);
        inv = fftw_plan_dft_c2r_2d(nr, nc, cplx_buf, real_buf, FFTW_ESTIMATE);
    }

    auto load_grid = [&](const BevGrid& g, int ch) {
        std::fill(real_buf, real_buf + real_n, 0.0);
        const auto plane = g.channel(ch);
        for (int r = 0; r < g.rows(); ++r) {
            const float* src = plane.data() + static_cast<std::size_t>(r) * g.cols();
            double* dst = real_buf + static_cast<std::size_t>(r) * nc;
            for (int c = 0; c < g.cols(); ++c) dst[c] = src[c];
        }
    };

    for (int ch = 0; ch < map_emb.channels(); ++ch) {
        load_grid(map_emb, ch);
        fftw_execute(fwd);
        std::complex<double>* dst = map_f.data() + cplx_n * ch;
        for (std::size_t i = 0; i < cplx_n; ++i) {
            dst[i] = {cplx_buf[i][0], cplx_buf[i][1]};
        }
    }

    const int ny = static_cast<int>(grid.y_offsets.size());
    const int nx = static_cast<int>(grid.x_offsets.size());
    const int nyaw = static_cast<int>(grid.yaw_offsets.size());
    ScoreVolume vol(nyaw, ny, nx);
    const auto mask =
        yaw_support_mask(online_emb.rows(), online_emb.cols(), grid.yaw_offsets);

    for (int k = 0; k < nyaw; ++k) {
        const BevGrid rotated = rotate_embedding(online_emb, grid.yaw_offsets[k], mask);
        std::fill(spec.begin(), spec.end(), std::complex<double>(0.0, 0.0));
        for (int ch = 0; ch < rotated.channels(); ++ch) {
            load_grid(rotated, ch);
            fftw_execute(fwd);
            const std::complex<double>* mf = map_f.data() + cplx_n * ch;
            for (std::size_t i = 0; i < cplx_n; ++i) {
                // conj(F(online)) * F(map): cross-correlation over all shifts
                spec[i] += std::conj(std::complex<double>(cplx_buf[i][0], cplx_buf[i][1])) *
                           mf[i];
            }
        }
        for (std::size_t i = 0; i < cplx_n; ++i) {
            cplx_buf[i][0] = spec[i].real();
            cplx_buf[i][1] = spec[i].imag();
        }
        fftw_execute(inv);
        const double scale = 1.0 / (static_cast<double>(nr) * nc);
        for (int iy = 0; iy < ny; ++iy) {
            const int dv = align->base_v + align->sy[iy];
            for (int ix = 0; ix < nx; ++ix) {
                const int du = align->base_u + align->sx[ix];
                vol.at(k, iy, ix) =
                    real_buf[static_cast<std::size_t>(dv) * nc + du] * scale;
            }
        }
    }

    {
        std::lock_guard<std::mutex> lock(fftw_mutex());
        fftw_destroy_plan(fwd);
        fftw_destroy_plan(inv);
    }
    fftw_free(real_buf);
    fftw_free(cplx_buf);
    return vol;
}

ProbVolume softmax(const ScoreVolume& vol) {
    ProbVolume out;
    out.n_yaw = vol.n_yaw;
    out.n_y = vol.n_y;
    out.n_x = vol.n_x;
    out.p.resize(vol.scores.size());
    double max_s = vol.scores[0];
    for (double s : vol.scores) {
        if (!std::isfinite(s)) {
            throw std::invalid_argument("softmax: non-finite score");
        }
        max_s = std::max(max_s, s);
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < vol.scores.size(); ++i) {
        out.p[i] = std::exp(vol.scores[i] - max_s);
        sum += out.p[i];
    }
    for (auto& p : out.p) p /= sum;
    return out;
}

PoseOffset argmax_pose(const ScoreVolume& vol, const OffsetGrid& grid) {
    grid.validate();
    if (vol.n_x != static_cast<int>(grid.x_offsets.size()) ||
        vol.n_y != static_cast<int>(grid.y_offsets.size()) ||
        vol.n_yaw != static_cast<int>(grid.yaw_offsets.size())) {
        throw std::invalid_argument("argmax_pose: volume shape does not match grid");
    }
    auto norm2 = [&](int k, int iy, int ix) {
        const double dx = grid.x_offsets[ix];
        const double dy = grid.y_offsets[iy];
        const double dyaw_m = rad_to_deg(grid.yaw_offsets[k]) * kYawMetresPerDeg;
        return dx * dx + dy * dy + dyaw_m * dyaw_m;
    };

    int bk = 0, by = 0, bx = 0;
    double best = vol.at(0, 0, 0);
    double best_norm = norm2(0, 0, 0);
    for (int k = 0; k < vol.n_yaw; ++k) {
        for (int iy = 0; iy < vol.n_y; ++iy) {
            for (int ix = 0; ix < vol.n_x; ++ix) {
                const double s = vol.at(k, iy, ix);
                if (s > best) {
                    best = s;
                    best_norm = norm2(k, iy, ix);
                    bk = k;
                    by = iy;
                    bx = ix;
                } else if (s == best) {
                    const double n = norm2(k, iy, ix);
                    if (n < best_norm) {
                        best_norm = n;
                        bk = k;
                        by = iy;
                        bx = ix;
                    }
                    // equal norm: keep the earlier (yaw, y, x) candidate
                }
            }
        }
    }
    return PoseOffset(grid.x_offsets[bx], grid.y_offsets[by], grid.yaw_offsets[bk]);
}

LocalizerPipeline LocalizerPipeline::identity(const GridSpec& fine) {
    LocalizerPipeline p;
    p.mode = Embed::kIdentity;
    p.fine_spec = fine;
    return p;
}

int translation_pad_cells(const GridSpec& fine_spec, const OffsetGrid& grid) {
    const double max_t = std::max(std::abs(grid.x_offsets.back()),
                                  std::abs(grid.y_offsets.back()));
    return static_cast<int>(std::ceil(max_t / fine_spec.resolution - 1e-9));
}

BevGrid make_map_crop(const IntensityMap& map, const Pose2& prior,
                      const GridSpec& fine_spec, const OffsetGrid& grid) {
    const int pad = translation_pad_cells(fine_spec, grid);
    return resample_centered(map.grid, prior, fine_spec.rows() + 2 * pad,
                             fine_spec.cols() + 2 * pad, fine_spec.resolution);
}

PoseEstimate localize(std::span<const LidarPoint> sweep, const IntensityMap& map,
                      const Pose2& prior, const LocalizerPipeline& pipeline,
                      const OffsetGrid& grid) {
    if (!map.contains(prior.x, prior.y)) {
        throw std::invalid_argument("localize: prior outside map extent");
    }
    grid.validate();

    const BevGrid fine = voxelize(sweep, pipeline.fine_spec);
    BevGrid online_emb;
    if (pipeline.mode == LocalizerPipeline::Embed::kIdentity) {
        online_emb = identity_embed(fine);
    } else {
        if (pipeline.g == nullptr || pipeline.f == nullptr) {
            throw std::invalid_argument("localize: learned mode requires f and g");
        }
        online_emb = pipeline.g->forward(fine);
        if (pipeline.fusion != nullptr) {
            if (pipeline.base == nullptr) {
                throw std::invalid_argument("localize: fusion requires the coarse base");
            }
            const BevGrid coarse = voxelize(sweep, pipeline.coarse_spec);
            const BevGrid coarse_feat = pipeline.base->forward(coarse);
            online_emb = fuse_multires(online_emb, coarse_feat, *pipeline.fusion);
        }
    }

    const BevGrid map_crop = make_map_crop(map, prior, pipeline.fine_spec, grid);
    BevGrid map_emb;
    if (pipeline.mode == LocalizerPipeline::Embed::kIdentity) {
        map_emb = identity_embed(map_crop);
    } else {
        map_emb = pipeline.f->forward(map_crop);
    }

    const ScoreVolume vol = score_fft(online_emb, map_emb, grid);
    const PoseOffset off = argmax_pose(vol, grid);

    PoseEstimate est;
    est.offset = off;
    est.corrected_pose = compose_offset(prior, off);
    const auto ix = std::distance(grid.x_offsets.begin(),
                                  std::find(grid.x_offsets.begin(),
                                            grid.x_offsets.end(), off.dx));
    const auto iy = std::distance(grid.y_offsets.begin(),
                                  std::find(grid.y_offsets.begin(),
                                            grid.y_offsets.end(), off.dy));
    const auto ik = std::distance(grid.yaw_offsets.begin(),
                                  std::find(grid.yaw_offsets.begin(),
                                            grid.yaw_offsets.end(), off.dyaw));
    est.score = vol.at(static_cast<int>(ik), static_cast<int>(iy), static_cast<int>(ix));
    if (pipeline.keep_prob_volume) {
        est.prob_volume = softmax(vol);
    }
    return est;
}

}  // namespace lploc
