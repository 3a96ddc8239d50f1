#include "lploc/learn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lploc/rng.hpp"

namespace lploc {

namespace {

double snap_cell(double u) {
    const double r = std::round(u);
    return std::abs(u - r) < 1e-6 ? r : u;
}

// Rotation about the tensor center, identical math to warp() with a zero
// translation, operating on a single-channel tensor.
Tensor rotate_tensor(const Tensor& in, double yaw) {
    if (yaw == 0.0) return in;
    Tensor out(in.ch, in.h, in.w);
    const double uc = in.w / 2.0 - 0.5;
    const double vc = in.h / 2.0 - 0.5;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    for (int ch = 0; ch < in.ch; ++ch) {
        for (int y = 0; y < in.h; ++y) {
            const double dv = y - vc;
            for (int x = 0; x < in.w; ++x) {
                const double du = x - uc;
                const double su = snap_cell(c * du + s * dv + uc);
                const double sv = snap_cell(-s * du + c * dv + vc);
                const int c0 = static_cast<int>(std::floor(su));
                const int r0 = static_cast<int>(std::floor(sv));
                const double ax = su - c0;
                const double ay = sv - r0;
                auto read = [&](int r, int cc) -> double {
                    if (r < 0 || r >= in.h || cc < 0 || cc >= in.w) return 0.0;
                    return in.at(ch, r, cc);
                };
                out.at(ch, y, x) =
                    (1 - ay) * ((1 - ax) * read(r0, c0) + ax * read(r0, c0 + 1)) +
                    ay * ((1 - ax) * read(r0 + 1, c0) + ax * read(r0 + 1, c0 + 1));
            }
        }
    }
    return out;
}

// Transpose of rotate_tensor: scatter the output gradient back through the
// bilinear weights.
Tensor rotate_tensor_transpose(const Tensor& d_out, double yaw) {
    if (yaw == 0.0) return d_out;
    Tensor d_in(d_out.ch, d_out.h, d_out.w);
    const double uc = d_out.w / 2.0 - 0.5;
    const double vc = d_out.h / 2.0 - 0.5;
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    for (int ch = 0; ch < d_out.ch; ++ch) {
        for (int y = 0; y < d_out.h; ++y) {
            const double dv = y - vc;
            for (int x = 0; x < d_out.w; ++x) {
                const double g = d_out.at(ch, y, x);
                if (g == 0.0) continue;
                const double du = x - uc;
                const double su = snap_cell(c * du + s * dv + uc);
                const double sv = snap_cell(-s * du + c * dv + vc);
                const int c0 = static_cast<int>(std::floor(su));
                const int r0 = static_cast<int>(std::floor(sv));
                const double ax = su - c0;
                const double ay = sv - r0;
                auto add = [&](int r, int cc, double w) {
                    if (r < 0 || r >= d_out.h || cc < 0 || cc >= d_out.w) return;
                    d_in.at(ch, r, cc) += g * w;
                };
                add(r0, c0, (1 - ay) * (1 - ax));
                add(r0, c0 + 1, (1 - ay) * ax);
                add(r0 + 1, c0, ay * (1 - ax));
                add(r0 + 1, c0 + 1, ay * ax);
            }
        }
    }
    return d_in;
}

std::vector<int> offsets_in_cells(const std::vector<double>& offsets, double res,
                                  const char* what) {
    std::vector<int> out;
    out.reserve(offsets.size());
    for (double v : offsets) {
        const double cells = v / res;
        const double r = std::round(cells);
        if (std::abs(cells - r) > 1e-6) {
            throw std::invalid_argument(std::string("training ") + what +
                                        " offsets must be integer cells");
        }
        out.push_back(static_cast<int>(r));
    }
    return out;
}

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    int t = 0;
};

// Flat view over the unfrozen parameters, in a fixed declaration order:
// f layers, g layers, fusion conv weights, fusion bias, mix weight.
struct ParamView {
    std::vector<float*> ptr;
    std::vector<const double*> grad;

    static ParamView build(LocalizerModel& model, const GradientSet& g) {
        ParamView pv;
        auto add_stack = [&](ConvStack& s, const StackGrads& sg) {
            for (std::size_t i = 0; i < s.layers().size(); ++i) {
                auto& layer = s.layers()[i];
                for (std::size_t j = 0; j < layer.w.size(); ++j) {
                    pv.ptr.push_back(&layer.w[j]);
                    pv.grad.push_back(&sg.dw[i][j]);
                }
                for (std::size_t j = 0; j < layer.b.size(); ++j) {
                    pv.ptr.push_back(&layer.b[j]);
                    pv.grad.push_back(&sg.db[i][j]);
                }
            }
        };
        add_stack(model.f, g.f);
        add_stack(model.g, g.g);
        if (model.use_fusion) {
            for (std::size_t j = 0; j < model.fusion.conv_w.size(); ++j) {
                pv.ptr.push_back(&model.fusion.conv_w[j]);
                pv.grad.push_back(&g.fusion_w[j]);
            }
            pv.ptr.push_back(&model.fusion.conv_b);
            pv.grad.push_back(&g.fusion_b);
            pv.ptr.push_back(&model.fusion.mix_weight);
            pv.grad.push_back(&g.fusion_mix);
        }
        return pv;
    }
};

GradientSet zero_gradients(const LocalizerModel& model) {
    GradientSet g;
    g.f = model.f.zero_grads();
    g.g = model.g.zero_grads();
    g.fusion_w.assign(model.fusion.conv_w.size(), 0.0);
    g.fusion_b = 0.0;
    g.fusion_mix = 0.0;
    return g;
}

void accumulate(GradientSet& into, const GradientSet& from) {
    into.f.accumulate(from.f);
    into.g.accumulate(from.g);
    for (std::size_t i = 0; i < into.fusion_w.size(); ++i) {
        into.fusion_w[i] += from.fusion_w[i];
    }
    into.fusion_b += from.fusion_b;
    into.fusion_mix += from.fusion_mix;
}

void scale(GradientSet& g, double s) {
    g.f.scale(s);
    g.g.scale(s);
    for (auto& v : g.fusion_w) v *= s;
    g.fusion_b *= s;
    g.fusion_mix *= s;
}

}  // namespace

void TrainConfig::validate(const OffsetGrid& grid) const {
    if (steps < 0 || batch_size < 1) {
        throw std::invalid_argument("TrainConfig: bad steps/batch_size");
    }
    if (!(learning_rate > 0.0)) {
        throw std::invalid_argument("TrainConfig: learning_rate must be positive");
    }
    const double half_x = grid.x_step() / 2.0;
    const double half_yaw = grid.yaw_step() / 2.0;
    if (noise_max_trans > std::abs(grid.x_offsets.back()) + half_x + 1e-12 ||
        noise_max_rot > std::abs(grid.yaw_offsets.back()) + half_yaw + 1e-12) {
        throw std::invalid_argument("TrainConfig: noise envelope exceeds search envelope");
    }
}

GridIndex snap_to_grid(const OffsetGrid& grid, const PoseOffset& offset) {
    grid.validate();
    // nearest cell relative to the zero-centered axis; halves away from zero
    auto snap_axis = [](const std::vector<double>& axis, double step, double v,
                        const char* what) {
        const int half = static_cast<int>(axis.size()) / 2;
        const double snapped = std::round(v / step);
        if (std::abs(snapped) > half + 1e-9) {
            throw std::invalid_argument(std::string("snap_to_grid: ") + what +
                                        " offset outside grid envelope");
        }
        return half + static_cast<int>(snapped);
    };
    GridIndex idx;
    idx.ix = snap_axis(grid.x_offsets, grid.x_step() > 0 ? grid.x_step() : 1.0,
                       offset.dx, "x");
    idx.iy = snap_axis(grid.y_offsets, grid.y_step() > 0 ? grid.y_step() : 1.0,
                       offset.dy, "y");
    idx.iyaw = snap_axis(grid.yaw_offsets,
                         grid.yaw_step() > 0 ? grid.yaw_step() : 1.0, offset.dyaw,
                         "yaw");
    return idx;
}

ProbVolume one_hot_target(const OffsetGrid& grid, const PoseOffset& gt_offset) {
    const GridIndex idx = snap_to_grid(grid, gt_offset);
    ProbVolume out;
    out.n_yaw = static_cast<int>(grid.yaw_offsets.size());
    out.n_y = static_cast<int>(grid.y_offsets.size());
    out.n_x = static_cast<int>(grid.x_offsets.size());
    out.p.assign(static_cast<std::size_t>(out.n_yaw) * out.n_y * out.n_x, 0.0);
    out.p[out.index(idx.iyaw, idx.iy, idx.ix)] = 1.0;
    return out;
}

double loss_ce(const ProbVolume& p, const ProbVolume& target) {
    if (p.p.size() != target.p.size()) {
        throw std::invalid_argument("loss_ce: shape mismatch");
    }
    double sum = 0.0;
    std::size_t ones = 0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < target.p.size(); ++i) {
        sum += target.p[i];
        if (target.p[i] != 0.0) {
            if (std::abs(target.p[i] - 1.0) > 1e-12) {
                throw std::invalid_argument("loss_ce: target is not one-hot");
            }
            ++ones;
            idx = i;
        }
    }
    if (ones != 1 || std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("loss_ce: target is not one-hot");
    }
    const double q = std::min(std::max(p.p[idx], 1e-300), 1.0);
    return -std::log(q);
}

double forward_loss(const LocalizerModel& model, const OffsetGrid& grid,
                    const TrainExample& ex, ForwardCache* cache) {
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;

    c.g_out = model.g.forward(ex.fine, &c.g_cache);
    if (model.use_fusion) {
        c.base_out = model.base.forward(ex.coarse);
        Tensor cropped(c.base_out.ch, ex.coarse_crop_h, ex.coarse_crop_w);
        for (int ch = 0; ch < c.base_out.ch; ++ch) {
            for (int y = 0; y < ex.coarse_crop_h; ++y) {
                for (int x = 0; x < ex.coarse_crop_w; ++x) {
                    cropped.at(ch, y, x) =
                        c.base_out.at(ch, ex.coarse_crop_r0 + y, ex.coarse_crop_c0 + x);
                }
            }
        }
        c.coarse_cropped = std::move(cropped);
        c.proj = conv1x1(c.coarse_cropped, model.fusion);
        c.upsampled = upsample_tensor(c.proj, ex.up_factor);
        if (c.upsampled.h != c.g_out.h || c.upsampled.w != c.g_out.w) {
            throw std::invalid_argument("forward_loss: fusion dims mismatch");
        }
        c.online_emb = c.g_out;
        for (std::size_t i = 0; i < c.online_emb.v.size(); ++i) {
            c.online_emb.v[i] += model.fusion.mix_weight * c.upsampled.v[i];
        }
    } else {
        c.online_emb = c.g_out;
    }

    c.map_emb = model.f.forward(ex.map_crop, &c.f_cache);

    const auto sx = offsets_in_cells(grid.x_offsets, ex.resolution, "x");
    const auto sy = offsets_in_cells(grid.y_offsets, ex.resolution, "y");
    const int nx = static_cast<int>(sx.size());
    const int ny = static_cast<int>(sy.size());
    const int nyaw = static_cast<int>(grid.yaw_offsets.size());
    const int H = c.online_emb.h;
    const int W = c.online_emb.w;
    if (c.map_emb.h != H + 2 * ex.pad || c.map_emb.w != W + 2 * ex.pad) {
        throw std::invalid_argument("forward_loss: map crop dims mismatch");
    }

    c.scores = ScoreVolume(nyaw, ny, nx);
    c.rotated.clear();
    c.rotated.reserve(nyaw);
    const auto mask = yaw_support_mask(H, W, grid.yaw_offsets);
    for (int k = 0; k < nyaw; ++k) {
        Tensor rot_k = rotate_tensor(c.online_emb, grid.yaw_offsets[k]);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) rot_k.v[i] = 0.0;
        }
        c.rotated.push_back(std::move(rot_k));
        const Tensor& rot = c.rotated.back();
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const int v0 = ex.pad + sy[iy];
                const int u0 = ex.pad + sx[ix];
                double acc = 0.0;
                for (int r = 0; r < H; ++r) {
                    const double* a = rot.v.data() + static_cast<std::size_t>(r) * W;
                    const double* b = c.map_emb.v.data() +
                                      static_cast<std::size_t>(v0 + r) * c.map_emb.w + u0;
                    for (int cc = 0; cc < W; ++cc) {
                        acc += a[cc] * b[cc];
                    }
                }
                c.scores.at(k, iy, ix) = acc;
            }
        }
    }

    // softmax + cross-entropy in log-sum-exp form
    double smax = c.scores.scores[0];
    for (double s : c.scores.scores) smax = std::max(smax, s);
    double sum = 0.0;
    for (double s : c.scores.scores) sum += std::exp(s - smax);
    c.prob.n_yaw = nyaw;
    c.prob.n_y = ny;
    c.prob.n_x = nx;
    c.prob.p.resize(c.scores.scores.size());
    for (std::size_t i = 0; i < c.scores.scores.size(); ++i) {
        c.prob.p[i] = std::exp(c.scores.scores[i] - smax) / sum;
    }
    const double s_t = c.scores.at(ex.target.iyaw, ex.target.iy, ex.target.ix);
    c.loss = std::log(sum) - (s_t - smax);
    return c.loss;
}

double GradientSet::max_abs() const {
    double m = std::max(f.max_abs(), g.max_abs());
    for (double v : fusion_w) m = std::max(m, std::abs(v));
    m = std::max(m, std::abs(fusion_b));
    m = std::max(m, std::abs(fusion_mix));
    return m;
}

GradientSet backward(const LocalizerModel& model, const OffsetGrid& grid,
                     const TrainExample& ex, const ForwardCache& cache) {
    if (cache.rotated.empty()) {
        throw std::invalid_argument("backward: forward activations missing");
    }
    GradientSet grads = zero_gradients(model);

    const auto sx = offsets_in_cells(grid.x_offsets, ex.resolution, "x");
    const auto sy = offsets_in_cells(grid.y_offsets, ex.resolution, "y");
    const int nx = static_cast<int>(sx.size());
    const int ny = static_cast<int>(sy.size());
    const int nyaw = static_cast<int>(grid.yaw_offsets.size());
    const int H = cache.online_emb.h;
    const int W = cache.online_emb.w;

    // dL/dscore = p - onehot
    std::vector<double> ds(cache.prob.p);
    ds[cache.prob.index(ex.target.iyaw, ex.target.iy, ex.target.ix)] -= 1.0;

    Tensor d_online(1, H, W);
    Tensor d_map(1, cache.map_emb.h, cache.map_emb.w);
    const auto mask = yaw_support_mask(H, W, grid.yaw_offsets);
    for (int k = 0; k < nyaw; ++k) {
        Tensor d_rot(1, H, W);
        const Tensor& rot = cache.rotated[k];
        for (int iy = 0; iy < ny; ++iy) {
            for (int ix = 0; ix < nx; ++ix) {
                const double g = ds[cache.prob.index(k, iy, ix)];
                if (g == 0.0) continue;
                const int v0 = ex.pad + sy[iy];
                const int u0 = ex.pad + sx[ix];
                for (int r = 0; r < H; ++r) {
                    double* dr = d_rot.v.data() + static_cast<std::size_t>(r) * W;
                    const double* a = rot.v.data() + static_cast<std::size_t>(r) * W;
                    const double* m = cache.map_emb.v.data() +
                                      static_cast<std::size_t>(v0 + r) * cache.map_emb.w +
                                      u0;
                    double* dm = d_map.v.data() +
                                 static_cast<std::size_t>(v0 + r) * d_map.w + u0;
                    for (int cc = 0; cc < W; ++cc) {
                        dr[cc] += g * m[cc];
                        dm[cc] += g * a[cc];
                    }
                }
            }
        }
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) d_rot.v[i] = 0.0;
        }
        const Tensor d_emb = rotate_tensor_transpose(d_rot, grid.yaw_offsets[k]);
        for (std::size_t i = 0; i < d_online.v.size(); ++i) {
            d_online.v[i] += d_emb.v[i];
        }
    }

    if (!model.f.frozen()) {
        model.f.backward(d_map, cache.f_cache, grads.f);
    }

    Tensor d_gout = d_online;
    if (model.use_fusion) {
        grads.fusion_mix = 0.0;
        for (std::size_t i = 0; i < d_online.v.size(); ++i) {
            grads.fusion_mix +=
                static_cast<double>(d_online.v[i]) * cache.upsampled.v[i];
        }
        Tensor d_up(1, cache.upsampled.h, cache.upsampled.w);
        for (std::size_t i = 0; i < d_up.v.size(); ++i) {
            d_up.v[i] = static_cast<double>(model.fusion.mix_weight) * d_online.v[i];
        }
        const Tensor d_proj =
            upsample_transpose(d_up, ex.up_factor, cache.proj.h, cache.proj.w);
        for (int ch = 0; ch < cache.coarse_cropped.ch; ++ch) {
            double acc = 0.0;
            for (int y = 0; y < d_proj.h; ++y) {
                for (int x = 0; x < d_proj.w; ++x) {
                    acc += static_cast<double>(d_proj.at(0, y, x)) *
                           cache.coarse_cropped.at(ch, y, x);
                }
            }
            grads.fusion_w[ch] = acc;
        }
        double db = 0.0;
        for (double v : d_proj.v) db += v;
        grads.fusion_b = db;
        // the coarse base is frozen: gradient stops here
    }

    if (!model.g.frozen()) {
        model.g.backward(d_gout, cache.g_cache, grads.g);
    }
    return grads;
}

GradientSet fd_gradient_oracle(LocalizerModel& model, const OffsetGrid& grid,
                               const TrainExample& ex, double step) {
    if (!(step > 0.0)) {
        throw std::invalid_argument("fd_gradient_oracle: step must be positive");
    }
    GradientSet grads = zero_gradients(model);

    auto probe = [&](float* p, double* out) {
        const float saved = *p;
        *p = static_cast<float>(saved + step);
        const double lp = forward_loss(model, grid, ex, nullptr);
        *p = static_cast<float>(saved - step);
        const double lm = forward_loss(model, grid, ex, nullptr);
        *p = saved;
        *out = (lp - lm) / (2.0 * step);
    };

    auto probe_stack = [&](ConvStack& s, StackGrads& sg) {
        if (s.frozen()) return;
        for (std::size_t i = 0; i < s.layers().size(); ++i) {
            auto& layer = s.layers()[i];
            for (std::size_t j = 0; j < layer.w.size(); ++j) {
                probe(&layer.w[j], &sg.dw[i][j]);
            }
            for (std::size_t j = 0; j < layer.b.size(); ++j) {
                probe(&layer.b[j], &sg.db[i][j]);
            }
        }
    };
    probe_stack(model.f, grads.f);
    probe_stack(model.g, grads.g);
    if (model.use_fusion) {
        for (std::size_t j = 0; j < model.fusion.conv_w.size(); ++j) {
            probe(&model.fusion.conv_w[j], &grads.fusion_w[j]);
        }
        probe(&model.fusion.conv_b, &grads.fusion_b);
        probe(&model.fusion.mix_weight, &grads.fusion_mix);
    }
    return grads;
}

TrainExample make_train_example(const Scenario& scenario, const TrainSetup& setup,
                                const TrainConfig& cfg, Rng& rng) {
    const std::size_t frame = rng.uniform_int(scenario.sdv_gt.size());
    const Pose2 gt = scenario.sdv_gt.waypoints[frame].pose;

    const PoseOffset off(rng.uniform_sym(cfg.noise_max_trans),
                         rng.uniform_sym(cfg.noise_max_trans),
                         rng.uniform_sym(cfg.noise_max_rot));
    const Pose2 prior = compose(gt, inverse(Pose2(off.dx, off.dy, off.dyaw)));

    const std::uint64_t sweep_seed = rng.next_u64();
    std::vector<LidarPoint> sweep =
        render_sweep(*scenario.map, gt, setup.sensor, sweep_seed);

    const double gain = rng.uniform(setup.gain_min, setup.gain_max);
    const double bias = rng.uniform(setup.bias_min, setup.bias_max);
    if (gain != 1.0 || bias != 0.0) {
        for (auto& p : sweep) {
            const double v = gain * p.intensity + bias;
            p.intensity = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
        }
    }

    TrainExample ex;
    ex.resolution = setup.fine_spec.resolution;
    ex.pad = translation_pad_cells(setup.fine_spec, setup.grid);
    ex.target = snap_to_grid(setup.grid, off);

    // the learned online branch consumes the full raster (occupancy slices
    // plus intensity) so it can tell empty cells from dark ones
    const BevGrid fine = voxelize(sweep, setup.fine_spec);
    ex.fine = tensor_from_grid(fine);
    const BevGrid map_crop = make_map_crop(*scenario.map, prior, setup.fine_spec,
                                           setup.grid);
    ex.map_crop = tensor_from_grid(map_crop);

    if (setup.use_fusion) {
        const BevGrid coarse = voxelize(sweep, setup.coarse_spec);
        ex.coarse = tensor_from_grid(coarse);
        const double ratio = setup.coarse_spec.resolution / setup.fine_spec.resolution;
        ex.up_factor = static_cast<int>(std::round(ratio));
        ex.coarse_crop_h =
            static_cast<int>(std::round(setup.fine_spec.extent_y /
                                        setup.coarse_spec.resolution));
        ex.coarse_crop_w =
            static_cast<int>(std::round(setup.fine_spec.extent_x /
                                        setup.coarse_spec.resolution));
        ex.coarse_crop_r0 = (setup.coarse_spec.rows() - ex.coarse_crop_h) / 2;
        ex.coarse_crop_c0 = (setup.coarse_spec.cols() - ex.coarse_crop_w) / 2;
    }
    return ex;
}

TrainResult train_side_tuned(std::span<const Scenario> scenarios,
                             const ConvStack& base, const TrainConfig& cfg,
                             const TrainSetup& setup) {
    if (scenarios.empty()) {
        throw std::invalid_argument("train_side_tuned: no scenarios");
    }
    if (!base.frozen()) {
        throw std::invalid_argument("train_side_tuned: base must be marked frozen");
    }
    cfg.validate(setup.grid);

    LocalizerModel model;
    model.base = base;
    model.use_fusion = setup.use_fusion;
    model.f = ConvStack(setup.f_config, split_seed(cfg.seed, 0xf00d));
    model.g = ConvStack(setup.g_config, split_seed(cfg.seed, 0x900d));
    if (model.use_fusion) {
        const int base_out = base.config().channels.back();
        model.fusion.conv_w.assign(base_out, 0.0f);
        Rng frng(split_seed(cfg.seed, 0xf051));
        for (auto& w : model.fusion.conv_w) {
            w = static_cast<float>(frng.gaussian() * std::sqrt(1.0 / base_out));
        }
        model.fusion.conv_b = 0.0f;
        model.fusion.mix_weight = 0.1f;
    }

    TrainResult result;
    result.loss_curve.reserve(cfg.steps);

    GradientSet probe = zero_gradients(model);
    ParamView pv = ParamView::build(model, probe);
    AdamState adam;
    adam.m.assign(pv.ptr.size(), 0.0);
    adam.v.assign(pv.ptr.size(), 0.0);

    Rng rng(split_seed(cfg.seed, 0x7472a1));
    for (int step = 0; step < cfg.steps; ++step) {
        GradientSet batch = zero_gradients(model);
        double loss_sum = 0.0;
        for (int b = 0; b < cfg.batch_size; ++b) {
            const Scenario& sc = scenarios[rng.uniform_int(scenarios.size())];
            const TrainExample ex = make_train_example(sc, setup, cfg, rng);
            ForwardCache cache;
            loss_sum += forward_loss(model, setup.grid, ex, &cache);
            const GradientSet g = backward(model, setup.grid, ex, cache);
            accumulate(batch, g);
        }
        scale(batch, 1.0 / cfg.batch_size);
        result.loss_curve.push_back(loss_sum / cfg.batch_size);

        // rebuild: gradient storage moved per step
        ParamView view = ParamView::build(model, batch);
        if (cfg.optimizer == TrainConfig::Optimizer::kSgd) {
            for (std::size_t i = 0; i < view.ptr.size(); ++i) {
                *view.ptr[i] = static_cast<float>(*view.ptr[i] -
                                                  cfg.learning_rate * *view.grad[i]);
            }
        } else {
            adam.t += 1;
            const double b1t = 1.0 - std::pow(cfg.adam_beta1, adam.t);
            const double b2t = 1.0 - std::pow(cfg.adam_beta2, adam.t);
            for (std::size_t i = 0; i < view.ptr.size(); ++i) {
                const double gr = *view.grad[i];
                adam.m[i] = cfg.adam_beta1 * adam.m[i] + (1.0 - cfg.adam_beta1) * gr;
                adam.v[i] = cfg.adam_beta2 * adam.v[i] + (1.0 - cfg.adam_beta2) * gr * gr;
                const double mh = adam.m[i] / b1t;
                const double vh = adam.v[i] / b2t;
                *view.ptr[i] = static_cast<float>(
                    *view.ptr[i] - cfg.learning_rate * mh / (std::sqrt(vh) + cfg.adam_eps));
            }
        }
    }

    result.f = std::move(model.f);
    result.g = std::move(model.g);
    result.fusion = std::move(model.fusion);
    return result;
}

double mean_eval_loss(const LocalizerModel& model, std::span<const Scenario> scenarios,
                      const TrainSetup& setup, const TrainConfig& cfg,
                      std::uint64_t eval_seed, int n_examples) {
    Rng rng(split_seed(eval_seed, 0xe7a1));
    double sum = 0.0;
    for (int i = 0; i < n_examples; ++i) {
        const Scenario& sc = scenarios[rng.uniform_int(scenarios.size())];
        const TrainExample ex = make_train_example(sc, setup, cfg, rng);
        sum += forward_loss(model, setup.grid, ex, nullptr);
    }
    return sum / n_examples;
}

double run_grad_check(std::uint64_t seed, double fd_step) {
    OffsetGrid grid;
    for (int i = -2; i <= 2; ++i) {
        grid.x_offsets.push_back(i * 0.05);
        grid.y_offsets.push_back(i * 0.05);
    }
    for (int i = -1; i <= 1; ++i) {
        grid.yaw_offsets.push_back(deg_to_rad(i * 0.5));
    }

    LocalizerModel model;
    model.use_fusion = true;
    model.f = ConvStack(NetConfig{1, {4, 1}, 3, 1}, split_seed(seed, 1));
    model.g = ConvStack(NetConfig{1, {4, 1}, 3, 1}, split_seed(seed, 2));
    model.base = ConvStack(NetConfig{3, {4}, 3, 0}, split_seed(seed, 3));
    model.base.set_frozen(true);
    model.fusion.conv_w = {0.3f, -0.2f, 0.1f, 0.25f};
    model.fusion.conv_b = 0.05f;
    model.fusion.mix_weight = 0.5f;

    Rng rng(split_seed(seed, 4));
    TrainExample ex;
    ex.resolution = 0.05;
    ex.pad = 2;
    ex.fine = Tensor(1, 16, 16);
    for (auto& v : ex.fine.v) v = rng.uniform(0.0, 1.0);
    ex.coarse = Tensor(3, 8, 8);
    for (auto& v : ex.coarse.v) v = rng.uniform(0.0, 1.0);
    ex.map_crop = Tensor(1, 20, 20);
    for (auto& v : ex.map_crop.v) v = rng.uniform(0.0, 1.0);
    ex.coarse_crop_r0 = 2;
    ex.coarse_crop_c0 = 2;
    ex.coarse_crop_h = 4;
    ex.coarse_crop_w = 4;
    ex.up_factor = 4;
    ex.target = GridIndex{3, 1, 2};

    ForwardCache cache;
    forward_loss(model, grid, ex, &cache);
    const GradientSet analytic = backward(model, grid, ex, cache);
    const GradientSet fd = fd_gradient_oracle(model, grid, ex, fd_step);

    double max_rel = 0.0;
    auto compare = [&](double a, double b) {
        const double denom = std::max({std::abs(a), std::abs(b), 1e-6});
        max_rel = std::max(max_rel, std::abs(a - b) / denom);
    };
    auto compare_stack = [&](const StackGrads& a, const StackGrads& b) {
        for (std::size_t i = 0; i < a.dw.size(); ++i) {
            for (std::size_t j = 0; j < a.dw[i].size(); ++j) compare(a.dw[i][j], b.dw[i][j]);
            for (std::size_t j = 0; j < a.db[i].size(); ++j) compare(a.db[i][j], b.db[i][j]);
        }
    };
    compare_stack(analytic.f, fd.f);
    compare_stack(analytic.g, fd.g);
    for (std::size_t i = 0; i < analytic.fusion_w.size(); ++i) {
        compare(analytic.fusion_w[i], fd.fusion_w[i]);
    }
    compare(analytic.fusion_b, fd.fusion_b);
    compare(analytic.fusion_mix, fd.fusion_mix);
    return max_rel;
}

}  // namespace lploc
