#include "lploc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "lploc/learn.hpp"
#include "lploc/rng.hpp"

namespace lploc {

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::ofstream open_csv(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) {
        throw std::runtime_error("cannot open CSV for writing: " + path.string());
    }
    return os;
}

double percentile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double idx = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double a = idx - lo;
    return v[lo] * (1.0 - a) + v[hi] * a;
}

void corrupt_sweep(std::vector<LidarPoint>& sweep, double gain, double bias) {
    if (gain == 1.0 && bias == 0.0) return;
    for (auto& p : sweep) {
        const double v = gain * p.intensity + bias;
        p.intensity = static_cast<float>(v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v));
    }
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

void JitterSpec::validate() const {
    if (max_trans < 0.0 || max_rot < 0.0) {
        throw std::invalid_argument("JitterSpec: maxima must be >= 0");
    }
}

Pose2 jitter(const Pose2& gt, const JitterSpec& spec) {
    spec.validate();
    Rng rng(split_seed(spec.seed, 0x6a697474));
    const double dx = rng.uniform_sym(spec.max_trans);
    const double dy = rng.uniform_sym(spec.max_trans);
    const double dyaw = rng.uniform_sym(spec.max_rot);
    return compose(gt, Pose2(dx, dy, dyaw));
}

RecallReport recall(std::span<const PoseOffset> estimates,
                    std::span<const PoseOffset> truths, const OffsetGrid& grid) {
    if (estimates.size() != truths.size()) {
        throw std::invalid_argument("recall: list length mismatch");
    }
    RecallReport rep;
    rep.n_frames = static_cast<int>(estimates.size());
    if (estimates.empty()) return rep;
    int hit1 = 0, hit2 = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        const GridIndex e = snap_to_grid(grid, estimates[i]);
        const GridIndex t = snap_to_grid(grid, truths[i]);
        const int ddx = std::abs(e.ix - t.ix);
        const int ddy = std::abs(e.iy - t.iy);
        const int ddyaw = std::abs(e.iyaw - t.iyaw);
        if (ddx == 0 && ddy == 0 && ddyaw == 0) ++hit1;
        if (ddx <= 1 && ddy <= 1 && ddyaw <= 1) ++hit2;
    }
    rep.r1 = static_cast<double>(hit1) / rep.n_frames;
    rep.r2 = static_cast<double>(hit2) / rep.n_frames;
    return rep;
}

PlanningReport planning_metrics(std::span<const RolloutResult> rollouts,
                                std::span<const Trajectory> human_paths,
                                std::span<const std::vector<Vec2>> routes,
                                double at_time) {
    if (rollouts.size() != human_paths.size() || rollouts.size() != routes.size()) {
        throw std::invalid_argument("planning_metrics: span length mismatch");
    }
    PlanningReport rep;
    rep.n = static_cast<int>(rollouts.size());
    if (rollouts.empty()) return rep;

    int collided = 0;
    double l2_sum = 0.0, lat_sum = 0.0, jerk_sum = 0.0, prog_sum = 0.0;
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const Trajectory& exec = rollouts[i].executed;
        if (rollouts[i].collided) ++collided;
        const Pose2 pe = interpolate_pose(exec, at_time);
        const Pose2 ph = interpolate_pose(human_paths[i], at_time);
        l2_sum += std::hypot(pe.x - ph.x, pe.y - ph.y);
        lat_sum += max_lateral_acceleration(exec);
        jerk_sum += max_jerk(exec);
        const auto proj_end = project_to_route(routes[i], {pe.x, pe.y});
        const Pose2 p0 = exec.front().pose;
        const auto proj_start = project_to_route(routes[i], {p0.x, p0.y});
        prog_sum += proj_end.arc_length - proj_start.arc_length;
    }
    rep.collision_rate = 100.0 * collided / rep.n;
    rep.l2_human_at_5s = l2_sum / rep.n;
    rep.lateral_acceleration = lat_sum / rep.n;
    rep.jerk = jerk_sum / rep.n;
    rep.progress_at_5s = prog_sum / rep.n;
    return rep;
}

HarnessConfig HarnessConfig::defaults() {
    HarnessConfig cfg;
    cfg.fine_spec.resolution = 0.05;
    cfg.fine_spec.extent_x = 12.8;
    cfg.fine_spec.extent_y = 12.8;
    cfg.fine_spec.height_slices = 0;
    cfg.coarse_spec.resolution = 0.2;
    cfg.coarse_spec.extent_x = 25.6;
    cfg.coarse_spec.extent_y = 25.6;
    cfg.coarse_spec.height_slices = 16;
    cfg.coarse_spec.height_min = -0.2;
    cfg.coarse_spec.height_max = 3.0;
    cfg.sensor = SensorModel{};
    cfg.planner = PlannerConfig{};
    cfg.grid = default_offset_grid();
    return cfg;
}

LocEvalResult run_localizer_eval(std::span<const Scenario> corpus,
                                 const LocalizerPipeline& pipeline,
                                 const HarnessConfig& cfg, const LocEvalOptions& opt,
                                 const std::filesystem::path& out_csv) {
    LocEvalResult result;
    std::ofstream os;
    const bool write = !out_csv.empty();
    if (write) {
        os = open_csv(out_csv);
        os << "frame,scenario,true_dx_m,true_dy_m,true_dyaw_deg,est_dx_m,est_dy_m,"
              "est_dyaw_deg,r1_hit,r2_hit\n";
    }

    int frame = 0;
    for (std::size_t si = 0; si < corpus.size() && frame < opt.max_frames; ++si) {
        const Scenario& sc = corpus[si];
        for (std::size_t wi = 0; wi < sc.sdv_gt.size() && frame < opt.max_frames; ++wi) {
            const Pose2 gt = sc.sdv_gt.waypoints[wi].pose;
            const std::uint64_t frame_seed = split_seed(opt.spec.seed, frame);
            JitterSpec js = opt.spec;
            js.seed = frame_seed;
            const Pose2 prior = jitter(gt, js);
            const Pose2 d = between(prior, gt);
            const PoseOffset truth(d.x, d.y, d.yaw);

            std::vector<LidarPoint> sweep =
                render_sweep(*sc.map, gt, cfg.sensor, split_seed(frame_seed, 1));
            if (opt.gain_min != 1.0 || opt.gain_max != 1.0 || opt.bias_min != 0.0 ||
                opt.bias_max != 0.0) {
                Rng crng(split_seed(frame_seed, 2));
                corrupt_sweep(sweep, crng.uniform(opt.gain_min, opt.gain_max),
                              crng.uniform(opt.bias_min, opt.bias_max));
            }

            const PoseEstimate est = localize(sweep, *sc.map, prior, pipeline, cfg.grid);
            result.estimates.push_back(est.offset);
            result.truths.push_back(truth);

            if (write) {
                const GridIndex e = snap_to_grid(cfg.grid, est.offset);
                const GridIndex t = snap_to_grid(cfg.grid, truth);
                const bool r1 = e.ix == t.ix && e.iy == t.iy && e.iyaw == t.iyaw;
                const bool r2 = std::abs(e.ix - t.ix) <= 1 && std::abs(e.iy - t.iy) <= 1 &&
                                std::abs(e.iyaw - t.iyaw) <= 1;
                os << frame << ',' << si << ',' << format_double(truth.dx) << ','
                   << format_double(truth.dy) << ','
                   << format_double(rad_to_deg(truth.dyaw)) << ','
                   << format_double(est.offset.dx) << ',' << format_double(est.offset.dy)
                   << ',' << format_double(rad_to_deg(est.offset.dyaw)) << ','
                   << (r1 ? 1 : 0) << ',' << (r2 ? 1 : 0) << '\n';
            }
            ++frame;
        }
    }

    result.report = recall(result.estimates, result.truths, cfg.grid);
    if (write) {
        os << "#summary," << format_double(result.report.r1) << ','
           << format_double(result.report.r2) << ',' << result.report.n_frames << '\n';
    }
    return result;
}

std::vector<SweepRow> run_jitter_sweep(std::span<const Scenario> corpus,
                                       JitterAxis axis,
                                       std::span<const double> levels,
                                       const HarnessConfig& cfg, std::uint64_t seed,
                                       const std::filesystem::path& out_csv) {
    if (corpus.empty()) {
        throw std::invalid_argument("run_jitter_sweep: empty corpus");
    }
    std::vector<SweepRow> rows;

    for (double level : levels) {
        std::vector<RolloutResult> executed;
        std::vector<RolloutResult> believed;
        std::vector<Trajectory> humans;
        std::vector<std::vector<Vec2>> routes;
        executed.reserve(corpus.size());

        for (std::size_t si = 0; si < corpus.size(); ++si) {
            const Scenario& sc = corpus[si];
            PlannerConfig pcfg = cfg.planner;
            pcfg.speed = sc.speed;

            JitterSpec js;
            js.seed = split_seed(seed, si);  // shared across levels
            if (axis == JitterAxis::kTranslation) {
                js.max_trans = level;
            } else {
                js.max_rot = level;
            }
            const Pose2 gt0 = sc.sdv_gt.front().pose;
            const Pose2 prior = jitter(gt0, js);
            const Pose2 d = between(prior, gt0);
            const PoseOffset residual(d.x, d.y, d.yaw);

            const auto candidates = sample_trajectories(prior, sc.route, pcfg);
            const Trajectory plan = select_plan(candidates, sc.actors, sc.route, pcfg);

            executed.push_back(
                rollout_open_loop(plan, residual, sc.actors, pcfg.horizon, pcfg));
            believed.push_back(rollout_open_loop(plan, PoseOffset{}, sc.actors,
                                                 pcfg.horizon, pcfg));
            humans.push_back(sc.sdv_gt);
            routes.push_back(sc.route);
        }

        SweepRow row;
        row.level = level;
        row.executed = planning_metrics(executed, humans, routes);
        row.believed = planning_metrics(believed, humans, routes);
        rows.push_back(std::move(row));
    }

    if (!out_csv.empty()) {
        auto os = open_csv(out_csv);
        os << "axis,level,n,collision_rate_pct,l2_human_at_5s_m,lat_acc_mps2,"
              "jerk_mps3,progress_at_5s_m,believed_collision_rate_pct,"
              "believed_l2_human_at_5s_m\n";
        for (const auto& row : rows) {
            const double shown = axis == JitterAxis::kRotation
                                     ? rad_to_deg(row.level)
                                     : row.level;
            os << (axis == JitterAxis::kRotation ? "rot" : "trans") << ','
               << format_double(shown) << ',' << row.executed.n << ','
               << format_double(row.executed.collision_rate) << ','
               << format_double(row.executed.l2_human_at_5s) << ','
               << format_double(row.executed.lateral_acceleration) << ','
               << format_double(row.executed.jerk) << ','
               << format_double(row.executed.progress_at_5s) << ','
               << format_double(row.believed.collision_rate) << ','
               << format_double(row.believed.l2_human_at_5s) << '\n';
        }
    }
    return rows;
}

std::vector<BenchRow> bench_matcher(std::span<const std::string> config_names,
                                    std::span<const int> sizes, int reps,
                                    const HarnessConfig& cfg,
                                    const std::filesystem::path& out_csv) {
    if (reps < 3) {
        throw std::invalid_argument("bench_matcher: reps must be >= 3");
    }
    std::vector<BenchRow> rows;
    const int pad = translation_pad_cells(cfg.fine_spec, cfg.grid);
    double sink = 0.0;

    for (const auto& name : config_names) {
        const bool is_identity = name == "identity";
        NetConfig net_cfg;
        if (name == "tiny") {
            net_cfg = tiny_config(1);
        } else if (name == "big") {
            net_cfg = big_config(1);
        } else if (!is_identity) {
            throw std::invalid_argument("bench_matcher: unknown config " + name);
        }
        const ConvStack net = is_identity ? ConvStack() : ConvStack(net_cfg, 17);

        for (int size : sizes) {
            const double res = cfg.fine_spec.resolution;
            Rng rng(split_seed(99, static_cast<std::uint64_t>(size)));
            BevGrid online(size, size, 1, res, -res * size / 2, -res * size / 2);
            for (auto& v : online.data()) {
                v = static_cast<float>(rng.uniform(0.0, 1.0));
            }
            const int msize = size + 2 * pad;
            BevGrid map_raster(msize, msize, 1, res, -res * msize / 2, -res * msize / 2);
            for (auto& v : map_raster.data()) {
                v = static_cast<float>(rng.uniform(0.0, 1.0));
            }
            const BevGrid map_emb =
                is_identity ? identity_embed(map_raster) : net.forward(map_raster);

            std::vector<double> t_direct, t_fft;
            for (int r = 0; r < reps; ++r) {
                {
                    const double t0 = now_ms();
                    const BevGrid emb =
                        is_identity ? identity_embed(online) : net.forward(online);
                    const ScoreVolume vol = score_direct(emb, map_emb, cfg.grid);
                    t_direct.push_back(now_ms() - t0);
                    sink += vol.scores[0];
                }
                {
                    const double t0 = now_ms();
                    const BevGrid emb =
                        is_identity ? identity_embed(online) : net.forward(online);
                    const ScoreVolume vol = score_fft(emb, map_emb, cfg.grid);
                    t_fft.push_back(now_ms() - t0);
                    sink += vol.scores[0];
                }
            }
            rows.push_back({name, "direct", size, percentile(t_direct, 0.5),
                            percentile(t_direct, 0.9)});
            rows.push_back(
                {name, "fft", size, percentile(t_fft, 0.5), percentile(t_fft, 0.9)});
        }
    }

    if (!out_csv.empty()) {
        auto os = open_csv(out_csv);
        os << "config,path,size,median_ms,p90_ms\n";
        for (const auto& r : rows) {
            os << r.config << ',' << r.path << ',' << r.size << ','
               << format_double(r.median_ms) << ',' << format_double(r.p90_ms) << '\n';
        }
    }
    if (sink == 12345.678) {
        std::fprintf(stderr, "bench sink %f\n", sink);
    }
    return rows;
}

}  // namespace lploc
