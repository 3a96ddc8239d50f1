// Acceptance suite: one criterion per section, one PASS/FAIL line each.
// Exit code is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "lploc/eval.hpp"
#include "lploc/io.hpp"
#include "lploc/learn.hpp"
#include "lploc/matcher.hpp"
#include "lploc/planner.hpp"
#include "lploc/rng.hpp"
#include "lploc/world.hpp"

namespace {

using namespace lploc;
namespace fs = std::filesystem;

int g_failures = 0;

void report(int idx, const char* name, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", idx, name,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const OffsetGrid grid = default_offset_grid();
    const int size = 64;
    const int pad = 10;
    const double res = 0.05;

    double worst = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
        BevGrid online(size, size, 1, res, -res * size / 2, -res * size / 2);
        BevGrid map(size + 2 * pad, size + 2 * pad, 1, res, -res * (size / 2 + pad),
                    -res * (size / 2 + pad));
        Rng rng(split_seed(1000, inst));
        for (auto& v : online.data()) v = static_cast<float>(rng.uniform(-1, 1));
        for (auto& v : map.data()) v = static_cast<float>(rng.uniform(-1, 1));

        const ScoreVolume a = score_direct(online, map, grid);
        const ScoreVolume b = score_fft(online, map, grid);
        double max_abs = 0.0;
        for (double s : a.scores) max_abs = std::max(max_abs, std::abs(s));
        for (std::size_t i = 0; i < a.scores.size(); ++i) {
            worst = std::max(worst, std::abs(a.scores[i] - b.scores[i]) /
                                        std::max(max_abs, 1e-30));
        }
    }
    const double dt = seconds_since(t0);
    report(1, "FFT/direct oracle equivalence", worst <= 1e-4 && dt < 60.0,
           fmt("max relative deviation %.3e over 100 instances, %.1f s", worst, dt));
}

// ---------------------------------------------------------------- criterion 2

void criterion_2(const std::vector<Scenario>& corpus, const HarnessConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const LocalizerPipeline pipe = LocalizerPipeline::identity(cfg.fine_spec);
    Rng rng(2024);
    std::vector<PoseOffset> est, truth;
    for (int trial = 0; trial < 500; ++trial) {
        const Scenario& sc = corpus[rng.uniform_int(corpus.size())];
        const Pose2 prior =
            sc.sdv_gt.waypoints[rng.uniform_int(sc.sdv_gt.size())].pose;
        const PoseOffset s((static_cast<int>(rng.uniform_int(21)) - 10) * 0.05,
                           (static_cast<int>(rng.uniform_int(21)) - 10) * 0.05,
                           deg_to_rad((static_cast<int>(rng.uniform_int(7)) - 3) * 0.5));
        const Pose2 true_pose = compose_offset(prior, s);
        const auto sweep = render_sweep(*sc.map, true_pose, cfg.sensor, rng.next_u64());
        est.push_back(localize(sweep, *sc.map, prior, pipe, cfg.grid).offset);
        truth.push_back(s);
    }
    const RecallReport rep = recall(est, truth, cfg.grid);
    report(2, "exact self-localization on-grid", rep.r1 == 1.0,
           fmt("r@1 = %.4f on %d noise-free trials, %.1f s", rep.r1, rep.n_frames,
               seconds_since(t0)));
}

// ---------------------------------------------------------------- criterion 3

void criterion_3(const std::vector<Scenario>& corpus, const HarnessConfig& base) {
    const auto t0 = std::chrono::steady_clock::now();
    HarnessConfig cfg = base;
    cfg.sensor.dropout_prob = 0.5;
    cfg.sensor.intensity_noise_sigma = 0.1;
    LocEvalOptions opt;
    opt.spec = JitterSpec{0.5, deg_to_rad(1.5), 33};
    opt.max_frames = 500;
    const auto res = run_localizer_eval(corpus,
                                        LocalizerPipeline::identity(cfg.fine_spec),
                                        cfg, opt, "");
    const double dt = seconds_since(t0);
    report(3, "noisy recall with identity embeddings",
           res.report.r2 >= 0.95 && dt < 600.0,
           fmt("r@2 = %.4f (r@1 = %.4f) on %d frames, %.1f s", res.report.r2,
               res.report.r1, res.report.n_frames, dt));
}

// ---------------------------------------------------------------- criterion 4

void criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (std::uint64_t seed : {5ull, 39ull, 44ull}) {
        worst = std::max(worst, run_grad_check(seed));
    }
    const double dt = seconds_since(t0);
    report(4, "analytic gradients vs finite differences", worst <= 1e-3 && dt < 120.0,
           fmt("max relative error %.3e over 3 seeds, %.1f s", worst, dt));
}

// ---------------------------------------------------------------- criterion 5

void criterion_5(const std::vector<Scenario>& train_set,
                 const std::vector<Scenario>& heldout, const HarnessConfig& base) {
    const auto t0 = std::chrono::steady_clock::now();

    TrainSetup setup;
    setup.grid = base.grid;
    setup.fine_spec = base.fine_spec;
    setup.fine_spec.extent_x = 6.4;
    setup.fine_spec.extent_y = 6.4;
    setup.fine_spec.height_slices = 1;
    setup.fine_spec.height_min = -0.5;
    setup.fine_spec.height_max = 0.5;
    setup.coarse_spec = base.coarse_spec;
    setup.coarse_spec.extent_x = 12.8;
    setup.coarse_spec.extent_y = 12.8;
    setup.sensor = base.sensor;
    setup.sensor.dropout_prob = 0.3;
    setup.sensor.intensity_noise_sigma = 0.05;
    setup.use_fusion = true;
    setup.f_config = NetConfig{1, {8, 8, 8, 8, 1}, 3, 0};
    setup.g_config = NetConfig{2, {8, 8, 8, 8, 1}, 3, 0};
    setup.gain_min = 0.5;
    setup.gain_max = 1.5;
    setup.bias_min = -0.1;
    setup.bias_max = 0.1;

    TrainConfig cfg;
    cfg.steps = 500;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    cfg.seed = 3;

    ConvStack frozen_base(NetConfig{17, {8, 8}, 3, 0}, split_seed(cfg.seed, 0xba5e));
    frozen_base.set_frozen(true);
    const std::uint64_t base_digest_before = frozen_base.digest();

    // held-out loss of the model at initialization (zero steps)
    TrainConfig cfg0 = cfg;
    cfg0.steps = 0;
    const TrainResult init = train_side_tuned(train_set, frozen_base, cfg0, setup);
    LocalizerModel init_model;
    init_model.f = init.f;
    init_model.g = init.g;
    init_model.base = frozen_base;
    init_model.fusion = init.fusion;
    init_model.use_fusion = true;
    const double loss_before = mean_eval_loss(init_model, heldout, setup, cfg, 404, 40);

    const TrainResult trained = train_side_tuned(train_set, frozen_base, cfg, setup);
    LocalizerModel trained_model;
    trained_model.f = trained.f;
    trained_model.g = trained.g;
    trained_model.base = frozen_base;
    trained_model.fusion = trained.fusion;
    trained_model.use_fusion = true;
    const double loss_after = mean_eval_loss(trained_model, heldout, setup, cfg, 404, 40);

    const bool loss_halved = loss_after <= 0.5 * loss_before;
    const bool base_intact = frozen_base.digest() == base_digest_before;

    // ordering under per-sweep gain/bias corruption, identical frames
    HarnessConfig eval_cfg = base;
    eval_cfg.sensor.dropout_prob = 0.3;
    eval_cfg.sensor.intensity_noise_sigma = 0.05;
    LocEvalOptions opt;
    opt.spec = JitterSpec{0.5, deg_to_rad(1.5), 77};
    opt.max_frames = 120;
    opt.gain_min = 0.5;
    opt.gain_max = 1.5;
    opt.bias_min = -0.1;
    opt.bias_max = 0.1;

    LocalizerPipeline trained_pipe;
    trained_pipe.mode = LocalizerPipeline::Embed::kLearned;
    trained_pipe.fine_spec = eval_cfg.fine_spec;
    trained_pipe.fine_spec.height_slices = 1;
    trained_pipe.fine_spec.height_min = -0.5;
    trained_pipe.fine_spec.height_max = 0.5;
    trained_pipe.f = &trained.f;
    trained_pipe.g = &trained.g;
    trained_pipe.base = &frozen_base;
    trained_pipe.coarse_spec = base.coarse_spec;
    trained_pipe.fusion = &trained.fusion;

    const auto r_trained = run_localizer_eval(heldout, trained_pipe, eval_cfg, opt, "");
    const auto r_identity = run_localizer_eval(
        heldout, LocalizerPipeline::identity(eval_cfg.fine_spec), eval_cfg, opt, "");
    const bool ordering = r_trained.report.r1 >= r_identity.report.r1;

    report(5, "side-tuned training efficacy and freeze contract",
           loss_halved && base_intact && ordering,
           fmt("held-out loss %.3f -> %.3f (need <= %.3f), base %s, r@1 trained %.3f "
               "vs identity %.3f, %.0f s",
               loss_before, loss_after, 0.5 * loss_before,
               base_intact ? "intact" : "MUTATED", r_trained.report.r1,
               r_identity.report.r1, seconds_since(t0)));
}

// ---------------------------------------------------------------- criterion 6

void criterion_6(std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    WorldConfig wc;
    const auto corpus = gen_world(seed, wc, 100);
    const HarnessConfig cfg = HarnessConfig::defaults();

    const std::vector<double> rot_levels = {0.0, deg_to_rad(1.0), deg_to_rad(2.0),
                                            deg_to_rad(3.0)};
    const auto rot =
        run_jitter_sweep(corpus, JitterAxis::kRotation, rot_levels, cfg, seed, "");
    const std::vector<double> trans_levels = {0.8};
    const auto trans =
        run_jitter_sweep(corpus, JitterAxis::kTranslation, trans_levels, cfg, seed, "");

    bool monotone = true;
    for (std::size_t i = 1; i < rot.size(); ++i) {
        monotone &=
            rot[i].executed.collision_rate >= rot[i - 1].executed.collision_rate - 1e-12;
    }
    const bool rot_dominates =
        rot.back().executed.collision_rate > trans[0].executed.collision_rate;
    const double dt = seconds_since(t0);

    std::string levels;
    for (const auto& r : rot) levels += fmt("%.1f%% ", r.executed.collision_rate);
    report(6, "jitter-sweep trend reproduction", monotone && rot_dominates && dt < 900.0,
           fmt("rot collisions [%s], trans 0.8 m %.1f%%, %.0f s", levels.c_str(),
               trans[0].executed.collision_rate, dt));
}

// ---------------------------------------------------------------- criterion 7

void criterion_7() {
    const HarnessConfig cfg = HarnessConfig::defaults();
    const std::vector<std::string> match_cfg = {"identity"};
    const std::vector<int> size480 = {480};
    const auto iso = bench_matcher(match_cfg, size480, 3, cfg, "");
    double direct_ms = 0.0, fft_ms = 0.0;
    for (const auto& r : iso) {
        if (r.path == "direct") direct_ms = r.median_ms;
        if (r.path == "fft") fft_ms = r.median_ms;
    }
    const bool fft_wins = direct_ms >= 5.0 * fft_ms;

    const std::vector<std::string> ladder = {"tiny", "big"};
    const auto rows = bench_matcher(ladder, size480, 3, cfg, "");
    double tiny_ms = 0.0, big_ms = 0.0;
    for (const auto& r : rows) {
        if (r.path == "fft" && r.config == "tiny") tiny_ms = r.median_ms;
        if (r.path == "fft" && r.config == "big") big_ms = r.median_ms;
    }
    const bool ladder_ok = big_ms >= 3.0 * tiny_ms;

    report(7, "matcher performance regression", fft_wins && ladder_ok,
           fmt("480x480: direct %.1f ms vs fft %.1f ms (%.1fx); embed+match tiny "
               "%.1f ms vs big %.1f ms (%.1fx)",
               direct_ms, fft_ms, direct_ms / std::max(fft_ms, 1e-9), tiny_ms, big_ms,
               big_ms / std::max(tiny_ms, 1e-9)));
}

// ---------------------------------------------------------------- criterion 8

// independent snap: nearest cell with halves away from zero
int oracle_snap(double v, double step, int half) {
    const double r = std::round(v / step);
    return static_cast<int>(r) + half;
}

void criterion_8() {
    const OffsetGrid grid = default_offset_grid();
    Rng rng(808);

    // recall vs a brute-force re-implementation
    std::vector<PoseOffset> est, truth;
    for (int i = 0; i < 1000; ++i) {
        est.push_back(PoseOffset((static_cast<int>(rng.uniform_int(21)) - 10) * 0.05,
                                 (static_cast<int>(rng.uniform_int(21)) - 10) * 0.05,
                                 deg_to_rad((static_cast<int>(rng.uniform_int(7)) - 3) * 0.5)));
        truth.push_back(PoseOffset(rng.uniform_sym(0.5), rng.uniform_sym(0.5),
                                   rng.uniform_sym(deg_to_rad(1.5))));
    }
    int hit1 = 0, hit2 = 0;
    for (int i = 0; i < 1000; ++i) {
        const int ex = oracle_snap(est[i].dx, 0.05, 10);
        const int ey = oracle_snap(est[i].dy, 0.05, 10);
        const int ek = oracle_snap(est[i].dyaw, deg_to_rad(0.5), 3);
        const int tx = oracle_snap(truth[i].dx, 0.05, 10);
        const int ty = oracle_snap(truth[i].dy, 0.05, 10);
        const int tk = oracle_snap(truth[i].dyaw, deg_to_rad(0.5), 3);
        if (ex == tx && ey == ty && ek == tk) ++hit1;
        if (std::abs(ex - tx) <= 1 && std::abs(ey - ty) <= 1 && std::abs(ek - tk) <= 1) {
            ++hit2;
        }
    }
    const RecallReport rep = recall(est, truth, grid);
    const bool recall_ok = rep.r1 == static_cast<double>(hit1) / 1000.0 &&
                           rep.r2 == static_cast<double>(hit2) / 1000.0;

    // argmax vs an exhaustive scan with the documented tie-break; coarse
    // integer scores force plenty of ties
    bool argmax_ok = true;
    for (int t = 0; t < 1000 && argmax_ok; ++t) {
        ScoreVolume v(7, 21, 21);
        for (auto& s : v.scores) s = static_cast<double>(rng.uniform_int(4));
        const PoseOffset got = argmax_pose(v, grid);

        double best_s = -1e300, best_n = 1e300;
        int bx = 0, by = 0, bk = 0;
        for (int k = 0; k < 7; ++k) {
            for (int iy = 0; iy < 21; ++iy) {
                for (int ix = 0; ix < 21; ++ix) {
                    const double s = v.at(k, iy, ix);
                    const double dx = grid.x_offsets[ix];
                    const double dy = grid.y_offsets[iy];
                    const double dm = rad_to_deg(grid.yaw_offsets[k]) * 0.5;
                    const double n = dx * dx + dy * dy + dm * dm;
                    if (s > best_s || (s == best_s && n < best_n)) {
                        best_s = s;
                        best_n = n;
                        bx = ix;
                        by = iy;
                        bk = k;
                    }
                }
            }
        }
        argmax_ok = got.dx == grid.x_offsets[bx] && got.dy == grid.y_offsets[by] &&
                    got.dyaw == grid.yaw_offsets[bk];
    }

    report(8, "metric oracles (recall, argmax)", recall_ok && argmax_ok,
           fmt("recall %s, argmax %s", recall_ok ? "exact" : "MISMATCH",
               argmax_ok ? "exact" : "MISMATCH"));
}

// ---------------------------------------------------------------- criterion 9

void criterion_9(const fs::path& work) {
    const std::string cli = LPLOC_CLI_PATH;
    auto run = [&](const std::string& args) {
        const std::string cmd = cli + " " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    auto same = [&](const fs::path& a, const fs::path& b) {
        return fs::exists(a) && fs::exists(b) && fs::file_size(a) == fs::file_size(b) &&
               file_digest(a) == file_digest(b);
    };

    const fs::path wa = work / "wa", wb = work / "wb";
    bool ok = true;
    std::string detail;

    ok &= run("gen-world --seed 11 --out " + wa.string() + " --count 3");
    ok &= run("gen-world --seed 11 --out " + wb.string() + " --count 3");
    bool gen_ok = ok;
    for (const char* f : {"map_000.bevm", "scenario_000.json", "scenario_002.json"}) {
        gen_ok &= same(wa / f, wb / f);
    }
    detail += fmt("gen-world %s", gen_ok ? "ok" : "DIFFERS");

    ok &= run("eval-loc --scenarios " + wa.string() +
              " --identity --frames 10 --seed 3 --dropout 0.4 --int-noise 0.08 --out " +
              (work / "ea.csv").string());
    ok &= run("eval-loc --scenarios " + wa.string() +
              " --identity --frames 10 --seed 3 --dropout 0.4 --int-noise 0.08 --out " +
              (work / "eb.csv").string());
    const bool eval_ok = same(work / "ea.csv", work / "eb.csv");
    detail += fmt(", eval-loc %s", eval_ok ? "ok" : "DIFFERS");

    ok &= run("train --scenarios " + wa.string() + " --steps 5 --seed 9 --out " +
              (work / "ta.lpw").string());
    ok &= run("train --scenarios " + wa.string() + " --steps 5 --seed 9 --out " +
              (work / "tb.lpw").string());
    const bool train_ok = same(work / "ta.lpw", work / "tb.lpw") &&
                          same(work / "ta.lpw.loss.csv", work / "tb.lpw.loss.csv");
    detail += fmt(", train %s", train_ok ? "ok" : "DIFFERS");

    ok &= run("jitter-sweep --scenarios " + wa.string() +
              " --axis rot --levels 0,1.5 --seed 4 --out " + (work / "ja.csv").string());
    ok &= run("jitter-sweep --scenarios " + wa.string() +
              " --axis rot --levels 0,1.5 --seed 4 --out " + (work / "jb.csv").string());
    const bool sweep_ok = same(work / "ja.csv", work / "jb.csv");
    detail += fmt(", jitter-sweep %s", sweep_ok ? "ok" : "DIFFERS");

    report(9, "CLI determinism across repeated runs",
           ok && gen_ok && eval_ok && train_ok && sweep_ok, detail);
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path work = fs::temp_directory_path() / "lploc_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    // shared evaluation corpus; medium worlds keep the runtime in budget
    WorldConfig wc;
    wc.map_width = 96.0;
    wc.map_height = 96.0;
    const auto corpus = gen_world(2025, wc, 12);
    const std::vector<Scenario> train_set(corpus.begin(), corpus.begin() + 8);
    const std::vector<Scenario> heldout(corpus.begin() + 8, corpus.end());
    const HarnessConfig cfg = HarnessConfig::defaults();

    criterion_1();
    criterion_2(corpus, cfg);
    criterion_3(corpus, cfg);
    criterion_4();
    criterion_5(train_set, heldout, cfg);
    criterion_6(606);
    criterion_7();
    criterion_8();
    criterion_9(work);

    std::printf("%d/9 criteria passed in %.0f s\n", 9 - g_failures, seconds_since(t0));
    return g_failures;
}
