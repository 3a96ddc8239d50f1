#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "lploc/eval.hpp"
#include "lploc/io.hpp"
#include "lploc/learn.hpp"
#include "lploc/matcher.hpp"
#include "lploc/rng.hpp"
#include "lploc/world.hpp"

namespace {

using namespace lploc;

int cmd_gen_world(std::uint64_t seed, const std::string& out, int count,
                  int n_actors_min, int n_actors_max) {
    WorldConfig wc;
    wc.n_actors_min = n_actors_min;
    wc.n_actors_max = n_actors_max;
    const auto scenarios = gen_world(seed, wc, count);
    save_world(out, scenarios);
    std::printf("wrote %d scenarios to %s\n", count, out.c_str());
    return 0;
}

LocalizerPipeline make_pipeline(const HarnessConfig& cfg, const LocalizerWeights* w) {
    LocalizerPipeline p;
    p.fine_spec = cfg.fine_spec;
    if (w == nullptr) {
        p.mode = LocalizerPipeline::Embed::kIdentity;
        return p;
    }
    p.mode = LocalizerPipeline::Embed::kLearned;
    // the online raster must carry as many channels as g expects
    p.fine_spec.height_slices = w->g.config().in_channels - 1;
    p.fine_spec.height_min = -0.5;
    p.fine_spec.height_max = 0.5;
    p.f = &w->f;
    p.g = &w->g;
    if (w->use_fusion) {
        p.base = &w->base;
        p.coarse_spec = cfg.coarse_spec;
        p.fusion = &w->fusion;
    }
    return p;
}

int cmd_eval_loc(std::uint64_t seed, const std::string& scenarios_dir,
                 const std::string& weights, bool identity, double trans_noise,
                 double rot_noise_deg, const std::string& out, int frames,
                 double dropout, double int_noise, double gain_lo, double gain_hi,
                 double bias_lo, double bias_hi) {
    const auto corpus = load_world(scenarios_dir);
    HarnessConfig cfg = HarnessConfig::defaults();
    cfg.sensor.dropout_prob = dropout;
    cfg.sensor.intensity_noise_sigma = int_noise;

    LocalizerWeights w;
    if (!identity) {
        w = read_lpw(weights);
    }
    const LocalizerPipeline pipeline = make_pipeline(cfg, identity ? nullptr : &w);

    LocEvalOptions opt;
    opt.spec = JitterSpec{trans_noise, deg_to_rad(rot_noise_deg), seed};
    opt.max_frames = frames;
    opt.gain_min = gain_lo;
    opt.gain_max = gain_hi;
    opt.bias_min = bias_lo;
    opt.bias_max = bias_hi;

    const auto result = run_localizer_eval(corpus, pipeline, cfg, opt, out);
    std::printf("frames=%d r@1=%.4f r@2=%.4f\n", result.report.n_frames,
                result.report.r1, result.report.r2);
    return 0;
}

int cmd_train(std::uint64_t seed, const std::string& scenarios_dir, int steps,
              double lr, const std::string& out, int batch, bool fusion) {
    const auto corpus = load_world(scenarios_dir);
    const HarnessConfig h = HarnessConfig::defaults();

    TrainSetup setup;
    setup.grid = h.grid;
    setup.fine_spec = h.fine_spec;
    setup.fine_spec.extent_x = 6.4;
    setup.fine_spec.extent_y = 6.4;
    // one occupancy slice next to the intensity channel: the online branch
    // needs to tell empty cells from dark ones
    setup.fine_spec.height_slices = 1;
    setup.fine_spec.height_min = -0.5;
    setup.fine_spec.height_max = 0.5;
    setup.coarse_spec = h.coarse_spec;
    setup.coarse_spec.extent_x = 12.8;
    setup.coarse_spec.extent_y = 12.8;
    setup.sensor = h.sensor;
    setup.sensor.dropout_prob = 0.3;
    setup.sensor.intensity_noise_sigma = 0.05;
    setup.use_fusion = fusion;
    // stride-1 branches: pooling would blur the cell-scale texture that
    // exact-cell matching depends on
    setup.f_config = NetConfig{1, {8, 8, 8, 8, 1}, 3, 0};
    setup.g_config = NetConfig{2, {8, 8, 8, 8, 1}, 3, 0};
    setup.gain_min = 0.5;
    setup.gain_max = 1.5;
    setup.bias_min = -0.1;
    setup.bias_max = 0.1;

    TrainConfig cfg;
    cfg.steps = steps;
    cfg.batch_size = batch;
    cfg.learning_rate = lr;
    cfg.seed = seed;

    ConvStack base(NetConfig{17, {8, 8}, 3, 0}, split_seed(seed, 0xba5e));
    base.set_frozen(true);

    const TrainResult result = train_side_tuned(corpus, base, cfg, setup);

    LocalizerWeights w;
    w.base = std::move(base);
    w.f = result.f;
    w.g = result.g;
    w.fusion = result.fusion;
    w.use_fusion = fusion;
    write_lpw(out, w);

    const std::filesystem::path loss_path = std::string(out) + ".loss.csv";
    std::ofstream os(loss_path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + loss_path.string());
    os << "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
        os << i << ',' << format_double(result.loss_curve[i]) << '\n';
    }

    std::printf("trained %d steps; checkpoint %s; loss curve %s\n", steps,
                out.c_str(), loss_path.string().c_str());
    if (!result.loss_curve.empty()) {
        std::printf("loss first=%.4f last=%.4f\n", result.loss_curve.front(),
                    result.loss_curve.back());
    }
    return 0;
}

int cmd_jitter_sweep(std::uint64_t seed, const std::string& scenarios_dir,
                     const std::string& axis, const std::string& levels_arg,
                     const std::string& out) {
    const auto corpus = load_world(scenarios_dir);
    const HarnessConfig cfg = HarnessConfig::defaults();

    JitterAxis jaxis;
    if (axis == "trans") {
        jaxis = JitterAxis::kTranslation;
    } else if (axis == "rot") {
        jaxis = JitterAxis::kRotation;
    } else {
        throw std::invalid_argument("--axis must be trans or rot");
    }

    std::vector<double> levels;
    std::string tok;
    for (char c : levels_arg + ",") {
        if (c == ',') {
            if (!tok.empty()) {
                const double v = std::stod(tok);
                levels.push_back(jaxis == JitterAxis::kRotation ? deg_to_rad(v) : v);
                tok.clear();
            }
        } else {
            tok += c;
        }
    }
    if (levels.empty()) throw std::invalid_argument("--levels is empty");

    const auto rows = run_jitter_sweep(corpus, jaxis, levels, cfg, seed, out);
    for (const auto& r : rows) {
        std::printf("level=%.4f collision=%.2f%% l2@5s=%.3f m\n",
                    jaxis == JitterAxis::kRotation ? rad_to_deg(r.level) : r.level,
                    r.executed.collision_rate, r.executed.l2_human_at_5s);
    }
    return 0;
}

int cmd_bench(const std::string& configs_arg, const std::string& sizes_arg, int reps,
              const std::string& out) {
    std::vector<std::string> configs;
    std::vector<int> sizes;
    std::string tok;
    for (char c : configs_arg + ",") {
        if (c == ',') {
            if (!tok.empty()) configs.push_back(tok);
            tok.clear();
        } else {
            tok += c;
        }
    }
    for (char c : sizes_arg + ",") {
        if (c == ',') {
            if (!tok.empty()) sizes.push_back(std::stoi(tok));
            tok.clear();
        } else {
            tok += c;
        }
    }
    const HarnessConfig cfg = HarnessConfig::defaults();
    const auto rows = bench_matcher(configs, sizes, reps, cfg, out);
    for (const auto& r : rows) {
        std::printf("%-8s %-6s %4d  median %8.3f ms  p90 %8.3f ms\n", r.config.c_str(),
                    r.path.c_str(), r.size, r.median_ms, r.p90_ms);
    }
    return 0;
}

int cmd_grad_check(std::uint64_t seed) {
    const double max_rel = run_grad_check(seed);
    std::printf("grad-check seed=%llu max relative error %.3e (tolerance 1e-3)\n",
                static_cast<unsigned long long>(seed), max_rel);
    return max_rel <= 1e-3 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ground-intensity LiDAR localization engine and evaluation harness"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand name

    std::uint64_t seed = 42;
    app.add_option("--seed", seed, "Global RNG seed")->capture_default_str();

    // gen-world
    auto* gen = app.add_subcommand("gen-world", "Generate a synthetic scenario corpus");
    std::string gen_out;
    int gen_count = 16, gen_amin = 8, gen_amax = 14;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Scenario count")->capture_default_str();
    gen->add_option("--n-actors-min", gen_amin)->capture_default_str();
    gen->add_option("--n-actors-max", gen_amax)->capture_default_str();

    // eval-loc
    auto* ev = app.add_subcommand("eval-loc", "Evaluate localization recall");
    std::string ev_dir, ev_weights, ev_out;
    bool ev_identity = false;
    double ev_trans = 0.5, ev_rot = 1.5, ev_dropout = 0.0, ev_int_noise = 0.0;
    double ev_gain_lo = 1.0, ev_gain_hi = 1.0, ev_bias_lo = 0.0, ev_bias_hi = 0.0;
    int ev_frames = 500;
    ev->add_option("--scenarios", ev_dir, "Scenario directory")->required();
    ev->add_option("--weights", ev_weights, "LPW1 checkpoint");
    ev->add_flag("--identity", ev_identity, "Use the identity embedding");
    ev->add_option("--trans-noise", ev_trans, "Max translation jitter (m)")
        ->capture_default_str();
    ev->add_option("--rot-noise", ev_rot, "Max rotation jitter (deg)")
        ->capture_default_str();
    ev->add_option("--out", ev_out, "Per-frame CSV")->required();
    ev->add_option("--frames", ev_frames, "Max frames")->capture_default_str();
    ev->add_option("--dropout", ev_dropout, "Sensor dropout probability")
        ->capture_default_str();
    ev->add_option("--int-noise", ev_int_noise, "Sensor intensity noise sigma")
        ->capture_default_str();
    ev->add_option("--gain-min", ev_gain_lo)->capture_default_str();
    ev->add_option("--gain-max", ev_gain_hi)->capture_default_str();
    ev->add_option("--bias-min", ev_bias_lo)->capture_default_str();
    ev->add_option("--bias-max", ev_bias_hi)->capture_default_str();

    // train
    auto* tr = app.add_subcommand("train", "Side-tuned localizer training");
    std::string tr_dir, tr_out;
    int tr_steps = 500, tr_batch = 1;
    double tr_lr = 1e-3;
    bool tr_no_fusion = false;
    tr->add_option("--scenarios", tr_dir, "Scenario directory")->required();
    tr->add_option("--steps", tr_steps, "Optimizer steps")->capture_default_str();
    tr->add_option("--lr", tr_lr, "Learning rate")->capture_default_str();
    tr->add_option("--out", tr_out, "Checkpoint path")->required();
    tr->add_option("--batch", tr_batch, "Batch size")->capture_default_str();
    tr->add_flag("--no-fusion", tr_no_fusion, "Disable multi-resolution fusion");

    // jitter-sweep
    auto* js = app.add_subcommand("jitter-sweep", "Pose-error propagation study");
    std::string js_dir, js_axis, js_levels, js_out;
    js->add_option("--scenarios", js_dir, "Scenario directory")->required();
    js->add_option("--axis", js_axis, "trans | rot")->required();
    js->add_option("--levels", js_levels, "Comma-separated levels (m or deg)")
        ->required();
    js->add_option("--out", js_out, "Output CSV")->required();

    // bench
    auto* be = app.add_subcommand("bench", "Matcher runtime benchmark");
    std::string be_configs = "tiny,big", be_sizes = "240,480", be_out;
    int be_reps = 5;
    be->add_option("--configs", be_configs, "identity,tiny,big subset")
        ->capture_default_str();
    be->add_option("--sizes", be_sizes, "Embedding sizes")->capture_default_str();
    be->add_option("--reps", be_reps, "Repetitions (>= 3)")->capture_default_str();
    be->add_option("--out", be_out, "Output CSV")->required();

    // grad-check
    auto* gc = app.add_subcommand("grad-check",
                                  "Analytic vs finite-difference gradients");

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            return cmd_gen_world(seed, gen_out, gen_count, gen_amin, gen_amax);
        }
        if (ev->parsed()) {
            if (!ev_identity && ev_weights.empty()) {
                throw std::invalid_argument("eval-loc needs --weights or --identity");
            }
            return cmd_eval_loc(seed, ev_dir, ev_weights, ev_identity, ev_trans, ev_rot,
                                ev_out, ev_frames, ev_dropout, ev_int_noise, ev_gain_lo,
                                ev_gain_hi, ev_bias_lo, ev_bias_hi);
        }
        if (tr->parsed()) {
            return cmd_train(seed, tr_dir, tr_steps, tr_lr, tr_out, tr_batch,
                             !tr_no_fusion);
        }
        if (js->parsed()) {
            return cmd_jitter_sweep(seed, js_dir, js_axis, js_levels, js_out);
        }
        if (be->parsed()) {
            return cmd_bench(be_configs, be_sizes, be_reps, be_out);
        }
        if (gc->parsed()) {
            return cmd_grad_check(seed);
        }
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
