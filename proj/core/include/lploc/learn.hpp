#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lploc/matcher.hpp"
#include "lploc/net.hpp"
#include "lploc/rng.hpp"
#include "lploc/world.hpp"

namespace lploc {

struct TrainConfig {
    int steps = 500;
    int batch_size = 1;
    double learning_rate = 1e-3;
    enum class Optimizer { kSgd, kAdam } optimizer = Optimizer::kAdam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double noise_max_trans = 0.5;            // metres
    double noise_max_rot = 0.02617993877991494;  // 1.5 deg
    std::uint64_t seed = 1;

    void validate(const OffsetGrid& grid) const;
};

struct GridIndex {
    int ix = 0;
    int iy = 0;
    int iyaw = 0;
};

// Nearest grid cell per axis (halves round away from zero). Offsets beyond
// the grid envelope (max + half step) are rejected.
GridIndex snap_to_grid(const OffsetGrid& grid, const PoseOffset& offset);

ProbVolume one_hot_target(const OffsetGrid& grid, const PoseOffset& gt_offset);

// -log p(target cell); target must be one-hot.
double loss_ce(const ProbVolume& p, const ProbVolume& target);

// The localizer under training. `base` stands in for the trained coarse
// perception backbone and stays frozen throughout.
struct LocalizerModel {
    ConvStack f;
    ConvStack g;
    ConvStack base;
    FusionParams fusion;
    bool use_fusion = false;
};

// One training example with everything pre-rasterized. `pad` is the margin
// (in cells) of the map crop around the online footprint.
struct TrainExample {
    Tensor fine;
    Tensor coarse;
    Tensor map_crop;
    double resolution = 0.05;
    int pad = 10;
    // coarse-feature crop covering the fine extent and its upsample factor
    int coarse_crop_r0 = 0, coarse_crop_c0 = 0;
    int coarse_crop_h = 0, coarse_crop_w = 0;
    int up_factor = 4;
    GridIndex target;
};

struct ForwardCache {
    StackCache f_cache;
    StackCache g_cache;
    Tensor g_out;
    Tensor base_out;
    Tensor coarse_cropped;
    Tensor proj;        // 1x1 conv output
    Tensor upsampled;
    Tensor online_emb;
    Tensor map_emb;
    std::vector<Tensor> rotated;  // per yaw candidate
    ScoreVolume scores;
    ProbVolume prob;
    double loss = 0.0;
};

// Full training forward: embeddings, correlation scores over the offset
// grid, softmax, cross-entropy. Deterministic.
double forward_loss(const LocalizerModel& model, const OffsetGrid& grid,
                    const TrainExample& ex, ForwardCache* cache);

struct GradientSet {
    StackGrads f;
    StackGrads g;
    std::vector<double> fusion_w;
    double fusion_b = 0.0;
    double fusion_mix = 0.0;

    double max_abs() const;
};

// Exact reverse-mode gradients of the cross-entropy loss for all unfrozen
// parameters (f, g, fusion). Bilinear resampling weights are constants.
GradientSet backward(const LocalizerModel& model, const OffsetGrid& grid,
                     const TrainExample& ex, const ForwardCache& cache);

// Central finite differences over every unfrozen parameter. O(params)
// forward passes; the model is restored bit-exactly.
GradientSet fd_gradient_oracle(LocalizerModel& model, const OffsetGrid& grid,
                               const TrainExample& ex, double step);

// Experiment-level knobs for building training examples from scenarios.
struct TrainSetup {
    OffsetGrid grid;
    GridSpec fine_spec;
    GridSpec coarse_spec;
    SensorModel sensor;
    NetConfig f_config = tiny_config(1);
    NetConfig g_config = tiny_config(1);
    bool use_fusion = true;
    // per-sweep intensity corruption ranges (gain multiplies, bias adds)
    double gain_min = 1.0, gain_max = 1.0;
    double bias_min = 0.0, bias_max = 0.0;
};

TrainExample make_train_example(const Scenario& scenario, const TrainSetup& setup,
                                const TrainConfig& cfg, Rng& rng);

struct TrainResult {
    ConvStack f;
    ConvStack g;
    FusionParams fusion;
    std::vector<double> loss_curve;  // one entry per step (batch mean)
};

// Side-tuned training: the coarse base is frozen; only f, g and the fusion
// parameters learn. Per step, draws a scenario and a uniform pose offset
// inside the noise envelope, renders and rasterizes, and applies one
// optimizer update. Returns the trained branches plus the loss curve.
TrainResult train_side_tuned(std::span<const Scenario> scenarios,
                             const ConvStack& base, const TrainConfig& cfg,
                             const TrainSetup& setup);

// Mean loss of a fixed model over deterministic held-out draws.
double mean_eval_loss(const LocalizerModel& model, std::span<const Scenario> scenarios,
                      const TrainSetup& setup, const TrainConfig& cfg,
                      std::uint64_t eval_seed, int n_examples);

// Analytic backward vs the central-difference oracle on a seeded 2-layer
// instance with 16x16 inputs, fusion included. Returns the max per-parameter
// relative error (absolute floor 1e-6). Central differences are only valid
// when no rectifier flips inside the probe interval, so fixture seeds are
// chosen with a margin; arbitrary seeds can land on a kink.
double run_grad_check(std::uint64_t seed, double fd_step = 1e-3);

}  // namespace lploc
