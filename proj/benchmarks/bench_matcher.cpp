#include <benchmark/benchmark.h>

#include "lploc/matcher.hpp"
#include "lploc/net.hpp"
#include "lploc/rng.hpp"

namespace {

using namespace lploc;

struct MatchInputs {
    BevGrid online;
    BevGrid map;
    OffsetGrid grid;
};

MatchInputs make_inputs(int size) {
    const double res = 0.05;
    const int pad = 10;
    MatchInputs in{
        BevGrid(size, size, 1, res, -res * size / 2, -res * size / 2),
        BevGrid(size + 2 * pad, size + 2 * pad, 1, res, -res * (size / 2 + pad),
                -res * (size / 2 + pad)),
        default_offset_grid()};
    Rng rng(size);
    for (auto& v : in.online.data()) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : in.map.data()) v = static_cast<float>(rng.uniform(-1, 1));
    return in;
}

void BM_ScoreDirect(benchmark::State& state) {
    const MatchInputs in = make_inputs(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        const ScoreVolume vol = score_direct(in.online, in.map, in.grid);
        benchmark::DoNotOptimize(vol.scores.data());
    }
}
BENCHMARK(BM_ScoreDirect)->Arg(120)->Arg(240)->Unit(benchmark::kMillisecond);

void BM_ScoreFft(benchmark::State& state) {
    const MatchInputs in = make_inputs(static_cast<int>(state.range(0)));
    for (auto _ : state) {
        const ScoreVolume vol = score_fft(in.online, in.map, in.grid);
        benchmark::DoNotOptimize(vol.scores.data());
    }
}
BENCHMARK(BM_ScoreFft)->Arg(120)->Arg(240)->Arg(480)->Unit(benchmark::kMillisecond);

void BM_EmbedTiny(benchmark::State& state) {
    const int size = static_cast<int>(state.range(0));
    const ConvStack net(tiny_config(1), 3);
    BevGrid grid(size, size, 1, 0.05, 0.0, 0.0);
    Rng rng(7);
    for (auto& v : grid.data()) v = static_cast<float>(rng.uniform(0, 1));
    for (auto _ : state) {
        const BevGrid emb = net.forward(grid);
        benchmark::DoNotOptimize(emb.data().data());
    }
}
BENCHMARK(BM_EmbedTiny)->Arg(240)->Arg(480)->Unit(benchmark::kMillisecond);

void BM_Voxelize(benchmark::State& state) {
    GridSpec spec;
    spec.resolution = 0.05;
    spec.extent_x = 12.8;
    spec.extent_y = 12.8;
    Rng rng(9);
    std::vector<LidarPoint> pts;
    for (int i = 0; i < 100000; ++i) {
        pts.push_back({static_cast<float>(rng.uniform(-6.4, 6.4)),
                       static_cast<float>(rng.uniform(-6.4, 6.4)), 0.0f,
                       static_cast<float>(rng.uniform(0, 1))});
    }
    for (auto _ : state) {
        const BevGrid g = voxelize(pts, spec);
        benchmark::DoNotOptimize(g.data().data());
    }
}
BENCHMARK(BM_Voxelize)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
