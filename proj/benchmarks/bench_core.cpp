#include <benchmark/benchmark.h>

#include "cotsnet/geometry.hpp"
#include "cotsnet/metrics.hpp"
#include "cotsnet/trainer.hpp"

using namespace cots;

namespace {

Mask disk_mask(int n, double radius) {
    Mask m(n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            m.at(y, x) = std::hypot(y - n / 2.0, x - n / 2.0) <= radius ? 1 : 0;
    return m;
}

TrainConfig bench_config(int input, std::vector<int> channels) {
    TrainConfig cfg;
    cfg.model.input_h = cfg.model.input_w = input;
    cfg.model.num_stages = static_cast<int>(channels.size());
    cfg.model.stage_channels = std::move(channels);
    cfg.model.decoder_feature_channels = 32;
    cfg.batch_size = 4;
    cfg.augment = false;
    cfg.checkpoint_every = 0;
    return cfg;
}

void BM_BoundaryMap(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Mask m = disk_mask(n, n * 0.3);
    for (auto _ : state) {
        auto bm = geometry::boundary_map(m, {5, 1.0});
        benchmark::DoNotOptimize(bm.values.v.data());
    }
    state.SetItemsProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_BoundaryMap)->Arg(64)->Arg(256);

void BM_SurfaceDistances(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Mask a = disk_mask(n, n * 0.3);
    const Mask b = disk_mask(n, n * 0.35);
    for (auto _ : state) {
        auto d = geometry::directed_surface_distances(a, b);
        benchmark::DoNotOptimize(d.data());
    }
}
BENCHMARK(BM_SurfaceDistances)->Arg(64)->Arg(256);

void BM_UniversalForward(benchmark::State& state) {
    const int input = static_cast<int>(state.range(0));
    TrainConfig cfg = bench_config(input, {8, 16, 32, 64});
    auto net = build_universal(cfg.model, 0);
    Rng rng(1);
    Tensor images({4, 3, input, input});
    for (int64_t i = 0; i < images.numel(); ++i)
        images[i] = static_cast<float>(rng.uniform(0.0, 1.0));
    for (auto _ : state) {
        nn::Graph g(false);
        auto out = net->forward(g, images, Domain::target);
        benchmark::DoNotOptimize(out.prediction->value.data());
    }
}
BENCHMARK(BM_UniversalForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    TrainConfig cfg = bench_config(static_cast<int>(state.range(0)), {8, 16, 32, 64});
    cfg.seed = 0;
    Trainer trainer(cfg);
    auto source = data::generate_synthetic(data::SynthStyle::blob_texture, 4, 0,
                                           cfg.model.input_h, Domain::source);
    auto target = data::generate_synthetic(data::SynthStyle::ellipse_speckle, 4, 0,
                                           cfg.model.input_h, Domain::target);
    auto src = data::make_batch(source, {0, 1, 2, 3}, Domain::source);
    auto tgt = data::make_batch(target, {0, 1, 2, 3}, Domain::target);
    for (auto _ : state) {
        auto rec = trainer.train_step(src, tgt);
        benchmark::DoNotOptimize(rec.seg);
    }
}
BENCHMARK(BM_TrainStep)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
    TrainConfig cfg = bench_config(64, {8, 16, 32, 64});
    auto net = build_universal(cfg.model, 0);
    auto samples = data::generate_synthetic(data::SynthStyle::ellipse_speckle, 8, 0, 64,
                                            Domain::target);
    for (auto _ : state) {
        auto report = metrics::evaluate(*net, samples, Domain::target);
        benchmark::DoNotOptimize(report.aggregate.dice);
    }
}
BENCHMARK(BM_Evaluate)->Unit(benchmark::kMillisecond);

void BM_Augment(benchmark::State& state) {
    auto samples = data::generate_synthetic(data::SynthStyle::blob_texture, 1, 0, 256,
                                            Domain::source);
    Rng rng(3);
    for (auto _ : state) {
        auto s = data::augment(samples[0], rng, {5, 1.0});
        benchmark::DoNotOptimize(s.image.data());
    }
}
BENCHMARK(BM_Augment)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
