/*
 * Copyright 2026 The bwleak Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <bwleak/boundary_detector.hpp>
#include <bwleak/features.hpp>
#include <bwleak/layer_classifier.hpp>
#include <bwleak/model_catalog.hpp>
#include <bwleak/npu_sim.hpp>
#include <bwleak/rng.hpp>
#include <bwleak/tile_tuner.hpp>
#include <bwleak/traffic_shaper.hpp>

#include <benchmark/benchmark.h>

#include <vector>

using namespace bwleak;

namespace {

struct Victim {
    ModelSpec model;
    TileSchedule schedule;
};

const Victim& victim(const char* name) {
    static std::vector<std::pair<std::string, Victim>> cache;
    for (const auto& [n, v] : cache)
        if (n == name) return v;
    Victim v{load_model(name), {}};
    v.schedule = tune(v.model, NpuConfig{});
    cache.emplace_back(name, std::move(v));
    return cache.back().second;
}

void BM_Tune(benchmark::State& state) {
    const auto m = load_model("resnet50");
    for (auto _ : state) benchmark::DoNotOptimize(tune(m, NpuConfig{}));
}
BENCHMARK(BM_Tune)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
    const auto& v = victim("vgg16");
    std::uint64_t seed = 0;
    for (auto _ : state) benchmark::DoNotOptimize(simulate_inference(v.model, v.schedule, NpuConfig{}, ++seed));
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMillisecond);

void BM_Shape(benchmark::State& state) {
    const auto& v = victim("alexnet");
    ShaperConfig cfg;
    cfg.target_Bps = 0.5 * NpuConfig{}.dram_bandwidth_Bps;
    for (auto _ : state) benchmark::DoNotOptimize(shape(v.model, v.schedule, NpuConfig{}, cfg, 1));
}
BENCHMARK(BM_Shape)->Unit(benchmark::kMillisecond);

void BM_Haar(benchmark::State& state) {
    Rng rng(1);
    std::vector<double> s(static_cast<std::size_t>(state.range(0)));
    for (auto& x : s) x = rng.uniform();
    for (auto _ : state) benchmark::DoNotOptimize(haar_dwt(s, 3));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Haar)->Arg(64)->Arg(4096);

void BM_Detect(benchmark::State& state) {
    const auto& v = victim("vgg11");
    const NpuConfig npu;
    const DetectorParams dp;
    const auto own = simulate_inference(v.model, v.schedule, npu, 777).trace;
    const auto cb = fit_codebook({own}, dp, 16, 5);
    const auto db = build_profile_db({v.model}, npu);
    const auto trace = simulate_inference(v.model, v.schedule, npu, 1).trace;
    for (auto _ : state) benchmark::DoNotOptimize(detect_boundaries(trace, cb, db, dp));
}
BENCHMARK(BM_Detect)->Unit(benchmark::kMillisecond);

void BM_TrainMlp(benchmark::State& state) {
    RunParams rp;
    rp.runs_per_class = 20;
    const auto ds = build_dataset(profile_runs({victim("alexnet").model}, NpuConfig{}, rp, 1), make_layout(true));
    NetHyper h;
    h.epochs = 50;
    for (auto _ : state) benchmark::DoNotOptimize(train_mlp(ds, h, 1));
}
BENCHMARK(BM_TrainMlp)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
