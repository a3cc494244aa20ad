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
#include <bwleak/error.hpp>
#include <bwleak/rng.hpp>
#include <bwleak/tile_tuner.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

using namespace bwleak;

namespace {

LayerSpec layer(int id, std::uint64_t ic, std::uint64_t oc, std::uint64_t k, std::uint64_t hw) {
    LayerSpec l;
    l.id = id;
    l.in_channels = ic;
    l.out_channels = oc;
    l.kernel_h = l.kernel_w = k;
    l.input_h = l.input_w = hw;
    return l;
}

// Largest one-to-one matching within tolerance, by exhaustive search.
std::size_t brute_matching(const std::vector<std::uint64_t>& pred, const std::vector<std::uint64_t>& truth,
                           double tol, std::size_t i, std::vector<bool>& used) {
    if (i == pred.size()) return 0;
    std::size_t best = brute_matching(pred, truth, tol, i + 1, used);
    for (std::size_t j = 0; j < truth.size(); ++j) {
        if (used[j]) continue;
        const double d = std::abs(static_cast<double>(pred[i]) - static_cast<double>(truth[j]));
        if (d > tol) continue;
        used[j] = true;
        best = std::max(best, 1 + brute_matching(pred, truth, tol, i + 1, used));
        used[j] = false;
    }
    return best;
}

std::vector<std::uint64_t> random_positions(Rng& rng, std::size_t n, std::uint64_t span) {
    std::set<std::uint64_t> s;
    while (s.size() < n) s.insert(rng.below(span));
    return {s.begin(), s.end()};
}

}  // namespace

TEST_SUITE("boundary_detector") {

TEST_CASE("score examples") {
    auto s = score_boundaries({10, 50, 90}, {12}, 5);
    CHECK(s.precision == doctest::Approx(1.0 / 3));
    CHECK(s.recall == 1.0);
    s = score_boundaries({10}, {12, 200}, 5);
    CHECK(s.precision == 1.0);
    CHECK(s.recall == 0.5);
    s = score_boundaries({}, {}, 5);
    CHECK(s.precision == 0.0);
    CHECK(s.recall == 0.0);
    // One truth cannot absorb two predictions.
    s = score_boundaries({10, 11}, {12}, 5);
    CHECK(s.matched.size() == 1);
}

TEST_CASE("matching agrees with an exhaustive bipartite search") {
    Rng rng(2024);
    for (int inst = 0; inst < 50; ++inst) {
        const auto pred = random_positions(rng, 1 + rng.below(7), 120);
        const auto truth = random_positions(rng, 1 + rng.below(7), 120);
        const double tol = static_cast<double>(1 + rng.below(15));
        std::vector<bool> used(truth.size(), false);
        const std::size_t best = brute_matching(pred, truth, tol, 0, used);
        const auto s = score_boundaries(pred, truth, tol);
        CHECK(s.matched.size() == best);
        CHECK(s.precision == doctest::Approx(static_cast<double>(best) / pred.size()));
        CHECK(s.recall == doctest::Approx(static_cast<double>(best) / truth.size()));
        std::set<std::size_t> ps, ts;
        for (auto [p, t] : s.matched) {
            CHECK(ps.insert(p).second);
            CHECK(ts.insert(t).second);
            CHECK(std::abs(static_cast<double>(pred[p]) - static_cast<double>(truth[t])) <= tol);
        }
    }
}

TEST_CASE("model rows split easy from hard boundaries") {
    const std::vector<BoundaryLabel> labels{{0, 1, BoundaryClass::T1_diff_tile_size},
                                            {1, 2, BoundaryClass::T3_identical}};
    const auto r = score_model("m", {101, 300}, {100, 200}, labels, 8);
    CHECK(r.matched == 1);
    CHECK(r.matched_easy == 1);
    CHECK(r.easy_precision == 0.5);
    CHECK(r.easy_recall == 0.5);
    CHECK(r.all_precision == 0.5);
    CHECK(r.all_recall == 0.5);
    CHECK_FALSE(r.na);
    const auto none = score_model("n", {}, {100, 200}, labels, 8);
    CHECK(none.na);
    CHECK_THROWS_AS(score_model("m", {1}, {100}, labels, 8), Error);

    const auto pooled = aggregate_rows({r, none});
    CHECK(pooled.model == "overall");
    CHECK(pooled.boundaries == 4);
    CHECK(pooled.matched == 1);
    CHECK(pooled.all_recall == 0.25);
    CHECK(pooled.all_precision == 0.5);

    std::ostringstream txt, csv;
    write_boundary_report(txt, {r, none, pooled});
    write_boundary_csv(csv, {r, none, pooled});
    CHECK(txt.str().find("NA") != std::string::npos);
    CHECK(csv.str().rfind("model,", 0) == 0);
}

TEST_CASE("profile database covers each layer type once per config") {
    const auto m = load_model("vgg11");
    const NpuConfig npu;
    ProfileParams p;
    p.configs_per_layer = 2;
    const auto db = build_profile_db({m}, npu, p);
    std::set<std::string> types;
    for (auto i : m.weight_layer_indices()) types.insert(m.layers[i].type_label());
    CHECK(db.entries.size() == 2 * types.size());
    for (const auto& e : db.entries) {
        CHECK(types.count(e.layer_type) == 1);
        CHECK(e.duration_windows > 0);
        CHECK(e.read_series.size() == p.phases);
        CHECK(e.part_read_bw.size() == p.rate_parts);
    }
    const auto again = build_profile_db({m}, npu, p);
    REQUIRE(again.entries.size() == db.entries.size());
    for (std::size_t i = 0; i < db.entries.size(); ++i) {
        CHECK(again.entries[i].read_series == db.entries[i].read_series);
        CHECK(again.entries[i].config == db.entries[i].config);
    }
    const auto sorted = db.by_duration();
    CHECK(std::is_sorted(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.duration_windows < b.duration_windows;
    }));
}

TEST_CASE("a rate step between two layers is found") {
    const NpuConfig npu;
    const DetectorParams dp;
    ModelSpec m;
    m.name = "two";
    m.layers = {layer(0, 128, 128, 3, 56), layer(1, 128, 512, 1, 56)};
    const auto sched = tune(m, npu);
    const auto db = build_profile_db({m}, npu);
    std::vector<BandwidthTrace> own;
    for (std::uint64_t s = 100; s < 104; ++s) own.push_back(simulate_inference(m, sched, npu, s).trace);
    const auto cb = fit_codebook(own, dp, 16, 1);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto sim = simulate_inference(m, sched, npu, seed);
        const auto truth = true_boundaries(m, sim);
        REQUIRE(truth.size() == 1);
        DetectionDiagnostics diag;
        const auto b = detect_boundaries(sim.trace, cb, db, dp, &diag);
        REQUIRE(b.positions.size() == 1);
        CHECK(std::abs(static_cast<double>(b.positions[0]) - static_cast<double>(truth[0])) <=
              static_cast<double>(dp.features.win_len));
        CHECK(b.confidence.size() == 1);
        CHECK(diag.threshold.size() == dp.bow_spans.size());
        CHECK(detect_boundaries(sim.trace, cb, db, dp).positions == b.positions);
    }
}

TEST_CASE("a single layer has no boundary") {
    const NpuConfig npu;
    const DetectorParams dp;
    ModelSpec m;
    m.name = "one";
    m.layers = {layer(0, 128, 128, 3, 56)};
    const auto sched = tune(m, npu);
    const auto db = build_profile_db({m}, npu);
    const auto sim = simulate_inference(m, sched, npu, 3);
    const auto cb = fit_codebook({sim.trace}, dp, 16, 1);
    CHECK(detect_boundaries(sim.trace, cb, db, dp).positions.empty());
}

}  // TEST_SUITE
