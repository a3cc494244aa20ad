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


#include <bwleak/model_catalog.hpp>
#include <bwleak/npu_sim.hpp>
#include <bwleak/tile_tuner.hpp>
#include <bwleak/traffic_shaper.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace bwleak;

namespace {

struct Tuned {
    ModelSpec model;
    TileSchedule schedule;
};

Tuned tuned(const char* name) {
    Tuned t{load_model(name), {}};
    t.schedule = tune(t.model, NpuConfig{});
    return t;
}

ShaperConfig at(double fraction) {
    ShaperConfig c;
    c.target_Bps = fraction * NpuConfig{}.dram_bandwidth_Bps;
    return c;
}

}  // namespace

TEST_SUITE("traffic_shaper") {

TEST_CASE("overhead is the relative slowdown") {
    CHECK(overhead(1000, 1150) == doctest::Approx(0.15));
    CHECK(overhead(1000, 1000) == 0.0);
}

TEST_CASE("an idle port emits only fake traffic at a constant rate") {
    const NpuConfig npu;
    ShaperConfig cfg = at(0.5);
    ShapedMemoryPort port(npu, cfg, 1'000'000);
    port.finish(40'000);
    const auto txns = port.take_transactions();
    REQUIRE_FALSE(txns.empty());
    for (const auto& t : txns) {
        CHECK(t.authenticity == Authenticity::fake);
        CHECK(t.payload_bytes == 0);
    }
    const auto trace = sample_counter(txns, cfg.window_us, npu.clock_hz);
    CHECK(max_window_deviation(trace, cfg.target_Bps) <= cfg.effective_quantum(npu));
}

TEST_CASE("a target at the DRAM rate costs nothing") {
    const auto t = tuned("vgg11");
    const auto r = shape(t.model, t.schedule, NpuConfig{}, at(1.0), 3);
    CHECK(r.stall_cycles == 0);
    CHECK(r.overhead == 0.0);
    CHECK(r.shaped_total_cycles == r.unshaped_total_cycles);
}

TEST_CASE("shaped windows stay within one quantum of the target") {
    const NpuConfig npu;
    for (const char* name : {"alexnet", "resnet18"}) {
        const auto t = tuned(name);
        for (double f : {0.9, 0.5}) {
            const auto cfg = at(f);
            const auto r = shape(t.model, t.schedule, npu, cfg, 1);
            const auto trace = shaped_trace(r, cfg.window_us, npu.clock_hz);
            CHECK(max_window_deviation(trace, cfg.target_Bps) <= cfg.effective_quantum(npu));
        }
    }
}

TEST_CASE("every real byte is carried exactly once") {
    const NpuConfig npu;
    const auto t = tuned("alexnet");
    const auto r = shape(t.model, t.schedule, npu, at(0.5), 2);
    std::uint64_t read = 0, write = 0;
    for (const auto& x : r.txns) {
        if (x.authenticity != Authenticity::real) continue;
        (x.kind == TxnKind::read ? read : write) += x.payload_bytes;
    }
    SimOptions o;
    const auto plain = simulate_inference(t.model, t.schedule, npu, 2, o);
    CHECK(read == r.demand_read_bytes);
    CHECK(write == r.demand_write_bytes);
    CHECK(read == plain.trace.total_read());
    CHECK(write == plain.trace.total_write());
}

TEST_CASE("overhead does not increase with the target") {
    const auto t = tuned("alexnet");
    double prev = 1e300;
    for (double f : {0.3, 0.45, 0.6, 0.8, 1.0}) {
        const double o = shape(t.model, t.schedule, NpuConfig{}, at(f), 1).overhead;
        CHECK(o <= prev);
        CHECK(o >= 0.0);
        prev = o;
    }
}

TEST_CASE("the shaped read stream does not depend on the workload") {
    const NpuConfig npu;
    const auto cfg = at(0.5);
    const auto a = tuned("alexnet");
    const auto b = tuned("vgg16");
    const auto ta = shaped_trace(shape(a.model, a.schedule, npu, cfg, 1), cfg.window_us, npu.clock_hz);
    const auto tb = shaped_trace(shape(b.model, b.schedule, npu, cfg, 4), cfg.window_us, npu.clock_hz);
    const std::size_t n = std::min(ta.size(), tb.size()) - 1;
    REQUIRE(n > 100);
    CHECK(std::equal(ta.read_bytes.begin(), ta.read_bytes.begin() + n, tb.read_bytes.begin()));
}

TEST_CASE("bad targets are rejected") {
    const auto t = tuned("alexnet");
    const NpuConfig npu;
    CHECK_THROWS_AS(shape(t.model, t.schedule, npu, at(0.0), 1), Error);
    CHECK_THROWS_AS(shape(t.model, t.schedule, npu, at(1.5), 1), Error);
    ShaperConfig slow = at(0.01);
    slow.max_slowdown = 2;
    CHECK_THROWS_AS(shape(t.model, t.schedule, npu, slow, 1), InfeasibleTarget);
}

TEST_CASE("peak and mean rates") {
    BandwidthTrace tr;
    tr.window_us = 4;
    tr.read_bytes = {100, 400, 100, 200};
    tr.write_bytes.assign(4, 0);
    CHECK(peak_read_Bps(tr) == doctest::Approx(400 / 4e-6));
    CHECK(mean_read_Bps(tr) == doctest::Approx(800 / 16e-6));
    CHECK(max_window_deviation(tr, 200 / 4e-6) == doctest::Approx(200));
}

}  // TEST_SUITE
