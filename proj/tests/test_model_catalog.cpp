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


#include <bwleak/error.hpp>
#include <bwleak/model_catalog.hpp>
#include <bwleak/npu_config.hpp>
#include <bwleak/tile_tuner.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

using namespace bwleak;

namespace {

LayerSpec conv(std::uint64_t ic, std::uint64_t oc, std::uint64_t k, std::uint64_t hw = 8) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.in_channels = ic;
    l.out_channels = oc;
    l.kernel_h = l.kernel_w = k;
    l.input_h = l.input_w = hw;
    return l;
}

std::size_t count_easy(const std::vector<BoundaryLabel>& labels) {
    std::size_t n = 0;
    for (const auto& l : labels) n += l.easy();
    return n;
}

}  // namespace

TEST_SUITE("catalog") {

TEST_CASE("shipped catalogs carry the traced boundary counts") {
    CHECK(load_model("alexnet").boundary_count() == 4);
    CHECK(load_model("resnet50").boundary_count() == 52);
    CHECK(load_model("vgg16").weight_layer_indices().size() == 12);
    CHECK(shipped_models().size() == 6);
}

TEST_CASE("easy boundary counts under the tuned schedule") {
    const NpuConfig npu;
    const auto alex = load_model("alexnet");
    const auto alex_labels = label_boundaries(alex, tune(alex, npu));
    CHECK(alex_labels.size() == 4);
    CHECK(count_easy(alex_labels) == 3);
    const auto vgg = load_model("vgg16");
    const auto vgg_labels = label_boundaries(vgg, tune(vgg, npu));
    CHECK(vgg_labels.size() == 11);
    CHECK(count_easy(vgg_labels) == 8);
}

TEST_CASE("unknown names and malformed catalogs are rejected") {
    CHECK_THROWS_WITH_AS(load_model("nosuchnet"), doctest::Contains("nosuchnet"), Error);
    std::istringstream negative("0,conv,3,-64,3,3,32,32,1\n");
    CHECK_THROWS_AS(parse_catalog(negative, "bad", "bad.csv"), Error);
    std::istringstream short_line("0,conv,3,64\n");
    CHECK_THROWS_WITH_AS(parse_catalog(short_line, "bad", "bad.csv"), doctest::Contains("bad.csv:1"), ParseError);
}

TEST_CASE("adjacent layers are dimension compatible") {
    for (const auto& name : shipped_models()) {
        const auto m = load_model(name);
        CHECK_NOTHROW(validate(m));
    }
}

TEST_CASE("enumeration matches a brute-force divisor search") {
    NpuConfig npu;
    npu.weight_scratchpad_bytes = 1 << 20;
    const LayerSpec l = conv(8, 8, 3);
    std::vector<TileConfig> brute;
    for (std::uint64_t a = 1; a <= 8; ++a)
        for (std::uint64_t b = 1; b <= 8; ++b)
            for (std::uint64_t c = 1; c <= 3; ++c)
                for (std::uint64_t d = 1; d <= 3; ++d)
                    if (8 % a == 0 && 8 % b == 0 && 3 % c == 0 && 3 % d == 0) brute.push_back({a, b, c, d});
    const auto got = enumerate_tile_configs(l, npu);
    CHECK(got == brute);
    CHECK(std::find(got.begin(), got.end(), TileConfig{8, 8, 3, 3}) != got.end());
}

TEST_CASE("enumeration under capacity equals a filtered brute force for small layers") {
    NpuConfig npu;
    npu.weight_scratchpad_bytes = 200;
    npu.dma_burst_bytes = 64;
    for (std::uint64_t ic : {4u, 12u, 32u})
        for (std::uint64_t oc : {6u, 16u, 30u})
            for (std::uint64_t k : {1u, 3u}) {
                const LayerSpec l = conv(ic, oc, k);
                std::size_t n = 0;
                for (std::uint64_t a = 1; a <= oc; ++a)
                    for (std::uint64_t b = 1; b <= ic; ++b)
                        for (std::uint64_t c = 1; c <= k; ++c)
                            for (std::uint64_t d = 1; d <= k; ++d)
                                n += oc % a == 0 && ic % b == 0 && k % c == 0 && k % d == 0 &&
                                     a * b * c * d <= 200;
                CHECK(enumerate_tile_configs(l, npu).size() == n);
            }
}

TEST_CASE("a scratchpad smaller than one element fits no tile") {
    NpuConfig npu;
    npu.weight_scratchpad_bytes = 1;
    auto l = conv(8, 8, 3);
    CHECK(enumerate_tile_configs(l, npu).size() == 1);
    l.element_size = 2;
    CHECK_THROWS_AS(enumerate_tile_configs(l, npu), Error);
}

TEST_CASE("tile counts and sizes") {
    const LayerSpec l = conv(32, 64, 3);
    CHECK(tiles_for(l, {64, 32, 3, 3}) == TileShape{1, l.weight_bytes()});
    CHECK(tiles_for(l, {16, 32, 3, 3}) == TileShape{4, l.weight_bytes() / 4});
    const LayerSpec odd = conv(8, 10, 1);
    const TileShape padded = tiles_for(odd, {4, 8, 1, 1});
    CHECK(padded.num_tiles == 3);
    CHECK(static_cast<double>(padded.bytes_per_tile) >
          static_cast<double>(odd.weight_bytes()) / static_cast<double>(padded.num_tiles));
    CHECK(padded.num_tiles * padded.bytes_per_tile >= odd.weight_bytes());
    CHECK_THROWS_AS(tiles_for(l, {65, 1, 1, 1}), Error);
}

TEST_CASE("unpadded tile bytes sum to the layer's weights") {
    const LayerSpec l = conv(12, 10, 3);
    for (const TileConfig c : {TileConfig{4, 5, 2, 2}, TileConfig{3, 12, 3, 1}, TileConfig{10, 7, 1, 3}}) {
        const auto parts = unpadded_tile_bytes(l, c);
        CHECK(parts.size() == tiles_for(l, c).num_tiles);
        CHECK(std::accumulate(parts.begin(), parts.end(), std::uint64_t{0}) == l.weight_bytes());
    }
}

TEST_CASE("boundary classes partition on (bytes per tile, tile count)") {
    CHECK(classify_boundary({4, 100}, {4, 200}) == BoundaryClass::T1_diff_tile_size);
    CHECK(classify_boundary({4, 100}, {8, 100}) == BoundaryClass::T2_same_size_diff_count);
    CHECK(classify_boundary({4, 100}, {4, 100}) == BoundaryClass::T3_identical);

    ModelSpec twin;
    twin.name = "twin";
    twin.layers = {conv(16, 16, 3), conv(16, 16, 3)};
    twin.layers[1].id = 1;
    TileSchedule s;
    s.per_layer[0] = s.per_layer[1] = {8, 16, 3, 3};
    const auto labels = label_boundaries(twin, s);
    REQUIRE(labels.size() == 1);
    CHECK(labels[0].cls == BoundaryClass::T3_identical);
    s.per_layer.erase(1);
    CHECK_THROWS_AS(label_boundaries(twin, s), Error);
}

}  // TEST_SUITE
