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
#include <bwleak/features.hpp>
#include <bwleak/rng.hpp>

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <sstream>

using namespace bwleak;

namespace {

double energy(const std::vector<double>& v) {
    return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

std::vector<double> random_signal(Rng& rng, std::size_t n) {
    std::vector<double> s(n);
    for (auto& x : s) x = rng.uniform() * 1000.0 - 200.0;
    return s;
}

}  // namespace

TEST_SUITE("features") {

TEST_CASE("sliding windows drop the partial tail") {
    std::vector<double> s(10);
    std::iota(s.begin(), s.end(), 0.0);
    const auto w = sliding_windows(s, 4, 2);
    REQUIRE(w.size() == 4);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(w[i].front() == 2.0 * i);
    CHECK(sliding_windows(s, 11, 1).empty());
    CHECK_THROWS_AS(sliding_windows(s, 0, 1), Error);
}

TEST_CASE("haar on small signals") {
    const double r2 = std::sqrt(2.0);
    auto c = haar_dwt(std::vector<double>{1, 1, 1, 1}, 1);
    REQUIRE(c.approx.size() == 2);
    CHECK(c.approx[0] == doctest::Approx(r2));
    CHECK(c.approx[1] == doctest::Approx(r2));
    CHECK(c.details.at(0) == std::vector<double>{0, 0});
    c = haar_dwt(std::vector<double>{4, 2}, 1);
    CHECK(c.approx.at(0) == doctest::Approx(6 / r2));
    CHECK(c.details.at(0).at(0) == doctest::Approx(2 / r2));
    // Three samples pad with the last one to four.
    c = haar_dwt(std::vector<double>{1, 2, 3}, 2);
    CHECK(c.padded_length == 4);
    CHECK(c.approx.at(0) == doctest::Approx((1 + 2 + 3 + 3) / 2.0));
}

TEST_CASE("haar round trip and energy over random signals") {
    Rng rng(99);
    for (int i = 0; i < 100; ++i) {
        const std::size_t n = 8 * (1 + rng.below(32));
        const int levels = 1 + static_cast<int>(rng.below(3));
        const auto s = random_signal(rng, n);
        const auto c = haar_dwt(s, levels);
        const auto back = haar_idwt(c);
        REQUIRE(back.size() == n);
        double err = 0;
        for (std::size_t j = 0; j < n; ++j) err = std::max(err, std::abs(back[j] - s[j]));
        CHECK(err < 1e-9);
        double e = energy(c.approx);
        for (const auto& d : c.details) e += energy(d);
        CHECK(std::abs(e - energy(s)) / energy(s) < 1e-9);
    }
}

TEST_CASE("window statistics") {
    const auto f = extract_features(std::vector<double>{0, 0, 8, 8}, 1);
    CHECK(f.total_bytes == 16);
    CHECK(f.median_bw == 4);
    CHECK(f.peak_bw == 8);
    CHECK(f.std_bw == doctest::Approx(4));
    CHECK(f.vector().size() == 4 + 2 + 2);
    CHECK(f.vector({true, false, false}).size() == 4);
    CHECK(feature_columns(4, 1).size() == f.vector().size());
}

TEST_CASE("codebook collapses onto distinct points") {
    const std::vector<std::vector<double>> pts{{0, 0}, {1, 0}, {0, 1}, {0, 0}, {1, 0}};
    const auto cb = build_codebook(pts, 5, 1);
    CHECK(cb.collapsed);
    CHECK(cb.k() == 3);
    const auto exact = build_codebook(pts, 3, 1);
    CHECK_FALSE(exact.collapsed);
    CHECK(exact.assign(pts[0]) == exact.assign(pts[3]));
    CHECK(exact.assign(pts[0]) != exact.assign(pts[1]));
}

TEST_CASE("codebook separates two clusters and is deterministic") {
    Rng rng(4);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 40; ++i) {
        const double c = i % 2 ? 10.0 : 0.0;
        pts.push_back({c + rng.normal() * 0.3, c + rng.normal() * 0.3});
    }
    const auto cb = build_codebook(pts, 2, 7);
    for (std::size_t i = 0; i < pts.size(); ++i)
        CHECK(cb.assign(pts[i]) == cb.assign(pts[i % 2]));
    CHECK(cb.assign(pts[0]) != cb.assign(pts[1]));
    CHECK(build_codebook(pts, 2, 7) == cb);

    // Standardization makes the words blind to a uniform rescale.
    auto scaled = pts;
    for (auto& p : scaled)
        for (auto& x : p) x *= 1000;
    const auto cs = build_codebook(scaled, 2, 7);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(cs.assign(scaled[i]) == cb.assign(pts[i]));
}

TEST_CASE("bag of words histograms") {
    const std::vector<std::size_t> words{0, 2, 2, 1};
    const auto h = bow_from_words(words, 3);
    CHECK(h.counts == std::vector<std::uint64_t>{1, 1, 2});
    CHECK(h.normalized == std::vector<double>{0.25, 0.25, 0.5});

    const std::vector<std::vector<double>> pts{{0}, {10}, {10}, {0}, {10}};
    const auto cb = build_codebook(pts, 2, 1);
    const auto e = bow_encode(pts, cb);
    CHECK(e.counts[cb.assign(pts[1])] == 3);
    CHECK(e.counts[cb.assign(pts[0])] == 2);
}

TEST_CASE("standardizer keeps flat dimensions at unit scale") {
    const auto s = Standardizer::fit({{1, 5}, {3, 5}});
    CHECK(s.mean == std::vector<double>{2, 5});
    CHECK(s.scale[1] == 1.0);
    CHECK(s.apply(std::vector<double>{3, 5})[1] == 0.0);
}

}  // TEST_SUITE
