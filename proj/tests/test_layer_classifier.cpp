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
#include <bwleak/layer_classifier.hpp>
#include <bwleak/model_catalog.hpp>
#include <bwleak/rng.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

using namespace bwleak;

namespace {

// Gaussian blobs in the stats slots plus a series with a class-specific
// bump, `per_class` samples each.
Dataset blobs(std::size_t classes, std::size_t per_class, double spread, std::uint64_t seed,
              bool with_dwt = false) {
    Dataset ds;
    ds.layout = make_layout(with_dwt);
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) ds.label_names.push_back("class" + std::to_string(c));
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t i = 0; i < per_class; ++i) {
            Sample s;
            s.label = c;
            s.layer_type = ds.label_names[c];
            s.features.resize(ds.layout.feature_count);
            for (std::size_t j = 0; j < s.features.size(); ++j)
                s.features[j] = std::exp(1.0 + static_cast<double>((c + j) % classes) + rng.normal() * spread);
            s.series.assign(ds.layout.series_len, 1.0);
            for (std::size_t j = 0; j < 8; ++j) s.series[(8 * c + j) % s.series.size()] += 20 + rng.normal();
            ds.samples.push_back(std::move(s));
        }
    return ds;
}

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal() * scale;
    return v;
}

template <typename Loss>
void check_gradient(Loss loss, std::vector<double> params, Rng& rng) {
    std::vector<double> grad;
    loss(params, &grad);
    REQUIRE(grad.size() == params.size());
    const double h = 1e-6;
    for (int k = 0; k < 10; ++k) {
        const auto i = static_cast<std::size_t>(rng.below(params.size()));
        auto up = params, down = params;
        up[i] += h;
        down[i] -= h;
        const double fd = (loss(up, nullptr) - loss(down, nullptr)) / (2 * h);
        CHECK(std::abs(fd - grad[i]) < 1e-4);
    }
}

}  // namespace

TEST_SUITE("layer_classifier") {

TEST_CASE("feature layout") {
    const auto off = make_layout(false);
    CHECK(off.feature_count == FeatureLayout::stats_count);
    CHECK(off.dwt_count() == 0);
    const auto on = make_layout(true, 3, 64);
    CHECK(on.dwt_count() == 64 / 8 + 3);
    CHECK(on.feature_count == FeatureLayout::stats_count + on.dwt_count());
    const std::vector<double> seg{0, 0, 8, 8};
    const auto f = segment_features(seg, off);
    REQUIRE(f.size() == off.feature_count);
    CHECK(f[FeatureLayout::duration_index] == 4);
    CHECK(segment_features(seg, on).size() == on.feature_count);
    CHECK(resample(seg, 8).size() == 8);
    const auto r = resample(std::vector<double>(10, 3.0), 4);
    for (double x : r) CHECK(x == doctest::Approx(3.0));
}

TEST_CASE("each config of a layer type is its own class") {
    RunParams p;
    p.runs_per_class = 3;
    p.configs_per_class = 2;
    const auto m = load_model("alexnet");
    const auto runs = profile_runs({m}, NpuConfig{}, p, 1);
    const auto ds = build_dataset(runs, make_layout(true));
    std::set<std::string> types;
    for (auto i : m.weight_layer_indices()) types.insert(m.layers[i].type_label());
    CHECK(ds.classes() == 2 * types.size());
    CHECK(ds.samples.size() == 3 * ds.classes());
    std::map<std::string, std::set<TileConfig>> configs;
    for (const auto& s : ds.samples) configs[s.layer_type].insert(s.config);
    for (const auto& [t, c] : configs) CHECK(c.size() == 2);
    CHECK(profile_runs({m}, NpuConfig{}, p, 1).front().read_series == runs.front().read_series);
}

TEST_CASE("stratified split keeps class proportions") {
    const auto ds = blobs(4, 23, 0.1, 3);
    const auto sp = stratified_split(ds, 0.2, 9);
    CHECK(sp.train.samples.size() + sp.test.samples.size() == ds.samples.size());
    for (std::size_t c = 0; c < 4; ++c) {
        const auto n = std::count_if(sp.test.samples.begin(), sp.test.samples.end(),
                                     [&](const Sample& s) { return s.label == c; });
        CHECK(std::abs(static_cast<double>(n) - 0.2 * 23) <= 1.0);
    }
    CHECK_THROWS_AS(stratified_split(ds, 1.0, 1), Error);
}

TEST_CASE("svm on separable blobs") {
    const auto ds = blobs(3, 30, 0.05, 11);
    const auto sp = stratified_split(ds, 0.3, 2);
    const auto clf = train_svm(sp.train, {}, 5);
    CHECK(evaluate(clf, sp.test).accuracy == 1.0);
    CHECK(train_svm(sp.train, {}, 5) == clf);
    for (const auto& s : sp.test.samples) {
        const auto sc = clf.scores(s);
        const auto best = static_cast<std::size_t>(std::max_element(sc.begin(), sc.end()) - sc.begin());
        CHECK(clf.predict(s) == best);
    }
}

TEST_CASE("mlp gradient matches finite differences") {
    Rng rng(17);
    const MlpShape shape{5, 7, 3};
    std::vector<std::vector<double>> x;
    std::vector<std::size_t> y;
    for (int i = 0; i < 6; ++i) {
        x.push_back(random_vector(rng, 5, 1.0));
        y.push_back(static_cast<std::size_t>(i % 3));
    }
    check_gradient([&](const std::vector<double>& p, std::vector<double>* g) {
        return mlp_loss(shape, p, x, y, 1e-2, g);
    }, random_vector(rng, shape.size(), 0.5), rng);
}

TEST_CASE("cnn gradient matches finite differences") {
    Rng rng(23);
    const CnnShape shape{16, 3, 5, 2, 3};
    std::vector<CnnInput> x;
    std::vector<std::size_t> y;
    for (int i = 0; i < 5; ++i) {
        x.push_back({random_vector(rng, 16, 1.0), random_vector(rng, 2, 1.0)});
        y.push_back(static_cast<std::size_t>(i % 3));
    }
    check_gradient([&](const std::vector<double>& p, std::vector<double>* g) {
        return cnn_loss(shape, p, x, y, 1e-2, g);
    }, random_vector(rng, shape.size(), 0.5), rng);
}

TEST_CASE("softmax is a distribution") {
    const auto p = softmax(std::vector<double>{1000, 1001, -5});
    CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0));
    CHECK(p[1] > p[0]);
    for (double v : p) CHECK(v >= 0.0);
}

TEST_CASE("full-batch mlp training does not raise the loss") {
    const auto ds = blobs(3, 4, 0.3, 5);
    NetHyper h;
    h.epochs = 40;
    h.batch = 64;
    h.step = 0.01;
    h.hidden = 8;
    std::vector<double> loss;
    const auto clf = train_mlp_traced(ds, h, 3, &loss);
    REQUIRE(loss.size() == h.epochs);
    for (std::size_t i = 1; i < loss.size(); ++i) CHECK(loss[i] <= loss[i - 1] + 1e-12);
    CHECK(clf == train_mlp(ds, h, 3));
}

TEST_CASE("cnn pooling ignores where an interior bump sits") {
    Rng rng(8);
    const CnnShape shape{64, 4, 5, 0, 2};
    const auto p = random_vector(rng, shape.size(), 0.5);
    std::vector<double> a(64, 0.0), b(64, 0.0);
    a[20] = 3;
    b[41] = 3;
    const auto pa = cnn_pooled(shape, p, a);
    const auto pb = cnn_pooled(shape, p, b);
    REQUIRE(pa.size() == shape.filters);
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i] == doctest::Approx(pb[i]).epsilon(1e-12));
}

TEST_CASE("cnn and mlp learn separable blobs deterministically") {
    const auto ds = blobs(3, 20, 0.05, 13, true);
    const auto sp = stratified_split(ds, 0.25, 1);
    NetHyper h;
    h.epochs = 60;
    const auto cnn = train_cnn(sp.train, h, 4);
    CHECK(cnn == train_cnn(sp.train, h, 4));
    CHECK(evaluate(cnn, sp.test).accuracy == 1.0);
    const auto mlp = train_mlp(sp.train, h, 4);
    CHECK(evaluate(mlp, sp.test).accuracy == 1.0);
}

TEST_CASE("time-only baseline") {
    auto ds = blobs(3, 10, 0.0, 1);
    for (auto& s : ds.samples) s.features[FeatureLayout::duration_index] = 100.0 * (1 + s.label);
    CHECK(evaluate(baseline_time_only(ds), ds).accuracy == 1.0);

    auto flat = blobs(3, 10, 0.0, 1);
    flat.samples.resize(25);  // priors 10/10/5
    for (auto& s : flat.samples) s.features[FeatureLayout::duration_index] = 50.0;
    CHECK(evaluate(baseline_time_only(flat), flat).accuracy <= 10.0 / 25 + 1e-12);
}

TEST_CASE("evaluation agrees with a counting oracle") {
    const auto ds = blobs(4, 15, 0.8, 21);
    const auto sp = stratified_split(ds, 0.4, 3);
    SvmHyper h;
    h.epochs = 3;
    const auto clf = train_svm(sp.train, h, 1);
    const auto rep = evaluate(clf, sp.test);
    std::vector<std::vector<std::size_t>> conf(4, std::vector<std::size_t>(4, 0));
    std::size_t right = 0;
    for (const auto& s : sp.test.samples) {
        const auto p = clf.predict(s);
        ++conf[s.label][p];
        right += p == s.label;
    }
    CHECK(rep.confusion == conf);
    CHECK(rep.accuracy == doctest::Approx(static_cast<double>(right) / sp.test.samples.size()));
    for (std::size_t c = 0; c < 4; ++c) {
        const auto row = std::accumulate(conf[c].begin(), conf[c].end(), std::size_t{0});
        CHECK(rep.class_accuracy[c] == doctest::Approx(static_cast<double>(conf[c][c]) / row));
    }

    auto other = sp.test;
    other.layout = make_layout(true);
    CHECK_THROWS_AS(evaluate(clf, other), Error);
    auto relabeled = sp.test;
    relabeled.label_names[0] = "renamed";
    CHECK_THROWS_AS(evaluate(clf, relabeled), Error);
}

TEST_CASE("classifier files round trip exactly") {
    const auto ds = blobs(3, 10, 0.2, 2, true);
    NetHyper h;
    h.epochs = 5;
    for (const auto& clf : {train_svm(ds, {}, 1), train_mlp(ds, h, 1), train_cnn(ds, h, 1),
                            baseline_time_only(ds)}) {
        std::stringstream a;
        save_classifier(a, clf);
        const auto back = load_classifier(a, "mem");
        CHECK(back == clf);
        std::stringstream b;
        save_classifier(b, back);
        CHECK(b.str() == a.str());
    }
    std::stringstream bad("not a classifier\n");
    CHECK_THROWS_AS(load_classifier(bad, "bad.txt"), ParseError);
    std::stringstream full;
    save_classifier(full, train_svm(ds, {}, 1));
    const std::string text = full.str();
    std::stringstream cut(text.substr(0, text.size() / 2));
    CHECK_THROWS_AS(load_classifier(cut, "cut.txt"), ParseError);
    // Dropping a label leaves the shape claiming one class too many.
    std::string fewer = text;
    const auto at = fewer.find("labels 3\nclass0\n");
    REQUIRE(at != std::string::npos);
    fewer.replace(at, 16, "labels 2\n");
    std::stringstream short_labels(fewer);
    CHECK_THROWS_AS(load_classifier(short_labels, "fewer.txt"), ParseError);
}

TEST_CASE("learner names") {
    for (auto k : {LearnerKind::svm, LearnerKind::mlp, LearnerKind::cnn, LearnerKind::time_only})
        CHECK(parse_learner_kind(to_string(k)) == k);
    CHECK_THROWS_AS(parse_learner_kind("forest"), Error);
}

}  // TEST_SUITE
