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


#include <bwleak/layer_classifier.hpp>

#include <bwleak/csv.hpp>
#include <bwleak/error.hpp>
#include <bwleak/npu_sim.hpp>
#include <bwleak/rng.hpp>
#include <bwleak/tile_tuner.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace bwleak {

std::vector<ProfileRun> profile_runs(const std::vector<ModelSpec>& models, const NpuConfig& npu,
                                     const RunParams& params, std::uint64_t seed) {
    if (params.runs_per_class == 0) throw Error("runs_per_class must be positive");
    const double cpw = window_cycles(params.window_us, npu.clock_hz);
    const auto phase_range = static_cast<std::uint64_t>(std::max(1.0, std::floor(cpw)));
    std::vector<ProfileRun> runs;
    std::set<std::string> seen;
    std::uint64_t stream = 0;
    for (const auto& m : models) {
        for (const auto& layer : m.layers) {
            if (!layer.loads_weights()) continue;
            const std::string label = layer.type_label();
            if (!seen.insert(label).second) continue;
            ModelSpec solo;
            solo.name = label;
            solo.element_size = layer.element_size;
            solo.layers.push_back(layer);
            solo.layers.back().id = 0;
            for (const auto& cfg : ranked_configs(layer, npu, params.configs_per_class)) {
                TileSchedule s;
                s.per_layer[0] = cfg;
                for (std::size_t r = 0; r < params.runs_per_class; ++r, ++stream) {
                    Rng rng(derive_seed(seed, stream));
                    SimOptions opts;
                    opts.window_us = params.window_us;
                    opts.start_cycle = rng.below(phase_range);
                    const SimResult sim = simulate_inference(solo, s, npu, 0, opts);
                    const BandwidthTrace noisy =
                        inject_noise(sim.trace, params.noise_amplitude, rng.next());
                    const LayerSpan& span = sim.layer_spans.front();
                    const auto end = std::min<std::uint64_t>(
                        std::max(span.end_window, span.start_window + 1), noisy.size());
                    ProfileRun run;
                    run.layer_type = label;
                    run.config = cfg;
                    run.read_series.assign(
                        noisy.read_bytes.begin() + static_cast<std::ptrdiff_t>(span.start_window),
                        noisy.read_bytes.begin() + static_cast<std::ptrdiff_t>(end));
                    runs.push_back(std::move(run));
                }
            }
        }
    }
    return runs;
}

std::size_t FeatureLayout::dwt_count() const {
    if (!with_dwt) return 0;
    return (series_len >> dwt_levels) + static_cast<std::size_t>(dwt_levels);
}

FeatureLayout make_layout(bool with_dwt, int dwt_levels, std::size_t series_len) {
    if (dwt_levels < 1) throw Error("dwt_levels must be at least 1");
    if (series_len == 0 || series_len % (std::size_t{1} << dwt_levels) != 0)
        throw Error("series_len must be a positive multiple of 2^dwt_levels");
    FeatureLayout l;
    l.with_dwt = with_dwt;
    l.dwt_levels = dwt_levels;
    l.series_len = series_len;
    l.feature_count = FeatureLayout::stats_count + l.dwt_count();
    return l;
}

std::vector<double> resample(std::span<const double> segment, std::size_t bins) {
    std::vector<double> out(bins, 0.0);
    if (segment.empty() || bins == 0) return out;
    const double n = static_cast<double>(segment.size());
    const double w = n / static_cast<double>(bins);
    for (std::size_t b = 0; b < bins; ++b) {
        const double lo = w * static_cast<double>(b);
        const double hi = b + 1 == bins ? n : w * static_cast<double>(b + 1);
        double acc = 0;
        for (auto i = static_cast<std::size_t>(lo); i < segment.size() && static_cast<double>(i) < hi; ++i) {
            const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
            if (overlap > 0) acc += overlap * segment[i];
        }
        out[b] = acc / (hi - lo);
    }
    return out;
}

std::vector<double> segment_features(std::span<const double> segment, const FeatureLayout& layout) {
    if (segment.empty()) throw Error("empty segment");
    std::vector<double> f;
    f.reserve(layout.feature_count);
    const double n = static_cast<double>(segment.size());
    const double total = std::accumulate(segment.begin(), segment.end(), 0.0);
    const double mean = total / n;
    double var = 0;
    for (double v : segment) var += (v - mean) * (v - mean);
    f.push_back(n);
    f.push_back(total);
    f.push_back(mean);
    f.push_back(median_of(std::vector<double>(segment.begin(), segment.end())));
    f.push_back(*std::max_element(segment.begin(), segment.end()));
    f.push_back(std::sqrt(var / n));
    if (layout.with_dwt) {
        const auto c = haar_dwt(resample(segment, layout.series_len), layout.dwt_levels);
        f.insert(f.end(), c.approx.begin(), c.approx.end());
        for (const auto& d : c.details) {
            double e = 0;
            for (double v : d) e += v * v;
            f.push_back(std::sqrt(e));
        }
    }
    return f;
}

Dataset build_dataset(const std::vector<ProfileRun>& runs, const FeatureLayout& layout) {
    Dataset ds;
    ds.layout = layout;
    std::map<std::string, std::size_t> ids;
    for (const auto& run : runs) {
        const std::string name = run.layer_type + " | " + to_string(run.config);
        auto [it, fresh] = ids.try_emplace(name, ds.label_names.size());
        if (fresh) ds.label_names.push_back(name);
        Sample s;
        s.features = segment_features(run.read_series, layout);
        s.series = resample(run.read_series, layout.series_len);
        s.label = it->second;
        s.layer_type = run.layer_type;
        s.config = run.config;
        ds.samples.push_back(std::move(s));
    }
    if (ds.classes() < 2) throw Error("a dataset needs at least 2 classes");
    return ds;
}

DatasetSplit stratified_split(const Dataset& ds, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0 && test_fraction < 1)) throw Error("test_fraction must be in (0, 1)");
    std::vector<std::vector<std::size_t>> by_class(ds.classes());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].label].push_back(i);
    std::vector<bool> is_test(ds.samples.size(), false);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& idx = by_class[c];
        Rng rng(derive_seed(seed, c));
        for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
        const auto n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < n_test; ++i) is_test[idx[i]] = true;
    }
    DatasetSplit out;
    out.train.label_names = out.test.label_names = ds.label_names;
    out.train.layout = out.test.layout = ds.layout;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        (is_test[i] ? out.test : out.train).samples.push_back(ds.samples[i]);
    return out;
}

std::vector<double> softmax(std::span<const double> logits) {
    std::vector<double> p(logits.begin(), logits.end());
    if (p.empty()) return p;
    const double top = *std::max_element(p.begin(), p.end());
    double z = 0;
    for (auto& v : p) z += (v = std::exp(v - top));
    for (auto& v : p) v /= z;
    return p;
}

namespace {

void check_labels(std::size_t n, std::span<const std::size_t> y, std::size_t classes) {
    if (n == 0 || n != y.size()) throw Error("inputs and labels differ in count or are empty");
    for (auto c : y)
        if (c >= classes) throw Error("label out of range");
}

// -log p_y of a softmax, with dz = (p - onehot) * scale written to `dz`.
double softmax_ce(std::span<const double> logits, std::size_t y, double scale,
                  std::vector<double>& dz) {
    dz = softmax(logits);
    const double loss = -std::log(std::max(dz[y], std::numeric_limits<double>::min()));
    dz[y] -= 1.0;
    for (auto& v : dz) v *= scale;
    return loss;
}

double weight_penalty(std::span<const double> w, double l2, double* g) {
    double s = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        s += w[i] * w[i];
        if (g) g[i] += l2 * w[i];
    }
    return 0.5 * l2 * s;
}

}  // namespace

std::vector<double> mlp_logits(const MlpShape& shape, std::span<const double> params,
                               std::span<const double> x) {
    const std::size_t D = shape.inputs, H = shape.hidden, C = shape.classes;
    if (params.size() != shape.size() || x.size() != D) throw Error("mlp shape mismatch");
    const double* W1 = params.data();
    const double* b1 = W1 + H * D;
    const double* W2 = b1 + H;
    const double* b2 = W2 + C * H;
    std::vector<double> h(H);
    for (std::size_t j = 0; j < H; ++j) {
        double a = b1[j];
        for (std::size_t i = 0; i < D; ++i) a += W1[j * D + i] * x[i];
        h[j] = std::max(a, 0.0);
    }
    std::vector<double> z(C);
    for (std::size_t c = 0; c < C; ++c) {
        double a = b2[c];
        for (std::size_t j = 0; j < H; ++j) a += W2[c * H + j] * h[j];
        z[c] = a;
    }
    return z;
}

double mlp_loss(const MlpShape& shape, std::span<const double> params,
                const std::vector<std::vector<double>>& x, std::span<const std::size_t> y,
                double l2, std::vector<double>* grad) {
    check_labels(x.size(), y, shape.classes);
    const std::size_t D = shape.inputs, H = shape.hidden, C = shape.classes;
    if (params.size() != shape.size()) throw Error("mlp shape mismatch");
    const double* W1 = params.data();
    const double* b1 = W1 + H * D;
    const double* W2 = b1 + H;
    const double* b2 = W2 + C * H;
    if (grad) grad->assign(params.size(), 0.0);
    double* gW1 = grad ? grad->data() : nullptr;
    double* gb1 = grad ? gW1 + H * D : nullptr;
    double* gW2 = grad ? gb1 + H : nullptr;
    double* gb2 = grad ? gW2 + C * H : nullptr;

    const double inv_n = 1.0 / static_cast<double>(x.size());
    std::vector<double> pre(H), h(H), z(C), dz, dh(H);
    double loss = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const auto& xn = x[n];
        if (xn.size() != D) throw Error("mlp input width mismatch");
        for (std::size_t j = 0; j < H; ++j) {
            double a = b1[j];
            for (std::size_t i = 0; i < D; ++i) a += W1[j * D + i] * xn[i];
            pre[j] = a;
            h[j] = std::max(a, 0.0);
        }
        for (std::size_t c = 0; c < C; ++c) {
            double a = b2[c];
            for (std::size_t j = 0; j < H; ++j) a += W2[c * H + j] * h[j];
            z[c] = a;
        }
        loss += inv_n * softmax_ce(z, y[n], inv_n, dz);
        if (!grad) continue;
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            gb2[c] += dz[c];
            for (std::size_t j = 0; j < H; ++j) {
                gW2[c * H + j] += dz[c] * h[j];
                dh[j] += W2[c * H + j] * dz[c];
            }
        }
        for (std::size_t j = 0; j < H; ++j) {
            if (pre[j] <= 0) continue;
            gb1[j] += dh[j];
            for (std::size_t i = 0; i < D; ++i) gW1[j * D + i] += dh[j] * xn[i];
        }
    }
    loss += weight_penalty({W1, H * D}, l2, gW1);
    loss += weight_penalty({W2, C * H}, l2, gW2);
    return loss;
}

namespace {

struct CnnView {
    const double* w;  // filters x width
    const double* b;
    const double* V;  // classes x (filters + extra)
    const double* c;
};

CnnView cnn_view(const CnnShape& s, std::span<const double> params) {
    if (params.size() != s.size()) throw Error("cnn shape mismatch");
    CnnView v;
    v.w = params.data();
    v.b = v.w + s.filters * s.width;
    v.V = v.b + s.filters;
    v.c = v.V + s.classes * (s.filters + s.extra);
    return v;
}

double edge_sample(std::span<const double> x, std::ptrdiff_t i) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    return x[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, n - 1))];
}

// Pre-activations of every filter at every position, filters major.
std::vector<double> conv_pre(const CnnShape& s, const CnnView& v, std::span<const double> x) {
    if (x.size() != s.length || x.empty()) throw Error("cnn input length mismatch");
    const auto half = static_cast<std::ptrdiff_t>(s.width / 2);
    std::vector<double> a(s.filters * s.length);
    for (std::size_t f = 0; f < s.filters; ++f)
        for (std::size_t t = 0; t < s.length; ++t) {
            double acc = v.b[f];
            for (std::size_t k = 0; k < s.width; ++k)
                acc += v.w[f * s.width + k] *
                       edge_sample(x, static_cast<std::ptrdiff_t>(t + k) - half);
            a[f * s.length + t] = acc;
        }
    return a;
}

std::vector<double> pool(const CnnShape& s, const std::vector<double>& pre) {
    std::vector<double> g(s.filters, 0.0);
    for (std::size_t f = 0; f < s.filters; ++f) {
        for (std::size_t t = 0; t < s.length; ++t) g[f] += std::max(pre[f * s.length + t], 0.0);
        g[f] /= static_cast<double>(s.length);
    }
    return g;
}

std::vector<double> dense(const CnnShape& s, const CnnView& v, const std::vector<double>& g,
                          std::span<const double> extra) {
    if (extra.size() != s.extra) throw Error("cnn extra feature width mismatch");
    const std::size_t U = s.filters + s.extra;
    std::vector<double> z(s.classes);
    for (std::size_t c = 0; c < s.classes; ++c) {
        double a = v.c[c];
        for (std::size_t f = 0; f < s.filters; ++f) a += v.V[c * U + f] * g[f];
        for (std::size_t e = 0; e < s.extra; ++e) a += v.V[c * U + s.filters + e] * extra[e];
        z[c] = a;
    }
    return z;
}

}  // namespace

std::vector<double> cnn_pooled(const CnnShape& shape, std::span<const double> params,
                               std::span<const double> series) {
    const CnnView v = cnn_view(shape, params);
    return pool(shape, conv_pre(shape, v, series));
}

std::vector<double> cnn_logits(const CnnShape& shape, std::span<const double> params,
                               const CnnInput& x) {
    const CnnView v = cnn_view(shape, params);
    return dense(shape, v, pool(shape, conv_pre(shape, v, x.series)), x.extra);
}

double cnn_loss(const CnnShape& shape, std::span<const double> params,
                const std::vector<CnnInput>& x, std::span<const std::size_t> y, double l2,
                std::vector<double>* grad) {
    check_labels(x.size(), y, shape.classes);
    const CnnView v = cnn_view(shape, params);
    const std::size_t F = shape.filters, W = shape.width, L = shape.length, C = shape.classes;
    const std::size_t U = F + shape.extra;
    if (grad) grad->assign(params.size(), 0.0);
    double* gw = grad ? grad->data() : nullptr;
    double* gb = grad ? gw + F * W : nullptr;
    double* gV = grad ? gb + F : nullptr;
    double* gc = grad ? gV + C * U : nullptr;
    const auto half = static_cast<std::ptrdiff_t>(W / 2);

    const double inv_n = 1.0 / static_cast<double>(x.size());
    std::vector<double> dz;
    double loss = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
        const auto pre = conv_pre(shape, v, x[n].series);
        const auto g = pool(shape, pre);
        const auto z = dense(shape, v, g, x[n].extra);
        loss += inv_n * softmax_ce(z, y[n], inv_n, dz);
        if (!grad) continue;
        std::vector<double> dg(F, 0.0);
        for (std::size_t c = 0; c < C; ++c) {
            gc[c] += dz[c];
            for (std::size_t f = 0; f < F; ++f) {
                gV[c * U + f] += dz[c] * g[f];
                dg[f] += v.V[c * U + f] * dz[c];
            }
            for (std::size_t e = 0; e < shape.extra; ++e)
                gV[c * U + F + e] += dz[c] * x[n].extra[e];
        }
        for (std::size_t f = 0; f < F; ++f) {
            const double da = dg[f] / static_cast<double>(L);
            for (std::size_t t = 0; t < L; ++t) {
                if (pre[f * L + t] <= 0) continue;
                gb[f] += da;
                for (std::size_t k = 0; k < W; ++k)
                    gw[f * W + k] +=
                        da * edge_sample(x[n].series, static_cast<std::ptrdiff_t>(t + k) - half);
            }
        }
    }
    loss += weight_penalty({v.w, F * W}, l2, gw);
    loss += weight_penalty({v.V, C * U}, l2, gV);
    return loss;
}

std::string_view to_string(LearnerKind kind) {
    switch (kind) {
    case LearnerKind::svm: return "svm";
    case LearnerKind::mlp: return "mlp";
    case LearnerKind::cnn: return "cnn";
    case LearnerKind::time_only: return "time_only";
    }
    return "?";
}

LearnerKind parse_learner_kind(std::string_view name) {
    for (auto k : {LearnerKind::svm, LearnerKind::mlp, LearnerKind::cnn, LearnerKind::time_only})
        if (to_string(k) == name) return k;
    throw Error("unknown learner '" + std::string(name) + "'");
}

namespace {

// Durations and byte counts span orders of magnitude; every feature is
// non-negative.
std::vector<double> compress(std::span<const double> f) {
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) out[i] = std::log1p(std::max(f[i], 0.0));
    return out;
}

void check_trainable(const Dataset& ds) {
    if (ds.samples.empty()) throw Error("training set is empty");
    std::set<std::size_t> present;
    for (const auto& s : ds.samples) {
        if (s.features.size() != ds.layout.feature_count)
            throw Error("sample feature width does not match the layout");
        present.insert(s.label);
    }
    if (present.size() < 2) throw Error("training needs samples of at least 2 classes");
}

TrainedClassifier base_classifier(const Dataset& ds, LearnerKind kind, std::uint64_t seed) {
    TrainedClassifier clf;
    clf.kind = kind;
    clf.layout = ds.layout;
    clf.label_names = ds.label_names;
    clf.train_seed = seed;
    std::vector<std::vector<double>> rows;
    rows.reserve(ds.samples.size());
    for (const auto& s : ds.samples) rows.push_back(compress(s.features));
    clf.scaling = Standardizer::fit(rows);
    return clf;
}

std::vector<std::size_t> labels_of(const Dataset& ds) {
    std::vector<std::size_t> y;
    y.reserve(ds.samples.size());
    for (const auto& s : ds.samples) y.push_back(s.label);
    return y;
}

void fill_uniform(Rng& rng, double* p, std::size_t n, double limit) {
    for (std::size_t i = 0; i < n; ++i) p[i] = rng.uniform(-limit, limit);
}

void shuffle(Rng& rng, std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

// Mini-batch gradient descent. `loss(batch, grad)` evaluates on sample indices.
template <class LossFn>
void descend(std::vector<double>& params, std::size_t n, const NetHyper& hyper, Rng& rng,
             LossFn&& loss, std::vector<double>* epoch_loss) {
    if (hyper.batch == 0) throw Error("batch size must be positive");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> all = order;
    std::vector<double> grad;
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle(rng, order);
        for (std::size_t lo = 0; lo < n; lo += hyper.batch) {
            const std::span<const std::size_t> batch(order.data() + lo, std::min(hyper.batch, n - lo));
            loss(params, batch, &grad);
            for (std::size_t i = 0; i < params.size(); ++i) params[i] -= hyper.step * grad[i];
        }
        if (epoch_loss) epoch_loss->push_back(loss(params, all, nullptr));
    }
}

std::vector<CnnInput> cnn_inputs(const TrainedClassifier& clf, const Dataset& ds,
                                 std::span<const std::size_t> idx) {
    std::vector<CnnInput> x;
    x.reserve(idx.size());
    for (auto i : idx) {
        const Sample& s = ds.samples[i];
        CnnInput in;
        in.series = s.series;
        for (auto& v : in.series) v /= clf.series_scale;
        in.extra = clf.input(s);
        x.push_back(std::move(in));
    }
    return x;
}

}  // namespace

TrainedClassifier train_svm(const Dataset& ds, const SvmHyper& hyper, std::uint64_t seed) {
    check_trainable(ds);
    TrainedClassifier clf = base_classifier(ds, LearnerKind::svm, seed);
    const std::size_t C = ds.classes(), D = ds.layout.feature_count;
    clf.shape = {C, D};
    clf.params.assign(C * D + C, 0.0);
    double* W = clf.params.data();
    double* b = W + C * D;
    std::vector<std::vector<double>> x;
    for (const auto& s : ds.samples) x.push_back(clf.input(s));
    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (std::size_t epoch = 0; epoch < hyper.epochs; ++epoch) {
        shuffle(rng, order);
        for (auto n : order) {
            for (std::size_t c = 0; c < C; ++c) {
                const double y = ds.samples[n].label == c ? 1.0 : -1.0;
                double m = b[c];
                for (std::size_t j = 0; j < D; ++j) m += W[c * D + j] * x[n][j];
                const bool active = y * m < 1.0;
                for (std::size_t j = 0; j < D; ++j)
                    W[c * D + j] -= hyper.step * (hyper.l2 * W[c * D + j] - (active ? y * x[n][j] : 0.0));
                if (active) b[c] += hyper.step * y;
            }
        }
    }
    return clf;
}

TrainedClassifier train_mlp_traced(const Dataset& ds, const NetHyper& hyper, std::uint64_t seed,
                                   std::vector<double>* epoch_loss) {
    check_trainable(ds);
    TrainedClassifier clf = base_classifier(ds, LearnerKind::mlp, seed);
    const MlpShape shape{ds.layout.feature_count, hyper.hidden, ds.classes()};
    clf.shape = {shape.inputs, shape.hidden, shape.classes};
    clf.params.assign(shape.size(), 0.0);
    Rng rng(seed);
    const std::size_t D = shape.inputs, H = shape.hidden, C = shape.classes;
    fill_uniform(rng, clf.params.data(), H * D, std::sqrt(6.0 / static_cast<double>(D)));
    fill_uniform(rng, clf.params.data() + H * D + H, C * H, std::sqrt(6.0 / static_cast<double>(H + C)));

    std::vector<std::vector<double>> x;
    for (const auto& s : ds.samples) x.push_back(clf.input(s));
    const auto y = labels_of(ds);
    auto loss = [&](const std::vector<double>& p, std::span<const std::size_t> idx,
                    std::vector<double>* grad) {
        std::vector<std::vector<double>> bx;
        std::vector<std::size_t> by;
        for (auto i : idx) {
            bx.push_back(x[i]);
            by.push_back(y[i]);
        }
        return mlp_loss(shape, p, bx, by, hyper.l2, grad);
    };
    descend(clf.params, x.size(), hyper, rng, loss, epoch_loss);
    return clf;
}

TrainedClassifier train_mlp(const Dataset& ds, const NetHyper& hyper, std::uint64_t seed) {
    return train_mlp_traced(ds, hyper, seed, nullptr);
}

TrainedClassifier train_cnn(const Dataset& ds, const NetHyper& hyper, std::uint64_t seed) {
    check_trainable(ds);
    TrainedClassifier clf = base_classifier(ds, LearnerKind::cnn, seed);
    const CnnShape shape{ds.layout.series_len, hyper.filters, hyper.width,
                         ds.layout.feature_count, ds.classes()};
    clf.shape = {shape.length, shape.filters, shape.width, shape.extra, shape.classes};
    double top = 0;
    for (const auto& s : ds.samples)
        for (double v : s.series) top = std::max(top, v);
    clf.series_scale = top > 0 ? top : 1.0;

    clf.params.assign(shape.size(), 0.0);
    Rng rng(seed);
    const std::size_t F = shape.filters, W = shape.width, U = F + shape.extra;
    fill_uniform(rng, clf.params.data(), F * W, std::sqrt(6.0 / static_cast<double>(W)));
    // A small positive bias keeps filters alive on non-negative input.
    std::fill_n(clf.params.data() + F * W, F, 0.1);
    fill_uniform(rng, clf.params.data() + F * W + F, shape.classes * U,
                 std::sqrt(6.0 / static_cast<double>(U + shape.classes)));

    std::vector<std::size_t> all(ds.samples.size());
    std::iota(all.begin(), all.end(), 0);
    const auto x = cnn_inputs(clf, ds, all);
    const auto y = labels_of(ds);
    auto loss = [&](const std::vector<double>& p, std::span<const std::size_t> idx,
                    std::vector<double>* grad) {
        std::vector<CnnInput> bx;
        std::vector<std::size_t> by;
        for (auto i : idx) {
            bx.push_back(x[i]);
            by.push_back(y[i]);
        }
        return cnn_loss(shape, p, bx, by, hyper.l2, grad);
    };
    descend(clf.params, x.size(), hyper, rng, loss, nullptr);
    return clf;
}

TrainedClassifier baseline_time_only(const Dataset& ds) {
    check_trainable(ds);
    TrainedClassifier clf = base_classifier(ds, LearnerKind::time_only, 0);
    const std::size_t C = ds.classes();
    clf.shape = {C};
    std::vector<double> sum(C, 0.0), count(C, 0.0);
    for (const auto& s : ds.samples) {
        sum[s.label] += s.features[FeatureLayout::duration_index];
        count[s.label] += 1;
    }
    // Classes without training samples can never be predicted.
    clf.params.resize(C);
    for (std::size_t c = 0; c < C; ++c)
        clf.params[c] = count[c] > 0 ? sum[c] / count[c] : std::numeric_limits<double>::infinity();
    return clf;
}

std::vector<double> TrainedClassifier::input(const Sample& s) const {
    return scaling.apply(compress(s.features));
}

std::vector<double> TrainedClassifier::scores(const Sample& s) const {
    if (s.features.size() != layout.feature_count) throw Error("sample does not match the layout");
    switch (kind) {
    case LearnerKind::svm: {
        const std::size_t C = shape.at(0), D = shape.at(1);
        const auto x = input(s);
        std::vector<double> out(C);
        for (std::size_t c = 0; c < C; ++c) {
            double m = params[C * D + c];
            for (std::size_t j = 0; j < D; ++j) m += params[c * D + j] * x[j];
            out[c] = m;
        }
        return out;
    }
    case LearnerKind::mlp:
        return mlp_logits({shape.at(0), shape.at(1), shape.at(2)}, params, input(s));
    case LearnerKind::cnn: {
        CnnInput in;
        in.series = s.series;
        for (auto& v : in.series) v /= series_scale;
        in.extra = input(s);
        return cnn_logits({shape.at(0), shape.at(1), shape.at(2), shape.at(3), shape.at(4)}, params, in);
    }
    case LearnerKind::time_only: {
        const double d = s.features[FeatureLayout::duration_index];
        std::vector<double> out(params.size());
        for (std::size_t c = 0; c < params.size(); ++c) out[c] = -std::abs(d - params[c]);
        return out;
    }
    }
    throw Error("unknown learner kind");
}

std::size_t TrainedClassifier::predict(const Sample& s) const {
    const auto sc = scores(s);
    return static_cast<std::size_t>(std::max_element(sc.begin(), sc.end()) - sc.begin());
}

EvalReport evaluate(const TrainedClassifier& clf, const Dataset& test) {
    if (test.samples.empty()) throw Error("test set is empty");
    if (!(test.layout == clf.layout)) throw Error("test set layout does not match the classifier");
    if (test.label_names != clf.label_names) throw Error("test set classes do not match the classifier");
    const std::size_t C = clf.label_names.size();
    EvalReport r;
    r.confusion.assign(C, std::vector<std::size_t>(C, 0));
    std::size_t right = 0;
    for (const auto& s : test.samples) {
        const std::size_t p = clf.predict(s);
        ++r.confusion[s.label][p];
        right += p == s.label;
    }
    r.accuracy = static_cast<double>(right) / static_cast<double>(test.samples.size());
    r.class_accuracy.assign(C, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < C; ++c) {
        const auto n = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
        if (n > 0) r.class_accuracy[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(n);
    }
    return r;
}

double model_weighted_accuracy(const EvalReport& report, const Dataset& test,
                               const ModelSpec& model) {
    std::map<std::string, double> layers_of_type;
    for (const auto& l : model.layers)
        if (l.loads_weights()) layers_of_type[l.type_label()] += 1;
    std::vector<std::string> class_type(test.classes());
    for (const auto& s : test.samples) class_type[s.label] = s.layer_type;
    double num = 0, den = 0;
    for (std::size_t c = 0; c < test.classes() && c < report.class_accuracy.size(); ++c) {
        if (std::isnan(report.class_accuracy[c])) continue;
        const auto it = layers_of_type.find(class_type[c]);
        if (it == layers_of_type.end()) continue;
        num += it->second * report.class_accuracy[c];
        den += it->second;
    }
    return den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::string cell(double v) { return std::isnan(v) ? "NA" : format_fixed(v, 3); }

}  // namespace

void write_accuracy_report(std::ostream& out, const std::vector<std::string>& models,
                           const std::vector<AccuracyRow>& rows) {
    std::size_t first = 7;
    for (const auto& r : rows) first = std::max(first, r.learner.size());
    std::vector<std::string> head = models;
    head.push_back("Overall");
    auto pad = [&out](const std::string& s, std::size_t w) {
        out << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    pad("learner", first + 2);
    for (std::size_t i = 0; i < head.size(); ++i)
        pad(head[i], i + 1 < head.size() ? std::max<std::size_t>(head[i].size(), 5) + 2 : 0);
    out << '\n';
    for (const auto& r : rows) {
        pad(r.learner, first + 2);
        for (std::size_t i = 0; i < head.size(); ++i) {
            const double v = i < models.size() ? r.per_model.at(i) : r.overall;
            pad(cell(v), i + 1 < head.size() ? std::max<std::size_t>(head[i].size(), 5) + 2 : 0);
        }
        out << '\n';
    }
}

void write_accuracy_csv(std::ostream& out, const std::vector<std::string>& models,
                        const std::vector<AccuracyRow>& rows) {
    out << "learner";
    for (const auto& m : models) out << ',' << m;
    out << ",Overall\n";
    for (const auto& r : rows) {
        out << r.learner;
        for (double v : r.per_model) out << ',' << (std::isnan(v) ? "NA" : format_double(v));
        out << ',' << (std::isnan(r.overall) ? "NA" : format_double(r.overall)) << '\n';
    }
}

namespace {

constexpr std::string_view kMagic = "bwleak-classifier";
constexpr int kVersion = 1;

std::string hex(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    return std::string(buf, res.ptr);
}

class Reader {
public:
    Reader(std::istream& in, const std::string& source) : in_(in), source_(source) {}

    std::string line() {
        std::string s;
        if (!std::getline(in_, s)) fail("unexpected end of file");
        ++line_;
        return s;
    }

    // A line "<key> <rest>"; returns rest.
    std::string keyed(std::string_view key) {
        const std::string s = line();
        if (s.compare(0, key.size(), key) != 0 || (s.size() > key.size() && s[key.size()] != ' '))
            fail("expected '" + std::string(key) + "'");
        return s.size() > key.size() ? s.substr(key.size() + 1) : std::string();
    }

    std::vector<std::string> words(std::string_view key) {
        std::istringstream ss(keyed(key));
        std::vector<std::string> w;
        for (std::string t; ss >> t;) w.push_back(t);
        return w;
    }

    std::uint64_t u64(const std::string& s) {
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad integer '" + s + "'");
        return v;
    }

    double real(const std::string& s) {
        double v = 0;
        const char* b = s.data();
        const char* e = b + s.size();
        const bool neg = b != e && *b == '-';
        const auto res = std::from_chars(b + neg, e, v, std::chars_format::hex);
        if (res.ec != std::errc() || res.ptr != e) fail("bad number '" + s + "'");
        return neg ? -v : v;
    }

    std::vector<double> reals(std::string_view key) {
        auto w = words(key);
        if (w.empty()) fail("missing count");
        const auto n = u64(w.front());
        if (w.size() != n + 1) fail("expected " + std::to_string(n) + " values");
        std::vector<double> v;
        for (std::size_t i = 1; i < w.size(); ++i) v.push_back(real(w[i]));
        return v;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(source_, line_, what); }

private:
    std::istream& in_;
    const std::string& source_;
    std::size_t line_ = 0;
};

std::size_t expected_params(const TrainedClassifier& c) {
    const auto& s = c.shape;
    switch (c.kind) {
    case LearnerKind::svm: return s.size() == 2 ? s[0] * s[1] + s[0] : 0;
    case LearnerKind::mlp: return s.size() == 3 ? MlpShape{s[0], s[1], s[2]}.size() : 0;
    case LearnerKind::cnn: return s.size() == 5 ? CnnShape{s[0], s[1], s[2], s[3], s[4]}.size() : 0;
    case LearnerKind::time_only: return s.size() == 1 ? s[0] : 0;
    }
    return 0;
}

// Class count and input widths the shape implies must agree with the labels
// and layout stored beside it.
bool shape_consistent(const TrainedClassifier& c) {
    const auto& s = c.shape;
    const std::size_t classes = c.label_names.size(), width = c.layout.feature_count;
    switch (c.kind) {
    case LearnerKind::svm: return s.size() == 2 && s[0] == classes && s[1] == width;
    case LearnerKind::mlp: return s.size() == 3 && s[0] == width && s[2] == classes;
    case LearnerKind::cnn:
        return s.size() == 5 && s[0] == c.layout.series_len && s[3] == width && s[4] == classes;
    case LearnerKind::time_only: return s.size() == 1 && s[0] == classes;
    }
    return false;
}

}  // namespace

void save_classifier(std::ostream& out, const TrainedClassifier& clf) {
    out << kMagic << " v" << kVersion << '\n';
    out << "kind " << to_string(clf.kind) << '\n';
    out << "train_seed " << clf.train_seed << '\n';
    out << "layout " << (clf.layout.with_dwt ? 1 : 0) << ' ' << clf.layout.dwt_levels << ' '
        << clf.layout.series_len << ' ' << clf.layout.feature_count << '\n';
    out << "labels " << clf.label_names.size() << '\n';
    for (const auto& n : clf.label_names) out << n << '\n';
    out << "shape";
    for (auto d : clf.shape) out << ' ' << d;
    out << '\n';
    out << "series_scale " << hex(clf.series_scale) << '\n';
    auto vec = [&out](std::string_view key, const std::vector<double>& v) {
        out << key << ' ' << v.size();
        for (double x : v) out << ' ' << hex(x);
        out << '\n';
    };
    vec("scaling_mean", clf.scaling.mean);
    vec("scaling_scale", clf.scaling.scale);
    vec("params", clf.params);
    out << "end\n";
}

TrainedClassifier load_classifier(std::istream& in, const std::string& source) {
    Reader r(in, source);
    const auto magic = r.words(kMagic);
    if (magic.size() != 1 || magic[0] != "v" + std::to_string(kVersion))
        r.fail("unsupported classifier version");
    TrainedClassifier c;
    try {
        c.kind = parse_learner_kind(r.keyed("kind"));
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        r.fail(e.what());
    }
    c.train_seed = r.u64(r.keyed("train_seed"));
    const auto lay = r.words("layout");
    if (lay.size() != 4) r.fail("layout needs 4 fields");
    c.layout.with_dwt = r.u64(lay[0]) != 0;
    c.layout.dwt_levels = static_cast<int>(r.u64(lay[1]));
    c.layout.series_len = r.u64(lay[2]);
    c.layout.feature_count = r.u64(lay[3]);
    try {
        if (!(make_layout(c.layout.with_dwt, c.layout.dwt_levels, c.layout.series_len) == c.layout))
            r.fail("inconsistent layout");
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        r.fail(e.what());
    }
    const auto n_labels = r.u64(r.keyed("labels"));
    for (std::uint64_t i = 0; i < n_labels; ++i) c.label_names.push_back(r.line());
    for (const auto& w : r.words("shape")) c.shape.push_back(r.u64(w));
    c.series_scale = r.real(r.keyed("series_scale"));
    c.scaling.mean = r.reals("scaling_mean");
    c.scaling.scale = r.reals("scaling_scale");
    c.params = r.reals("params");
    if (r.line() != "end") r.fail("expected 'end'");
    if (c.scaling.mean.size() != c.layout.feature_count || c.scaling.scale.size() != c.layout.feature_count)
        r.fail("scaling width does not match the layout");
    if (c.params.size() != expected_params(c) || c.params.empty())
        r.fail("parameter count does not match the shape");
    if (!shape_consistent(c)) r.fail("shape does not match the labels and layout");
    return c;
}

}  // namespace bwleak

namespace bwleak {

std::vector<ProfileRun> runs_for_model(const std::vector<ProfileRun>& runs, const ModelSpec& model) {
    std::set<std::string> types;
    for (const auto& l : model.layers)
        if (l.loads_weights()) types.insert(l.type_label());
    std::vector<ProfileRun> out;
    for (const auto& r : runs)
        if (types.count(r.layer_type)) out.push_back(r);
    return out;
}

BenchmarkResult run_classifier_benchmark(const std::vector<ModelSpec>& models, const NpuConfig& npu,
                                         const BenchmarkParams& params, std::uint64_t seed) {
    if (models.empty()) throw Error("the classifier benchmark needs at least one model");
    const auto runs = profile_runs(models, npu, params.runs, derive_seed(seed, 0));
    const std::vector<std::pair<std::string, LearnerKind>> learners{
        {"SVM", LearnerKind::svm}, {"MLP", LearnerKind::mlp}, {"CNN", LearnerKind::cnn}};

    BenchmarkResult res;
    for (const auto& m : models) res.models.push_back(m.name);
    for (const auto& [name, kind] : learners)
        for (bool dwt : {true, false})
            res.rows.push_back({name + (dwt ? " w/ DWT" : " w/o DWT"), {}, 0});
    res.rows.push_back({"Time only", {}, 0});

    std::vector<double> layer_weight;
    for (std::size_t mi = 0; mi < models.size(); ++mi) {
        const ModelSpec& m = models[mi];
        double weight = 0;
        for (const auto& l : m.layers) weight += l.loads_weights() ? 1 : 0;
        layer_weight.push_back(weight);
        const auto mine = runs_for_model(runs, m);
        const std::uint64_t split_seed = derive_seed(seed, 1000 + mi);
        const std::uint64_t train_seed = derive_seed(seed, 2000 + mi);
        std::size_t row = 0;
        auto record = [&](const TrainedClassifier& clf, const Dataset& test) {
            res.rows[row].per_model.push_back(model_weighted_accuracy(evaluate(clf, test), test, m));
            res.classifiers.push_back({m.name, res.rows[row].learner, clf});
            ++row;
        };
        DatasetSplit split[2];
        for (int d = 0; d < 2; ++d) {
            const Dataset ds = build_dataset(mine, make_layout(d == 0, params.dwt_levels, params.series_len));
            split[d] = stratified_split(ds, params.test_fraction, split_seed);
        }
        for (const auto& [name, kind] : learners) {
            (void)name;
            for (int d = 0; d < 2; ++d) {
                const auto& sp = split[d];
                switch (kind) {
                case LearnerKind::svm: record(train_svm(sp.train, params.svm, train_seed), sp.test); break;
                case LearnerKind::mlp: record(train_mlp(sp.train, params.net, train_seed), sp.test); break;
                default: record(train_cnn(sp.train, params.net, train_seed), sp.test); break;
                }
            }
        }
        record(baseline_time_only(split[1].train), split[1].test);
    }
    for (auto& r : res.rows) {
        double num = 0, den = 0;
        for (std::size_t i = 0; i < r.per_model.size(); ++i) {
            if (std::isnan(r.per_model[i])) continue;
            num += layer_weight[i] * r.per_model[i];
            den += layer_weight[i];
        }
        r.overall = den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

}  // namespace bwleak
