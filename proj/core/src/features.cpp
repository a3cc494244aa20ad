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


#include <bwleak/features.hpp>

#include <bwleak/csv.hpp>
#include <bwleak/error.hpp>
#include <bwleak/rng.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

namespace bwleak {

std::vector<std::vector<double>> sliding_windows(std::span<const double> signal,
                                                 std::size_t win_len, std::size_t stride) {
    if (win_len < 2) throw Error("sliding window length must be at least 2");
    if (stride < 1) throw Error("sliding window stride must be at least 1");
    std::vector<std::vector<double>> out;
    for (std::size_t s = 0; s + win_len <= signal.size(); s += stride)
        out.emplace_back(signal.begin() + s, signal.begin() + s + win_len);
    return out;
}

HaarCoefficients haar_dwt(std::span<const double> signal, int levels) {
    if (levels < 1) throw Error("haar_dwt needs at least one level");
    if (signal.empty()) throw Error("haar_dwt of an empty signal");
    const std::size_t block = std::size_t{1} << levels;
    const std::size_t n = (signal.size() + block - 1) / block * block;
    std::vector<double> cur(signal.begin(), signal.end());
    cur.resize(n, signal.back());
    HaarCoefficients c;
    c.padded_length = n;
    const double r = 1.0 / std::sqrt(2.0);
    for (int l = 0; l < levels; ++l) {
        const std::size_t half = cur.size() / 2;
        std::vector<double> a(half), d(half);
        for (std::size_t i = 0; i < half; ++i) {
            a[i] = (cur[2 * i] + cur[2 * i + 1]) * r;
            d[i] = (cur[2 * i] - cur[2 * i + 1]) * r;
        }
        c.details.push_back(std::move(d));
        cur = std::move(a);
    }
    c.approx = std::move(cur);
    return c;
}

std::vector<double> haar_idwt(const HaarCoefficients& c) {
    const double r = 1.0 / std::sqrt(2.0);
    std::vector<double> cur = c.approx;
    for (auto it = c.details.rbegin(); it != c.details.rend(); ++it) {
        const auto& d = *it;
        if (d.size() != cur.size()) throw Error("haar_idwt: inconsistent coefficient lengths");
        std::vector<double> up(2 * cur.size());
        for (std::size_t i = 0; i < cur.size(); ++i) {
            up[2 * i] = (cur[i] + d[i]) * r;
            up[2 * i + 1] = (cur[i] - d[i]) * r;
        }
        cur = std::move(up);
    }
    return cur;
}

std::vector<double> WindowFeatures::vector() const { return vector(FeatureMask{}); }

std::vector<double> WindowFeatures::vector(const FeatureMask& mask) const {
    std::vector<double> v;
    if (mask.stats) v = {total_bytes, median_bw, peak_bw, std_bw};
    if (mask.approx) v.insert(v.end(), dwt_approx.begin(), dwt_approx.end());
    if (mask.details)
        for (const auto& d : dwt_detail) v.insert(v.end(), d.begin(), d.end());
    return v;
}

WindowFeatures extract_features(std::span<const double> segment, int dwt_levels) {
    if (segment.empty()) throw Error("extract_features of an empty segment");
    WindowFeatures f;
    const auto n = static_cast<double>(segment.size());
    f.total_bytes = std::accumulate(segment.begin(), segment.end(), 0.0);
    std::vector<double> sorted(segment.begin(), segment.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size() / 2;
    f.median_bw = sorted.size() % 2 == 1 ? sorted[m] : (sorted[m - 1] + sorted[m]) / 2;
    f.peak_bw = sorted.back();
    const double mean = f.total_bytes / n;
    double ss = 0;
    for (double x : segment) ss += (x - mean) * (x - mean);
    f.std_bw = std::sqrt(ss / n);
    HaarCoefficients c = haar_dwt(segment, dwt_levels);
    f.dwt_approx = std::move(c.approx);
    f.dwt_detail = std::move(c.details);
    return f;
}

std::vector<std::vector<double>> window_feature_vectors(std::span<const double> signal,
                                                        const FeatureParams& p) {
    std::vector<std::vector<double>> out;
    for (const auto& seg : sliding_windows(signal, p.win_len, p.stride))
        out.push_back(extract_features(seg, p.dwt_levels).vector(p.mask));
    return out;
}

std::vector<std::vector<double>> window_feature_vectors(
    const std::vector<std::vector<double>>& signals, const FeatureParams& p) {
    std::vector<std::vector<double>> out;
    for (const auto& sig : signals) {
        auto part = window_feature_vectors(sig, p);
        if (out.empty()) {
            out = std::move(part);
            continue;
        }
        if (part.size() != out.size()) throw Error("signals differ in length");
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i].insert(out[i].end(), part[i].begin(), part[i].end());
    }
    return out;
}

std::vector<std::string> feature_columns(std::size_t win_len, int dwt_levels) {
    std::vector<std::string> cols{"total_bytes", "median_bw", "peak_bw", "std_bw"};
    const std::size_t block = std::size_t{1} << dwt_levels;
    std::size_t len = (win_len + block - 1) / block * block;
    for (std::size_t i = 0; i < (len >> dwt_levels); ++i) cols.push_back("approx_" + std::to_string(i));
    for (int l = 1; l <= dwt_levels; ++l) {
        len /= 2;
        for (std::size_t i = 0; i < len; ++i)
            cols.push_back("detail" + std::to_string(l) + "_" + std::to_string(i));
    }
    return cols;
}

void write_feature_csv(std::ostream& out, const std::vector<std::string>& columns,
                       const std::vector<std::vector<double>>& rows) {
    out << "segment";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != columns.size()) throw Error("feature row width mismatch");
        out << i;
        for (double v : rows[i]) out << ',' << format_double(v);
        out << '\n';
    }
}

Standardizer Standardizer::fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw Error("cannot standardize an empty set");
    const std::size_t d = rows.front().size();
    Standardizer s;
    s.mean.assign(d, 0);
    s.scale.assign(d, 0);
    for (const auto& r : rows) {
        if (r.size() != d) throw Error("feature rows differ in width");
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += r[j];
    }
    for (auto& m : s.mean) m /= static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) s.scale[j] += (r[j] - s.mean[j]) * (r[j] - s.mean[j]);
    for (auto& v : s.scale) {
        v = std::sqrt(v / static_cast<double>(rows.size()));
        if (!(v > 1e-12)) v = 1.0;
    }
    return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
    if (x.size() != mean.size()) throw Error("feature width does not match the standardizer");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t j = 0; j < a.size(); ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return s;
}

std::size_t nearest(const std::vector<std::vector<double>>& centroids, std::span<const double> x) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = sq_dist(centroids[c], x);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace

std::size_t Codebook::assign(std::span<const double> raw) const {
    if (centroids.empty()) throw Error("empty codebook");
    return nearest(centroids, scaling.apply(raw));
}

Codebook build_codebook(const std::vector<std::vector<double>>& features, std::size_t k,
                        std::uint64_t seed, int max_iterations) {
    if (k < 1) throw Error("codebook size must be at least 1");
    if (features.size() < k) throw Error("fewer feature vectors than codebook entries");
    Codebook cb;
    cb.scaling = Standardizer::fit(features);
    std::vector<std::vector<double>> pts;
    pts.reserve(features.size());
    for (const auto& f : features) pts.push_back(cb.scaling.apply(f));

    // Farthest-point seeding over distinct points only.
    std::set<std::vector<double>> seen;
    std::vector<std::size_t> distinct;
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (seen.insert(pts[i]).second) distinct.push_back(i);
    if (distinct.size() < k) {
        cb.collapsed = true;
        k = distinct.size();
    }
    Rng rng(seed);
    std::vector<std::vector<double>>& cent = cb.centroids;
    cent.push_back(pts[distinct[rng.below(distinct.size())]]);
    std::vector<double> mind(pts.size(), std::numeric_limits<double>::infinity());
    while (cent.size() < k) {
        std::size_t pick = distinct.front();
        double far = -1;
        for (std::size_t i : distinct) {
            mind[i] = std::min(mind[i], sq_dist(pts[i], cent.back()));
            if (mind[i] > far) {
                far = mind[i];
                pick = i;
            }
        }
        cent.push_back(pts[pick]);
    }

    std::vector<std::size_t> label(pts.size(), k);
    for (int it = 0; it < max_iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const std::size_t c = nearest(cent, pts[i]);
            if (c != label[i]) {
                label[i] = c;
                changed = true;
            }
        }
        if (!changed) break;
        const std::size_t d = pts.front().size();
        std::vector<std::vector<double>> sum(k, std::vector<double>(d, 0));
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            ++count[label[i]];
            for (std::size_t j = 0; j < d; ++j) sum[label[i]][j] += pts[i][j];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) continue;  // an emptied cluster keeps its centroid
            for (std::size_t j = 0; j < d; ++j) cent[c][j] = sum[c][j] / static_cast<double>(count[c]);
        }
    }
    return cb;
}

BowHistogram bow_from_words(std::span<const std::size_t> words, std::size_t k) {
    BowHistogram h;
    h.counts.assign(k, 0);
    h.normalized.assign(k, 0);
    for (std::size_t w : words) {
        if (w >= k) throw Error("word index outside the codebook");
        ++h.counts[w];
    }
    if (!words.empty())
        for (std::size_t c = 0; c < k; ++c)
            h.normalized[c] = static_cast<double>(h.counts[c]) / static_cast<double>(words.size());
    return h;
}

BowHistogram bow_encode(const std::vector<std::vector<double>>& features, const Codebook& codebook) {
    if (codebook.centroids.empty()) throw Error("empty codebook");
    std::vector<std::size_t> words;
    words.reserve(features.size());
    for (const auto& f : features) words.push_back(codebook.assign(f));
    return bow_from_words(words, codebook.k());
}

}  // namespace bwleak
