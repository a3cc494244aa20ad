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

#include <bwleak/csv.hpp>
#include <bwleak/error.hpp>
#include <bwleak/tile_tuner.hpp>

#include <algorithm>
#include <array>
#include <string_view>
#include <cmath>
#include <limits>
#include <ostream>
#include <map>
#include <set>

namespace bwleak {

std::vector<ProfileEntry> ProfileDb::by_duration() const {
    std::vector<ProfileEntry> d = entries;
    std::stable_sort(d.begin(), d.end(), [](const ProfileEntry& a, const ProfileEntry& b) {
        return a.duration_windows < b.duration_windows;
    });
    return d;
}

std::vector<double> part_rates(std::span<const double> prefix, std::uint64_t begin,
                               std::uint64_t end, std::size_t parts, std::size_t trim) {
    if (parts == 0) throw Error("part_rates needs at least one part");
    if (end - begin > 2 * trim + parts) {
        begin += trim;
        end -= trim;
    }
    std::vector<double> out;
    const auto len = static_cast<double>(end - begin);
    for (std::size_t k = 0; k < parts; ++k) {
        const auto a = begin + static_cast<std::uint64_t>(std::llround(len * static_cast<double>(k) / static_cast<double>(parts)));
        const auto b = begin + static_cast<std::uint64_t>(std::llround(len * static_cast<double>(k + 1) / static_cast<double>(parts)));
        out.push_back(b > a ? (prefix[b] - prefix[a]) / static_cast<double>(b - a) : 0.0);
    }
    return out;
}

namespace {
std::vector<double> read_prefix(const BandwidthTrace& t) {
    std::vector<double> prefix(t.size() + 1, 0);
    for (std::size_t i = 0; i < t.size(); ++i)
        prefix[i + 1] = prefix[i] + static_cast<double>(t.read_bytes[i]);
    return prefix;
}
}  // namespace

ProfileDb build_profile_db(const std::vector<ModelSpec>& models, const NpuConfig& npu,
                           const ProfileParams& params) {
    if (models.empty()) throw Error("profile database needs at least one model");
    ProfileDb db;
    db.window_us = params.window_us;
    const double cpw = window_cycles(params.window_us, npu.clock_hz);
    std::set<std::string> seen;
    SimOptions opts;
    opts.window_us = params.window_us;
    opts.start_cycle = 0;
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
            for (const auto& cfg : ranked_configs(layer, npu, params.configs_per_layer)) {
                TileSchedule s;
                s.per_layer[0] = cfg;
                const SimResult r = simulate_inference(solo, s, npu, 0, opts);
                const LayerSpan& span = r.layer_spans.front();
                const std::vector<double> sig = r.trace.reads();
                const auto end = std::min<std::uint64_t>(
                    std::max(span.end_window, span.start_window + 1), sig.size());
                std::vector<double> body(sig.begin() + static_cast<std::ptrdiff_t>(span.start_window),
                                         sig.begin() + static_cast<std::ptrdiff_t>(end));
                ProfileEntry e;
                e.layer_type = label;
                e.config = cfg;
                e.duration_windows = static_cast<double>(span.end_cycle - span.start_cycle) / cpw;
                e.median_bw = median_of(body);
                e.mean_read_bw = static_cast<double>(r.trace.total_read()) / e.duration_windows;
                const auto prefix = read_prefix(r.trace);
                e.part_read_bw = part_rates(prefix, 0, end, params.rate_parts, params.rate_trim);
                e.tile_bytes = tiles_for(layer, cfg).bytes_per_tile;
                // The same run started later within its first window.
                for (std::size_t k = 0; k < std::max<std::size_t>(params.phases, 1); ++k) {
                    SimOptions shifted = opts;
                    shifted.start_cycle = static_cast<std::uint64_t>(
                        std::floor(cpw * static_cast<double>(k) / static_cast<double>(std::max<std::size_t>(params.phases, 1))));
                    const SimResult rk = k == 0 ? r : simulate_inference(solo, s, npu, 0, shifted);
                    const auto& sk = rk.layer_spans.front();
                    const auto stop = std::min<std::uint64_t>(std::max(sk.end_window, sk.start_window + 1),
                                                              rk.trace.size());
                    e.read_series.emplace_back(rk.trace.read_bytes.begin(),
                                               rk.trace.read_bytes.begin() + static_cast<std::ptrdiff_t>(stop));
                }
                db.entries.push_back(std::move(e));
            }
        }
    }
    return db;
}

std::vector<std::vector<double>> attack_signals(const BandwidthTrace& trace,
                                                const DetectorParams& params) {
    switch (params.channels) {
    case SignalChannels::combined:
        return {trace.combined()};
    case SignalChannels::read:
        return {trace.reads()};
    case SignalChannels::read_write:
        break;
    }
    std::vector<double> w(trace.write_bytes.begin(), trace.write_bytes.end());
    return {trace.reads(), std::move(w)};
}

Codebook fit_codebook(const std::vector<BandwidthTrace>& traces, const DetectorParams& params,
                      std::size_t k, std::uint64_t seed) {
    std::vector<std::vector<double>> feats;
    for (const auto& t : traces) {
        auto v = window_feature_vectors(attack_signals(t, params), params.features);
        feats.insert(feats.end(), std::make_move_iterator(v.begin()),
                     std::make_move_iterator(v.end()));
    }
    return build_codebook(feats, k, seed);
}

namespace {

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

double median_abs_dev(const std::vector<double>& v, double med) {
    std::vector<double> dev;
    dev.reserve(v.size());
    for (double x : v) dev.push_back(std::abs(x - med));
    return median_of(std::move(dev));
}

}  // namespace

SegmentMatcher::SegmentMatcher(const ProfileDb& profile, const DetectorParams& params)
    : sorted_(profile.by_duration()), params_(params) {
    for (const auto& e : sorted_) {
        std::vector<std::vector<double>> phases;
        for (const auto& series : e.read_series) {
            std::vector<double> pre(series.size() + 1, 0);
            for (std::size_t i = 0; i < series.size(); ++i)
                pre[i + 1] = pre[i] + static_cast<double>(series[i]);
            phases.push_back(std::move(pre));
        }
        entry_prefix_.push_back(std::move(phases));
    }
}

void SegmentMatcher::bind(const BandwidthTrace& trace) {
    prefix_ = read_prefix(trace);
    trace_ = &trace;
}

// Windows outside the trace read as zero. Gives up, returning infinity,
// once the distance is sure to exceed `cap`.
double SegmentMatcher::template_distance(const ProfileEntry& e, std::size_t phase, std::int64_t start,
                                         double cap) const {
    const auto& series = e.read_series[phase];
    const auto n = static_cast<std::int64_t>(trace_->read_bytes.size());
    const auto len = static_cast<std::int64_t>(series.size());
    const auto block = std::max<std::int64_t>(1, static_cast<std::int64_t>(params_.block_windows));
    const auto& x = trace_->read_bytes;
    const auto& ep = entry_prefix_[static_cast<std::size_t>(&e - sorted_.data())][phase];
    auto trace_sum = [&](std::int64_t a, std::int64_t b) {
        a = std::clamp<std::int64_t>(a, 0, n);
        b = std::clamp<std::int64_t>(b, 0, n);
        return prefix_[static_cast<std::size_t>(b)] - prefix_[static_cast<std::size_t>(a)];
    };
    auto block_slack = [&](std::int64_t a, std::int64_t b) {
        return params_.block_tolerance *
               (ep[static_cast<std::size_t>(b)] - ep[static_cast<std::size_t>(a)] +
                trace_sum(start + a, start + b) + params_.rate_floor * static_cast<double>(b - a));
    };
    const double total = ep.back() + trace_sum(start, start + len);
    const double body_cap = cap * params_.template_tolerance * total;
    // The worst block sets the local error; the last block is aligned to
    // the end so a layer's tail is always checked whole.
    const std::int64_t tail = std::max<std::int64_t>(0, len - block);
    double diff = 0, block_diff = 0, tail_diff = 0, worst = 0;
    std::int64_t block_start = 0;
    for (std::int64_t i = 0; i < len; ++i) {
        const std::int64_t j = start + i;
        const double v = j >= 0 && j < n ? static_cast<double>(x[static_cast<std::size_t>(j)]) : 0.0;
        const double d = std::abs(v - static_cast<double>(series[static_cast<std::size_t>(i)]));
        diff += d;
        block_diff += d;
        if (i >= tail) tail_diff += d;
        if (diff > body_cap) return std::numeric_limits<double>::infinity();
        if (i + 1 - block_start == block || i + 1 == len) {
            const double r = block_diff / block_slack(block_start, i + 1);
            if (r > cap) return std::numeric_limits<double>::infinity();
            worst = std::max(worst, r);
            block_diff = 0;
            block_start = i + 1;
        }
    }
    worst = std::max(worst, tail_diff / block_slack(tail, len));
    const double body = total > 0 ? diff / total : 0.0;
    return std::max(body / params_.template_tolerance, worst);
}

// Block sums of the first phase, for a cheap first pass over starts.
double SegmentMatcher::coarse_distance(const ProfileEntry& e, std::int64_t start) const {
    const auto& ep = entry_prefix_[static_cast<std::size_t>(&e - sorted_.data())].front();
    const auto len = static_cast<std::int64_t>(ep.size()) - 1;
    const auto n = static_cast<std::int64_t>(prefix_.size()) - 1;
    auto trace_sum = [&](std::int64_t a, std::int64_t b) {
        a = std::clamp<std::int64_t>(a, 0, n);
        b = std::clamp<std::int64_t>(b, 0, n);
        return prefix_[static_cast<std::size_t>(b)] - prefix_[static_cast<std::size_t>(a)];
    };
    constexpr std::int64_t step = 8;
    double d = 0;
    for (std::int64_t a = 0; a < len; a += step) {
        const std::int64_t b = std::min(len, a + step);
        d += std::abs(trace_sum(start + a, start + b) -
                      (ep[static_cast<std::size_t>(b)] - ep[static_cast<std::size_t>(a)]));
    }
    return d;
}

// A part may deviate by one tile's bytes on top of the relative tolerance,
// since a burst can fall on either side of a cut.
bool SegmentMatcher::rates_fit(const ProfileEntry& e, std::uint64_t begin, std::uint64_t end) const {
    const DetectorParams& p = params_;
    if (end <= begin || end >= prefix_.size()) return false;
    const auto parts = part_rates(prefix_, begin, end, p.rate_parts, p.rate_trim);
    if (e.part_read_bw.size() != parts.size()) return false;
    const double part_len = std::max(1.0, static_cast<double>(end - begin) / static_cast<double>(parts.size()));
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const double ref = e.part_read_bw[k];
        const double slack =
            p.rate_tolerance * ref + p.rate_floor + static_cast<double>(e.tile_bytes) / part_len;
        if (std::abs(parts[k] - ref) > slack) return false;
    }
    return true;
}

// A coarse pass over every start picks where to try each profiled phase.
SegmentMatch SegmentMatcher::align(const ProfileEntry& e, std::int64_t lo, std::int64_t hi) const {
    SegmentMatch m;
    if (lo > hi || e.read_series.empty()) return m;
    std::int64_t rough = lo;
    double rough_d = std::numeric_limits<double>::infinity();
    for (std::int64_t s = lo; s <= hi; ++s) {
        const double v = coarse_distance(e, s);
        if (v < rough_d) {
            rough_d = v;
            rough = s;
        }
    }
    std::int64_t at = lo;
    std::size_t at_phase = 0;
    double d = std::numeric_limits<double>::infinity();
    for (std::int64_t s = std::max(lo, rough - 2); s <= std::min(hi, rough + 2); ++s) {
        for (std::size_t k = 0; k < e.read_series.size(); ++k) {
            const double v = template_distance(e, k, s, std::min(d, 1.0));
            if (v < d) {
                d = v;
                at = s;
                at_phase = k;
            }
        }
    }
    if (d > 1) return m;
    const auto span = static_cast<std::int64_t>(e.read_series[at_phase].size());
    m.error = d;
    m.entry = &e;
    m.begin = static_cast<std::uint64_t>(std::max<std::int64_t>(at, 0));
    m.end = static_cast<std::uint64_t>(std::max<std::int64_t>(at + span, 0));
    return m;
}

// Duration and per-part read rate screen the entries cheaply before the
// survivors are aligned against the trace.
SegmentMatch SegmentMatcher::match(std::uint64_t begin, std::uint64_t end) const {
    SegmentMatch best;
    if (trace_ == nullptr || end <= begin || end >= prefix_.size()) return best;
    const DetectorParams& p = params_;
    const auto length = static_cast<double>(end - begin);
    const double reach = (length - p.tau_windows) / (1 + p.tau_relative);
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), reach,
                               [](const ProfileEntry& e, double v) { return e.duration_windows < v; });
    const double limit = (length + p.tau_windows) / (1 - std::min(p.tau_relative, 0.5));
    const auto radius = static_cast<std::int64_t>(p.align_radius);
    const auto b0 = static_cast<std::int64_t>(begin);
    const auto e0 = static_cast<std::int64_t>(end);
    for (; it != sorted_.end() && it->duration_windows <= limit; ++it) {
        const double tau = std::max(p.tau_windows + p.tau_relative * it->duration_windows, 1e-9);
        const double de = std::abs(it->duration_windows - length) / tau;
        if (de > 1 || it->read_series.empty() || !rates_fit(*it, begin, end)) continue;
        const auto span = static_cast<std::int64_t>(it->read_series.front().size());
        // Starts that also keep the aligned end within reach of `end`.
        SegmentMatch m = align(*it, std::max(b0 - radius, e0 - span - radius),
                               std::min(b0 + radius, e0 - span + radius));
        if (m.error < 0) continue;
        m.error = std::max(m.error, de);
        if (best.error < 0 || m.error < best.error) best = m;
    }
    return best;
}

std::vector<SegmentMatch> SegmentMatcher::extensions(std::uint64_t begin) const {
    std::vector<SegmentMatch> out;
    if (trace_ == nullptr) return out;
    const auto radius = static_cast<std::int64_t>(params_.align_radius);
    const auto b0 = static_cast<std::int64_t>(begin);
    for (const auto& e : sorted_) {
        if (e.read_series.empty()) continue;
        const auto span = static_cast<std::uint64_t>(e.read_series.front().size());
        if (!rates_fit(e, begin, begin + span)) continue;
        SegmentMatch m = align(e, b0 - radius, b0 + radius);
        if (m.error >= 0) out.push_back(m);
    }
    return out;
}


BoundarySet detect_boundaries(const BandwidthTrace& trace, const Codebook& codebook,
                              const ProfileDb& profile, const DetectorParams& params,
                              DetectionDiagnostics* diag) {
    if (codebook.centroids.empty()) throw Error("detect_boundaries: empty codebook");
    if (profile.entries.empty()) throw Error("detect_boundaries: empty profile database");
    if (params.bow_spans.empty()) throw Error("detect_boundaries: no bag-of-words span");
    for (auto sp : params.bow_spans)
        if (sp < 1) throw Error("detect_boundaries: bag-of-words spans must be positive");
    if (trace.size() < params.features.win_len)
        throw Error("detect_boundaries: trace shorter than one sliding window");

    const auto feats = window_feature_vectors(attack_signals(trace, params), params.features);
    std::vector<std::size_t> words;
    words.reserve(feats.size());
    for (const auto& f : feats) words.push_back(codebook.assign(f));
    SegmentMatcher matcher(profile, params);
    matcher.bind(trace);

    BoundarySet out;
    struct Candidate {
        std::uint64_t pos;
        double conf;
    };
    std::vector<Candidate> all;
    const std::size_t stride = params.features.stride;
    // A window's word flips as soon as its tail reaches the change, so the
    // first changed word starts about one window length before it.
    const double offset =
        static_cast<double>(params.features.win_len) - static_cast<double>(stride) / 2.0;
    const std::size_t m = words.size();
    for (const std::size_t s : params.bow_spans) {
        if (m < 2 * s) continue;
        // stat[j] compares words [i - s, i) with [i, i + s) for i = s + j.
        std::vector<double> stat;
        for (std::size_t i = s; i + s <= m; ++i) {
            const auto left = bow_from_words(std::span(words).subspan(i - s, s), codebook.k());
            const auto right = bow_from_words(std::span(words).subspan(i, s), codebook.k());
            stat.push_back(l1(left.normalized, right.normalized));
        }
        const double med = median_of(stat);
        const double threshold = med + params.mad_c * median_abs_dev(stat, med);
        const std::size_t r = params.suppression;
        for (std::size_t j = 0; j < stat.size(); ++j) {
            if (!(stat[j] > threshold)) continue;
            bool peak = true;
            const std::size_t lo = j >= r ? j - r : 0;
            const std::size_t hi = std::min(stat.size() - 1, j + r);
            for (std::size_t q = lo; q <= hi && peak; ++q) {
                if (q < j && stat[q] >= stat[j]) peak = false;
                if (q > j && stat[q] > stat[j]) peak = false;
            }
            if (!peak) continue;
            const double p = static_cast<double>((s + j) * stride) + offset;
            // Margin above this scale's threshold, on the [threshold, 2] range.
            const double conf = threshold < 2 ? (stat[j] - threshold) / (2 - threshold) : 1;
            all.push_back({static_cast<std::uint64_t>(std::llround(p)), std::clamp(conf, 0.0, 1.0)});
        }
        if (diag != nullptr) {
            diag->statistic.push_back(std::move(stat));
            diag->threshold.push_back(threshold);
        }
    }
    // Merge across scales: strongest first, ties to the earlier position.
    std::stable_sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
        if (a.conf != b.conf) return a.conf > b.conf;
        return a.pos < b.pos;
    });
    std::vector<Candidate> kept;
    for (const auto& c : all) {
        bool near = false;
        for (const auto& k : kept)
            if (std::abs(static_cast<double>(k.pos) - static_cast<double>(c.pos)) < params.merge_windows)
                near = true;
        if (!near) kept.push_back(c);
    }
    std::sort(kept.begin(), kept.end(), [](const Candidate& a, const Candidate& b) { return a.pos < b.pos; });
    std::vector<std::uint64_t> cand_pos;
    std::vector<double> cand_conf;
    for (const auto& c : kept) {
        cand_pos.push_back(c.pos);
        cand_conf.push_back(c.conf);
    }
    if (diag != nullptr) {
        diag->candidates = cand_pos;
        diag->candidate_confidence = cand_conf;
    }

    // Activity anchors: first and one past the last window with read traffic.
    std::uint64_t first = 0, last = trace.size();
    {
        std::size_t a = 0;
        while (a < trace.size() && trace.read_bytes[a] == 0) ++a;
        if (a < trace.size()) {
            std::size_t b = trace.size();
            while (b > a && trace.read_bytes[b - 1] == 0) --b;
            first = a;
            last = b;
        }
    }
    const auto prefix = read_prefix(trace);
    // Snap a candidate to the sharpest read-rate step near it, if there is one.
    auto refine = [&](std::uint64_t c) {
        const auto w = static_cast<std::int64_t>(params.refine_width);
        const auto r = static_cast<std::int64_t>(params.refine_radius);
        const auto lo = static_cast<std::int64_t>(first) + w, hi = static_cast<std::int64_t>(last) - w;
        std::int64_t best = static_cast<std::int64_t>(c);
        double best_step = 0;
        for (auto x = static_cast<std::int64_t>(c) - r; x <= static_cast<std::int64_t>(c) + r; ++x) {
            if (x < lo || x > hi) continue;
            const double left = (prefix[x] - prefix[x - w]) / static_cast<double>(w);
            const double right = (prefix[x + w] - prefix[x]) / static_cast<double>(w);
            const double step = std::abs(right - left);
            if (step > best_step && step > params.rate_tolerance * std::max(left, right) + params.rate_floor) {
                best_step = step;
                best = x;
            }
        }
        return static_cast<std::uint64_t>(best);
    };
    std::vector<std::uint64_t> node{first};
    std::vector<double> conf{0};
    for (std::size_t c = 0; c < cand_pos.size(); ++c) {
        if (cand_pos[c] <= first || cand_pos[c] >= last) continue;
        const auto x = params.refine_radius > 0 ? refine(cand_pos[c]) : cand_pos[c];
        if (x <= node.back() || x >= last) continue;
        node.push_back(x);
        conf.push_back(cand_conf[c]);
    }
    node.push_back(last);

    // Cheapest chain of segments from the first to the last anchor. Nodes are
    // the candidates plus the aligned ends of entries that fit after a node
    // already reached, so a boundary the histograms missed can still be
    // stepped onto.
    struct Node {
        double cost = std::numeric_limits<double>::infinity();
        std::uint64_t prev = 0;
        SegmentMatch in;  // segment ending here
        double conf = 0;
    };
    std::map<std::uint64_t, Node> nodes;
    for (std::size_t i = 0; i < node.size(); ++i) nodes[node[i]].conf = conf[i];
    nodes[first].cost = 0;
    for (auto it = nodes.begin(); it != nodes.end() && it->first < last; ++it) {
        const std::uint64_t x = it->first;
        const Node here = it->second;
        if (!std::isfinite(here.cost)) continue;
        // Only from nodes a matched segment or the first anchor leads to, and
        // only where no node lies within alignment reach of the aligned end.
        if (x == first || here.in.error >= 0) {
            const auto reach = static_cast<std::uint64_t>(params.align_radius);
            for (const SegmentMatch& m : matcher.extensions(x)) {
                if (m.error > params.extension_error || m.end <= x + reach || m.end >= last) continue;
                auto near = nodes.lower_bound(m.end - reach);
                if (near == nodes.end() || near->first > m.end + reach) nodes.emplace(m.end, Node{});
            }
        }
        for (auto jt = std::next(it); jt != nodes.end(); ++jt) {
            const std::uint64_t y = jt->first;
            const SegmentMatch m = matcher.match(x, y);
            const double c = here.cost + (m.error >= 0 ? params.segment_cost + params.mismatch_weight * m.error
                                                       : params.unmatched_cost * static_cast<double>(y - x));
            if (c < jt->second.cost) {
                jt->second.cost = c;
                jt->second.prev = x;
                jt->second.in = m;
            }
        }
    }
    std::vector<std::uint64_t> path;  // end anchor back to, not including, the first
    for (std::uint64_t v = last; v != first; v = nodes.at(v).prev) path.push_back(v);
    std::reverse(path.begin(), path.end());
    if (diag != nullptr) {
        diag->nodes.clear();
        for (const auto& [pos, nd] : nodes) diag->nodes.push_back(pos);
    }
    // A boundary sits where the aligned segment after it starts, or else
    // where the one before it ends; with neither matched it is dropped.
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        const Node& before = nodes.at(path[i]);
        const Node& after = nodes.at(path[i + 1]);
        std::uint64_t at = 0;
        if (after.in.error >= 0) at = after.in.begin;
        else if (before.in.error >= 0) at = before.in.end;
        else continue;
        if (!out.positions.empty() && at <= out.positions.back()) continue;
        out.positions.push_back(at);
        out.confidence.push_back(before.conf);
    }
    return out;
}

DetectionScore score_boundaries(const std::vector<std::uint64_t>& predicted,
                                const std::vector<std::uint64_t>& truth, double tolerance) {
    if (tolerance < 0) throw Error("matching tolerance must not be negative");
    DetectionScore r;
    r.predicted = predicted.size();
    r.truth = truth.size();
    std::vector<std::size_t> po(predicted.size()), to(truth.size());
    for (std::size_t i = 0; i < po.size(); ++i) po[i] = i;
    for (std::size_t i = 0; i < to.size(); ++i) to[i] = i;
    std::stable_sort(po.begin(), po.end(), [&](auto a, auto b) { return predicted[a] < predicted[b]; });
    std::stable_sort(to.begin(), to.end(), [&](auto a, auto b) { return truth[a] < truth[b]; });
    std::vector<char> used(truth.size(), 0);
    std::size_t lo = 0;
    for (std::size_t pi : po) {
        const double p = static_cast<double>(predicted[pi]);
        while (lo < to.size() && (used[to[lo]] || static_cast<double>(truth[to[lo]]) < p - tolerance))
            ++lo;
        for (std::size_t q = lo; q < to.size(); ++q) {
            const double t = static_cast<double>(truth[to[q]]);
            if (t > p + tolerance) break;
            if (used[to[q]] || t < p - tolerance) continue;
            used[to[q]] = 1;
            r.matched.emplace_back(pi, to[q]);
            break;
        }
    }
    const auto m = static_cast<double>(r.matched.size());
    r.precision = r.predicted ? m / static_cast<double>(r.predicted) : 0;
    r.recall = r.truth ? m / static_cast<double>(r.truth) : 0;
    return r;
}

namespace {

void finish_row(BoundaryReportRow& r) {
    const auto fp = static_cast<double>(r.predicted - r.matched);
    const auto me = static_cast<double>(r.matched_easy);
    r.na = r.predicted == 0;
    r.easy_precision = me + fp > 0 ? me / (me + fp) : 0;
    r.easy_recall = r.boundaries ? me / static_cast<double>(r.boundaries) : 0;
    r.all_precision = r.predicted ? static_cast<double>(r.matched) / static_cast<double>(r.predicted) : 0;
    r.all_recall = r.boundaries ? static_cast<double>(r.matched) / static_cast<double>(r.boundaries) : 0;
}

std::string cell(double v, bool na) { return na ? "NA" : format_fixed(v, 2); }

}  // namespace

BoundaryReportRow score_model(const std::string& model, const std::vector<std::uint64_t>& predicted,
                              const std::vector<std::uint64_t>& truth,
                              const std::vector<BoundaryLabel>& labels, double tolerance) {
    if (labels.size() != truth.size()) throw Error("boundary labels do not match the truth list");
    const DetectionScore s = score_boundaries(predicted, truth, tolerance);
    BoundaryReportRow r;
    r.model = model;
    r.predicted = predicted.size();
    r.boundaries = truth.size();
    r.matched = s.matched.size();
    for (const auto& l : labels) r.easy_boundaries += l.easy();
    for (const auto& [p, t] : s.matched) r.matched_easy += labels[t].easy();
    finish_row(r);
    return r;
}

BoundaryReportRow aggregate_rows(const std::vector<BoundaryReportRow>& rows) {
    BoundaryReportRow r;
    r.model = "overall";
    for (const auto& x : rows) {
        r.predicted += x.predicted;
        r.boundaries += x.boundaries;
        r.easy_boundaries += x.easy_boundaries;
        r.matched += x.matched;
        r.matched_easy += x.matched_easy;
    }
    finish_row(r);
    return r;
}

void write_boundary_report(std::ostream& out, const std::vector<BoundaryReportRow>& rows) {
    static constexpr std::array<std::string_view, 5> head{"model", "easy-precision", "easy-recall",
                                                          "all-precision", "all-recall"};
    static constexpr std::array<std::size_t, 5> width{11, 16, 13, 15, 10};
    auto pad = [](std::string v, std::size_t w) {
        if (v.size() < w) v.resize(w, ' ');
        return v;
    };
    std::string line;
    for (std::size_t c = 0; c < head.size(); ++c)
        line += c + 1 < head.size() ? pad(std::string(head[c]), width[c]) : std::string(head[c]);
    out << line << '\n';
    for (const auto& r : rows) {
        out << pad(r.model, std::max(width[0], r.model.size() + 1))
            << pad(cell(r.easy_precision, r.na), width[1]) << pad(cell(r.easy_recall, r.na), width[2])
            << pad(cell(r.all_precision, r.na), width[3]) << cell(r.all_recall, r.na) << '\n';
    }
}

void write_boundary_csv(std::ostream& out, const std::vector<BoundaryReportRow>& rows) {
    out << "model,easy-precision,easy-recall,all-precision,all-recall,predicted,boundaries,"
           "easy_boundaries,matched,matched_easy\n";
    auto num = [](double v, bool na) { return na ? std::string("NA") : format_double(v); };
    for (const auto& r : rows)
        out << r.model << ',' << num(r.easy_precision, r.na) << ',' << num(r.easy_recall, r.na)
            << ',' << num(r.all_precision, r.na) << ',' << num(r.all_recall, r.na) << ','
            << r.predicted << ',' << r.boundaries << ',' << r.easy_boundaries << ','
            << r.matched << ',' << r.matched_easy << '\n';
}

}  // namespace bwleak
